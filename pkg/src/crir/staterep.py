"""User/behavior encoding and the pooled + attention-weighted state vector.

The state for a user with history ``h_1..h_n`` is the concatenation of an
average-pooled interaction half and an attention-weighted half::

    state = [ (1/n) * sum_t (u * h_t)  ||  sum_t  Lambda(u, h_t) * h_t ]

where ``Lambda`` is a small pairwise MLP (the activation unit) producing one
raw interest weight per behavior.  Weights are deliberately not softmaxed
across the history; downstream ranking only needs their order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Dice, Embedding, Linear, Tensor, concat, mul, no_grad, reshape, sum_, take_rows

__all__ = [
    "BehaviorRecord",
    "PackedHistories",
    "RepSpec",
    "StateRepNet",
    "StateRepresentation",
    "feedback_bucket",
    "pack_histories",
]

N_FEEDBACK_BUCKETS = 5


@dataclass(frozen=True)
class BehaviorRecord:
    """One interacted item plus the feedback the user gave it.

    ``item`` is a catalog index in discrete environments and an item feature
    vector in continuous ones.
    """

    item: object
    feedback: float
    step_index: int


@dataclass(frozen=True)
class RepSpec:
    """Dimensions and environment facts the representation network needs."""

    kind: str  # "discrete" | "continuous"
    rep_dim: int
    activation_hidden: int
    max_history: int
    reward_range: tuple[float, float]
    n_users: int = 0
    n_items: int = 0
    user_dim: int = 0
    item_dim: int = 0

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.kind == "discrete" and (self.n_users <= 0 or self.n_items <= 0):
            raise ValueError("discrete RepSpec needs n_users and n_items")
        if self.kind == "continuous" and (self.user_dim <= 0 or self.item_dim <= 0):
            raise ValueError("continuous RepSpec needs user_dim and item_dim")


@dataclass
class StateRepresentation:
    state: Tensor  # [2 * rep_dim]
    weights: np.ndarray  # one raw interest weight per history entry


def feedback_bucket(feedback, lo: float, hi: float, n: int = N_FEEDBACK_BUCKETS):
    """Equal-width bucket index over the environment's reward range."""
    fb = np.asarray(feedback, dtype=np.float64)
    span = hi - lo
    if span <= 0:
        raise ValueError("reward range must have positive width")
    idx = np.floor((fb - lo) / span * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


@dataclass
class PackedHistories:
    """Histories padded to a common width with a validity mask.

    ``items`` is an int id array [B, W] for discrete environments and a float
    feature array [B, W, item_dim] for continuous ones.  Rows beyond a
    history's length are masked out.
    """

    items: np.ndarray
    feedback: np.ndarray  # [B, W]
    mask: np.ndarray  # [B, W] of 0/1
    lengths: np.ndarray  # [B]

    @property
    def batch(self) -> int:
        return self.feedback.shape[0]

    @property
    def width(self) -> int:
        return self.feedback.shape[1]


def pack_histories(histories, spec: RepSpec) -> PackedHistories:
    """Pad a list of histories, keeping only the newest ``max_history`` records.

    Each history is either a sequence of :class:`BehaviorRecord` or a
    pre-split ``(items_array, feedback_array)`` pair.
    """
    split = []
    for h in histories:
        if isinstance(h, tuple) and len(h) == 2 and isinstance(h[0], np.ndarray):
            items, fb = h
        else:
            recs = list(h)
            if spec.kind == "discrete":
                items = np.asarray([r.item for r in recs], dtype=np.int64)
            else:
                items = (
                    np.asarray([r.item for r in recs], dtype=np.float64).reshape(len(recs), spec.item_dim)
                    if recs
                    else np.zeros((0, spec.item_dim))
                )
            fb = np.asarray([r.feedback for r in recs], dtype=np.float64)
        m = spec.max_history
        if fb.shape[0] > m:
            items, fb = items[-m:], fb[-m:]
        split.append((items, fb))

    b = len(split)
    lengths = np.array([fb.shape[0] for _, fb in split], dtype=np.int64)
    w = int(lengths.max()) if b else 0
    if spec.kind == "discrete":
        items = np.zeros((b, w), dtype=np.int64)
    else:
        items = np.zeros((b, w, spec.item_dim))
    feedback = np.zeros((b, w))
    mask = np.zeros((b, w))
    for i, (it, fb) in enumerate(split):
        n = fb.shape[0]
        if n:
            items[i, :n] = it
            feedback[i, :n] = fb
            mask[i, :n] = 1.0
    return PackedHistories(items=items, feedback=feedback, mask=mask, lengths=lengths)


class StateRepNet:
    """Behavior encoder, user encoder and activation unit.

    Parameters are split into two groups: :meth:`encoder_parameters` covers
    everything that produces behavior representations (the group trained by
    the contrastive task), :meth:`context_parameters` covers the user encoder
    and activation unit (trained by the value function only).
    """

    def __init__(self, spec: RepSpec, rng: np.random.Generator):
        self.spec = spec
        d = spec.rep_dim
        if spec.kind == "discrete":
            self.user_enc = Embedding(spec.n_users, d, rng)
            self.item_enc = Embedding(spec.n_items, d, rng)
        else:
            self.user_enc = Linear(spec.user_dim, d, rng)
            self.item_enc = Linear(spec.item_dim, d, rng)
        self.feedback_emb = Embedding(N_FEEDBACK_BUCKETS, d, rng)
        self.behavior_proj = Linear(2 * d, d, rng)
        self.act_in = Linear(3 * d, spec.activation_hidden, rng)
        self.act_dice = Dice(spec.activation_hidden)
        self.act_out = Linear(spec.activation_hidden, 1, rng)

    # --- parameter groups -------------------------------------------------
    def encoder_parameters(self) -> list[Tensor]:
        return self.item_enc.parameters() + self.feedback_emb.parameters() + self.behavior_proj.parameters()

    def context_parameters(self) -> list[Tensor]:
        return self.user_enc.parameters() + self.act_in.parameters() + self.act_dice.parameters() + self.act_out.parameters()

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.context_parameters()

    def buffers(self) -> list[np.ndarray]:
        return self.act_dice.buffers()

    @property
    def grad_probe(self) -> Tensor:
        """Bias of the behavior projection; its gradient norm is what the
        training harness logs when comparing gradient sources."""
        return self.behavior_proj.bias

    # --- encoders ---------------------------------------------------------
    def encode_items(self, flat_items) -> Tensor:
        if self.spec.kind == "discrete":
            n_items = self.spec.n_items
            ids = np.asarray(flat_items)
            if ids.size and (ids.min() < 0 or ids.max() >= n_items):
                raise IndexError("item id outside catalog")
            return self.item_enc(ids)
        feats = np.asarray(flat_items, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.spec.item_dim:
            raise ValueError(f"item features must be [n, {self.spec.item_dim}], got {feats.shape}")
        return self.item_enc(Tensor(feats))

    def encode_user(self, user) -> Tensor:
        """User representation as a [1, rep_dim] tensor."""
        if self.spec.kind == "discrete":
            uid = int(user)
            if not 0 <= uid < self.spec.n_users:
                raise IndexError("user id outside user set")
            return self.user_enc(np.array([uid]))
        feats = np.asarray(user, dtype=np.float64).reshape(1, -1)
        if feats.shape[1] != self.spec.user_dim:
            raise ValueError(f"user features must have width {self.spec.user_dim}")
        return self.user_enc(Tensor(feats))

    def behavior_reps(self, packed: PackedHistories) -> Tensor:
        """Representations of every (possibly padded) history row, [B*W, rep_dim]."""
        b, w = packed.batch, packed.width
        if self.spec.kind == "discrete":
            flat = packed.items.reshape(b * w)
        else:
            flat = packed.items.reshape(b * w, self.spec.item_dim)
        item = self.encode_items(flat)
        lo, hi = self.spec.reward_range
        buckets = feedback_bucket(packed.feedback.reshape(b * w), lo, hi)
        fb = self.feedback_emb(buckets)
        return self.behavior_proj(concat([item, fb], axis=1))

    def encode_behavior(self, record: BehaviorRecord) -> Tensor:
        """Representation of a single behavior record, [rep_dim]."""
        if self.spec.kind == "discrete":
            item = self.encode_items(np.array([record.item], dtype=np.int64))
        else:
            item = self.encode_items(np.asarray(record.item, dtype=np.float64).reshape(1, -1))
        lo, hi = self.spec.reward_range
        fb = self.feedback_emb(feedback_bucket([record.feedback], lo, hi))
        h = self.behavior_proj(concat([item, fb], axis=1))
        return reshape(h, (self.spec.rep_dim,))

    def activation_unit(self, u, h) -> float:
        """Interest weight for one (user representation, behavior representation) pair."""
        d = self.spec.rep_dim
        uv = (u.values if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)).reshape(1, d)
        hv = (h.values if isinstance(h, Tensor) else np.asarray(h, dtype=np.float64)).reshape(1, d)
        w = self.interest_weights(Tensor(uv), Tensor(hv), np.ones((1, 1)), train=False)
        return w.item()

    def user_rows(self, users, packed: PackedHistories) -> Tensor:
        """User representation repeated for every history row, [B*W, rep_dim]."""
        b, w = packed.batch, packed.width
        if self.spec.kind == "discrete":
            uids = np.asarray(users, dtype=np.int64)
            if uids.size and (uids.min() < 0 or uids.max() >= self.spec.n_users):
                raise IndexError("user id outside user set")
            return self.user_enc(np.repeat(uids, w))
        feats = np.asarray(users, dtype=np.float64).reshape(b, -1)
        u = self.user_enc(Tensor(feats))
        return take_rows(u, np.repeat(np.arange(b), w))

    def interest_weights(self, u_rows: Tensor, reps: Tensor, mask_rows: np.ndarray, train: bool) -> Tensor:
        """Raw activation-unit output per row, [rows, 1]."""
        prod = mul(u_rows, reps)
        a = self.act_in(concat([u_rows, prod, reps], axis=1))
        a = self.act_dice(a, train=train, mask=mask_rows)
        return self.act_out(a)

    # --- state assembly ---------------------------------------------------
    def batch_states(self, users, packed: PackedHistories, train: bool):
        """States for a batch of (user, history) pairs.

        Returns ``(state Tensor [B, 2*rep_dim], weights ndarray [B, W])``.
        Histories of length zero yield all-zero state halves.
        """
        b, w, d = packed.batch, packed.width, self.spec.rep_dim
        if w == 0:
            return Tensor(np.zeros((b, 2 * d))), np.zeros((b, 0))
        mask_rows = packed.mask.reshape(b * w, 1)
        reps = self.behavior_reps(packed)
        u_rows = self.user_rows(users, packed)
        reps_m = mul(reps, Tensor(mask_rows))
        prod = mul(u_rows, reps_m)
        weights = self.interest_weights(u_rows, reps, mask_rows, train)
        weighted = mul(mul(weights, Tensor(mask_rows)), reps)
        inv_n = (1.0 / np.maximum(packed.lengths, 1)).reshape(b, 1)
        avg_half = mul(sum_(reshape(prod, (b, w, d)), axis=1), Tensor(inv_n))
        att_half = sum_(reshape(weighted, (b, w, d)), axis=1)
        state = concat([avg_half, att_half], axis=1)
        return state, weights.values.reshape(b, w)

    def state(self, user, history, train: bool = False) -> StateRepresentation:
        """State representation for a single (user, history) pair."""
        packed = pack_histories([history], self.spec)
        state, weights = self.batch_states([user] if self.spec.kind == "discrete" else np.asarray(user).reshape(1, -1), packed, train)
        n = int(packed.lengths[0])
        return StateRepresentation(state=reshape(state, (2 * self.spec.rep_dim,)), weights=weights[0, :n].copy())

    def ranking_weights(self, u_rows: Tensor, reps: Tensor, mask_rows: np.ndarray) -> np.ndarray:
        """Interest weights for ranking only: evaluated outside any tape so no
        gradient flows into the activation unit or user encoder."""
        with no_grad():
            w = self.interest_weights(Tensor(u_rows.values), Tensor(reps.values), mask_rows, train=False)
        return w.values

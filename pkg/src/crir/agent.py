"""DDPG actor-critic on top of the state representation network.

The critic is trained on importance-weighted squared TD error (optionally
plus the contrastive loss when the constrained mechanism is active); the
actor ascends the critic's value of its own actions.  Gradient routing
controls whether the behavior-encoder parameters receive updates from the
value loss, the contrastive loss, or both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import (
    Adam,
    Dice,
    GradError,
    Linear,
    ShapeError,
    Tape,
    Tensor,
    backward,
    concat,
    mean,
    mul,
    neg,
    sub,
    tanh,
)
from .prcl import CoefficientStrategy, SampleIndices, batched_infonce, draw_sample_indices, rank_behaviors
from .staterep import RepSpec, StateRepNet, pack_histories

__all__ = [
    "Actor",
    "Critic",
    "DDPGAgent",
    "ROUTING_MODES",
    "TRAINING_MECHANISMS",
    "TrainingMechanism",
    "exploration_sigma",
    "gradient_norm",
    "resolve_action",
    "soft_update",
]

ROUTING_MODES = ("only_rl", "only_prcl", "both")
TRAINING_MECHANISMS = ("auxiliary", "constrained")


@dataclass(frozen=True)
class TrainingMechanism:
    """How the contrastive loss reaches the parameters."""

    kind: str = "auxiliary"
    gamma_prcl: float = 0.5
    gradient_routing: str = "both"

    def __post_init__(self):
        if self.kind not in TRAINING_MECHANISMS:
            raise ValueError(f"unknown training mechanism {self.kind!r}")
        if self.gradient_routing not in ROUTING_MODES:
            raise ValueError(f"unknown gradient routing {self.gradient_routing!r}")


class Actor:
    """Three-layer MLP, Dice hidden activations, tanh-bounded output."""

    def __init__(self, state_dim: int, hidden: int, action_dim: int, rng: np.random.Generator):
        self.l1 = Linear(state_dim, hidden, rng)
        self.d1 = Dice(hidden)
        self.l2 = Linear(hidden, hidden, rng)
        self.d2 = Dice(hidden)
        self.l3 = Linear(hidden, action_dim, rng)

    def __call__(self, state: Tensor, train: bool = False) -> Tensor:
        x = self.d1(self.l1(state), train=train)
        x = self.d2(self.l2(x), train=train)
        return tanh(self.l3(x))

    def parameters(self):
        return self.l1.parameters() + self.d1.parameters() + self.l2.parameters() + self.d2.parameters() + self.l3.parameters()

    def buffers(self):
        return self.d1.buffers() + self.d2.buffers()


class Critic:
    """Three-layer MLP scoring a (state, action) pair."""

    def __init__(self, state_dim: int, action_dim: int, hidden: int, rng: np.random.Generator):
        self.l1 = Linear(state_dim + action_dim, hidden, rng)
        self.d1 = Dice(hidden)
        self.l2 = Linear(hidden, hidden, rng)
        self.d2 = Dice(hidden)
        self.l3 = Linear(hidden, 1, rng)

    def __call__(self, state: Tensor, action: Tensor, train: bool = False) -> Tensor:
        x = concat([state, action], axis=1)
        x = self.d1(self.l1(x), train=train)
        x = self.d2(self.l2(x), train=train)
        return self.l3(x)

    def parameters(self):
        return self.l1.parameters() + self.d1.parameters() + self.l2.parameters() + self.d2.parameters() + self.l3.parameters()

    def buffers(self):
        return self.d1.buffers() + self.d2.buffers()


def soft_update(online_net, target_net, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, parameters and buffers."""
    op, tp = online_net.parameters(), target_net.parameters()
    for o, t in zip(op, tp):
        if o.values.shape != t.values.shape:
            raise ShapeError(f"soft_update shape mismatch {o.values.shape} vs {t.values.shape}")
        t.values *= 1.0 - tau
        t.values += tau * o.values
    for ob, tb in zip(online_net.buffers(), target_net.buffers()):
        if ob.shape != tb.shape:
            raise ShapeError("soft_update buffer shape mismatch")
        tb *= 1.0 - tau
        tb += tau * ob


def _copy_net(dst, src) -> None:
    for d, s in zip(dst.parameters(), src.parameters()):
        d.values[...] = s.values
    for d, s in zip(dst.buffers(), src.buffers()):
        d[...] = s


def gradient_norm(param: Tensor) -> float:
    """L2 norm of one parameter's gradient."""
    if param.grad is None:
        raise GradError("gradient not populated")
    return float(np.linalg.norm(param.grad))


def resolve_action(action: np.ndarray, catalog_embeddings: np.ndarray, top_k: int) -> list[int]:
    """Catalog positions of the ``top_k`` items most cosine-similar to the
    action vector.  Zero-norm vectors score 0; ties go to the lower index."""
    e = np.asarray(catalog_embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError("catalog embeddings must be a nonempty 2-D array")
    if not 1 <= top_k <= e.shape[0]:
        raise ValueError(f"top_k {top_k} outside 1..{e.shape[0]}")
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    a_norm = np.linalg.norm(a)
    norms = np.linalg.norm(e, axis=1)
    sims = np.zeros(e.shape[0])
    if a_norm > 0:
        nz = norms > 0
        sims[nz] = (e[nz] @ a) / (norms[nz] * a_norm)
    order = np.lexsort((np.arange(e.shape[0]), -sims))
    return [int(i) for i in order[:top_k]]


def exploration_sigma(progress: float, sigma_start: float = 0.1, sigma_end: float = 0.01) -> float:
    """Linear decay over the first half of training, flat afterwards."""
    p = min(max(progress, 0.0), 1.0)
    if p >= 0.5:
        return sigma_end
    return sigma_start + (sigma_end - sigma_start) * (p / 0.5)


class DDPGAgent:
    def __init__(self, rep_spec: RepSpec, hidden: int, learning_rate: float,
                 prcl_learning_rate: float, discount: float, tau: float,
                 mechanism: TrainingMechanism, strategy: CoefficientStrategy,
                 rng: np.random.Generator):
        self.spec = rep_spec
        d = rep_spec.rep_dim
        self.state_dim = 2 * d
        self.action_dim = d
        self.discount = discount
        self.tau = tau
        self.mechanism = mechanism
        self.strategy = strategy

        self.staterep = StateRepNet(rep_spec, rng)
        self.actor = Actor(self.state_dim, hidden, self.action_dim, rng)
        self.critic = Critic(self.state_dim, self.action_dim, hidden, rng)
        blank = np.random.default_rng(0)
        self.actor_target = Actor(self.state_dim, hidden, self.action_dim, blank)
        self.critic_target = Critic(self.state_dim, self.action_dim, hidden, blank)
        _copy_net(self.actor_target, self.actor)
        _copy_net(self.critic_target, self.critic)

        self.opt_actor = Adam(self.actor.parameters(), learning_rate)
        self.opt_critic = Adam(self.critic.parameters() + self.staterep.context_parameters(), learning_rate)
        self.opt_encoder_rl = Adam(self.staterep.encoder_parameters(), learning_rate)
        self.opt_encoder_prcl = Adam(self.staterep.encoder_parameters(), prcl_learning_rate)

        self.last_rl_grad_norm = 0.0
        self.last_prcl_grad_norm = 0.0
        self._cached_states: np.ndarray | None = None

    # --- representation plumbing -------------------------------------------
    def _users_of(self, batch):
        users = [t.user for t in batch]
        return users if self.spec.kind == "discrete" else np.asarray(users, dtype=np.float64)

    def _batch_states(self, batch, next_side: bool, train: bool):
        arrays = [t.next_history_arrays() if next_side else t.history_arrays() for t in batch]
        packed = pack_histories(arrays, self.spec)
        return self.staterep.batch_states(self._users_of(batch), packed, train=train), packed

    # --- core updates -------------------------------------------------------
    def td_targets(self, batch) -> np.ndarray:
        """Bootstrap targets r + gamma * Q'(s', pi'(s')), zeroed on terminals.
        Evaluated without gradients; the critic loss treats them as constants."""
        (next_states, _), _ = self._batch_states(batch, next_side=True, train=False)
        a_next = self.actor_target(next_states)
        q_next = self.critic_target(next_states, a_next).values[:, 0]
        r = np.array([t.reward for t in batch])
        live = np.array([0.0 if t.done else 1.0 for t in batch])
        return r + self.discount * live * q_next

    def critic_update(self, batch, importance_weights, prcl_rng: np.random.Generator | None = None) -> np.ndarray:
        """One value-function step; returns |delta| per transition for the
        priority refresh.  Under the constrained mechanism the contrastive
        loss joins the TD loss on this same batch."""
        iw = np.asarray(importance_weights, dtype=np.float64).reshape(-1, 1)
        targets = self.td_targets(batch)
        actions = np.stack([t.action for t in batch])
        with Tape() as tape:
            (states, _), packed = self._batch_states(batch, next_side=False, train=True)
            q = self.critic(states, Tensor(actions), train=True)
            delta = sub(Tensor(targets.reshape(-1, 1)), q)
            loss = mean(mul(Tensor(0.5 * iw), mul(delta, delta)))
            if self.mechanism.kind == "constrained" and self.mechanism.gamma_prcl != 0.0:
                if prcl_rng is None:
                    raise ValueError("constrained mechanism needs the contrastive rng")
                term = self._constrained_term(batch, prcl_rng)
                if term is not None:
                    loss = loss + mul(Tensor(self.mechanism.gamma_prcl), term)
        backward(loss, tape)
        self.last_rl_grad_norm = gradient_norm(self.staterep.grad_probe)
        self.opt_critic.step()
        if self.mechanism.gradient_routing == "only_prcl":
            self.opt_encoder_rl.zero_grad()
        else:
            self.opt_encoder_rl.step()
        self._cached_states = states.values.copy()
        return np.abs(delta.values[:, 0])

    def _constrained_term(self, batch, rng: np.random.Generator):
        packed = pack_histories([t.history_arrays() for t in batch], self.spec)
        if packed.width == 0 or int(packed.lengths.max()) < 4:
            return None
        b, w = packed.batch, packed.width
        mask_rows = packed.mask.reshape(b * w, 1)
        reps = self.staterep.behavior_reps(packed)
        u_rows = self.staterep.user_rows(self._users_of(batch), packed)
        weights = self.staterep.ranking_weights(u_rows, reps, mask_rows).reshape(b, w)
        samples: list[tuple[int, SampleIndices]] = []
        for i in range(b):
            n = int(packed.lengths[i])
            if n < 4:
                continue
            idx = draw_sample_indices(rank_behaviors(weights[i, :n], np.arange(n)), rng)
            if idx is not None:
                samples.append((i, idx))
        if not samples:
            return None
        return batched_infonce(reps, w, samples, self.strategy)

    def actor_update(self, batch=None) -> float:
        """Ascend mean Q(s, pi(s)) through a frozen critic and encoder.

        Uses the state values cached by the last critic update unless a batch
        is given explicitly."""
        if self._cached_states is None and batch is None:
            raise RuntimeError("actor update needs a preceding critic update or an explicit batch")
        if batch is not None:
            (states, _), _ = self._batch_states(batch, next_side=False, train=False)
            state_values = states.values
        else:
            state_values = self._cached_states
        s = Tensor(state_values)
        with Tape() as tape:
            a = self.actor(s, train=True)
            q = self.critic(s, a)
            objective = mean(q)
            loss = neg(objective)
        backward(loss, tape)
        self.opt_actor.step()
        for p in self.critic.parameters():
            p.zero_grad()
        return objective.item()

    def td_error(self, transition) -> float:
        """delta = r + gamma * Q'(s', pi'(s')) - Q(s, a) for one transition."""
        target = self.td_targets([transition])[0]
        (states, _), _ = self._batch_states([transition], next_side=False, train=False)
        q = self.critic(states, Tensor(transition.action.reshape(1, -1))).values[0, 0]
        return float(target - q)

    # --- acting --------------------------------------------------------------
    def policy_action(self, user, history) -> np.ndarray:
        rep = self.staterep.state(user, history, train=False)
        a = self.actor(Tensor(rep.state.values.reshape(1, -1)))
        return a.values[0].copy()

    def select_action(self, user, history, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
        """Policy action plus clipped Gaussian exploration noise."""
        a = self.policy_action(user, history)
        if noise_sigma > 0:
            a = a + rng.normal(0.0, noise_sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def soft_update_targets(self) -> None:
        soft_update(self.actor, self.actor_target, self.tau)
        soft_update(self.critic, self.critic_target, self.tau)

    def item_embeddings(self) -> np.ndarray:
        if self.spec.kind != "discrete":
            raise ValueError("item embeddings exist only for discrete catalogs")
        return self.staterep.item_enc.table.values

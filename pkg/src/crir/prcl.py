"""Ranking-based contrastive learning over interaction histories.

Behaviors in one history are ranked by interest weight; the top behavior is
the anchor, a random behavior from the upper half (ranks 2..n//2) is the
positive, and the lower half forms the negative set.  The loss is an InfoNCE
variant whose denominator runs over the negatives only and whose value is
scaled by 1/sqrt(rank of the positive).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .numcore import (
    Adam,
    Tape,
    Tensor,
    add,
    backward,
    exp,
    log,
    mean,
    mul,
    reshape,
    select_index,
    sub,
    sum_,
    take_rows,
)
from .staterep import StateRepNet, pack_histories

__all__ = [
    "CoefficientStrategy",
    "ContrastiveSample",
    "MECHANISMS",
    "RankedHistory",
    "SampleIndices",
    "assemble_prcl_batch",
    "balanced_coefficient",
    "batched_infonce",
    "build_contrastive_sample",
    "draw_sample_indices",
    "positional_infonce",
    "prcl_update",
    "rank_behaviors",
]

logger = logging.getLogger(__name__)

MECHANISMS = ("mixed", "divided", "combined")


@dataclass(frozen=True)
class RankedHistory:
    """Permutation of behavior indices by descending interest weight."""

    order: np.ndarray  # order[r-1] = behavior index holding rank r
    ranks: np.ndarray  # ranks[i] = 1-based rank of behavior i

    def __len__(self) -> int:
        return len(self.order)


def rank_behaviors(weights, step_indices) -> RankedHistory:
    """Sort behaviors by weight descending; ties go to the newer behavior."""
    w = np.asarray(weights, dtype=np.float64)
    s = np.asarray(step_indices)
    if w.size == 0:
        raise ValueError("cannot rank an empty history")
    if w.shape != s.shape:
        raise ValueError("weights and step indices must align")
    order = np.lexsort((-s, -w))
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return RankedHistory(order=order, ranks=ranks)


@dataclass(frozen=True)
class SampleIndices:
    """Positions (into one history) chosen for a contrastive sample."""

    anchor: int
    positive: int
    positive_rank: int
    negatives: np.ndarray


def draw_sample_indices(ranked: RankedHistory, rng: np.random.Generator) -> SampleIndices | None:
    """Choose anchor/positive/negatives from a ranked history.

    The positive rank is drawn uniformly from {2..n//2}; behaviors ranked
    below n//2 are the negatives.  Histories with n < 4 have an empty
    positive candidate set and yield ``None`` (the transition is skipped).
    """
    n = len(ranked)
    half = n // 2
    if half < 2:
        return None
    k = int(rng.integers(2, half + 1))
    return SampleIndices(
        anchor=int(ranked.order[0]),
        positive=int(ranked.order[k - 1]),
        positive_rank=k,
        negatives=ranked.order[half:].copy(),
    )


@dataclass(frozen=True)
class ContrastiveSample:
    anchor: Tensor  # [d]
    positive: Tensor  # [d]
    positive_rank: int
    negatives: Tensor  # [m, d]


def build_contrastive_sample(reps: Tensor, ranked: RankedHistory, rng: np.random.Generator) -> ContrastiveSample | None:
    """Materialize a contrastive sample from a [n, d] representation tensor."""
    idx = draw_sample_indices(ranked, rng)
    if idx is None:
        return None
    anchor = reshape(take_rows(reps, np.array([idx.anchor])), (reps.values.shape[1],))
    positive = reshape(take_rows(reps, np.array([idx.positive])), (reps.values.shape[1],))
    negatives = take_rows(reps, idx.negatives)
    return ContrastiveSample(anchor=anchor, positive=positive, positive_rank=idx.positive_rank, negatives=negatives)


def balanced_coefficient(max_sequence_length: int) -> float:
    """Mean of 1/sqrt(rank) over the positive candidate ranks 2..T//2.

    Matches the average intensity of the positional strategy over a full
    history of length T (0.31830... for T = 50).
    """
    half = max_sequence_length // 2
    if half < 2:
        raise ValueError("max sequence length too short for contrastive ranks")
    ranks = np.arange(2, half + 1, dtype=np.float64)
    return float(np.mean(1.0 / np.sqrt(ranks)))


@dataclass(frozen=True)
class CoefficientStrategy:
    """Loss coefficient per sample: discriminative 1/sqrt(rank) or a constant."""

    kind: str  # "positional" | "balanced"
    balanced_value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("positional", "balanced"):
            raise ValueError(f"unknown coefficient strategy {self.kind!r}")

    @classmethod
    def positional(cls) -> "CoefficientStrategy":
        return cls(kind="positional")

    @classmethod
    def balanced(cls, max_sequence_length: int = 50) -> "CoefficientStrategy":
        return cls(kind="balanced", balanced_value=balanced_coefficient(max_sequence_length))

    def coefficient(self, rank: int) -> float:
        if self.kind == "positional":
            return 1.0 / float(np.sqrt(rank))
        return self.balanced_value


def positional_infonce(sample: ContrastiveSample, strategy: CoefficientStrategy) -> Tensor:
    """Rank-weighted InfoNCE for one sample; denominator over negatives only."""
    m = sample.negatives.values.shape[0]
    if m == 0:
        raise ValueError("contrastive sample has no negatives")
    c = strategy.coefficient(sample.positive_rank)
    neg_dots = sample.negatives @ sample.anchor  # [m]
    pos_dot = sum_(mul(sample.positive, sample.anchor))
    shift = float(neg_dots.values.max())
    lse = add(log(sum_(exp(sub(neg_dots, Tensor(shift))))), Tensor(shift))
    return mul(Tensor(c), sub(lse, pos_dot))


def batched_infonce(reps: Tensor, width: int, samples: list[tuple[int, SampleIndices]],
                    strategy: CoefficientStrategy) -> Tensor:
    """Mean loss over prepared samples against a flat [B*W, d] rep tensor.

    ``samples`` holds (batch row, SampleIndices) pairs; indices are positions
    within each history, offset internally by ``row * width``.
    """
    if not samples:
        raise ValueError("no contrastive samples to score")
    v = len(samples)
    d = reps.values.shape[1]
    anchor_rows = np.fromiter((b * width + s.anchor for b, s in samples), dtype=np.int64, count=v)
    pos_cols = np.fromiter((s.positive for _, s in samples), dtype=np.int64, count=v)
    coeff = np.fromiter((strategy.coefficient(s.positive_rank) for _, s in samples), dtype=np.float64, count=v)
    block_rows = np.empty(v * width, dtype=np.int64)
    neg_sel = np.zeros((v, width))
    for j, (b, s) in enumerate(samples):
        block_rows[j * width : (j + 1) * width] = b * width + np.arange(width)
        neg_sel[j, s.negatives] = 1.0

    anchors = take_rows(reps, anchor_rows)  # [v, d]
    anchor_rows_exp = take_rows(anchors, np.repeat(np.arange(v), width))  # [v*W, d]
    block = take_rows(reps, block_rows)  # [v*W, d]
    dots = reshape(sum_(mul(block, anchor_rows_exp), axis=1), (v, width))

    pos_dot = select_index(dots, pos_cols)  # [v]
    # max over negatives, detached: keeps exp arguments <= 0 on negative slots
    # and exactly 0 elsewhere, so the masked sum cannot overflow
    neg_vals = np.where(neg_sel > 0, dots.values, -np.inf)
    shift = neg_vals.max(axis=1, keepdims=True)  # [v, 1]
    sel = Tensor(neg_sel)
    e = mul(exp(mul(sub(dots, Tensor(shift)), sel)), sel)
    lse = add(log(sum_(e, axis=1)), Tensor(shift[:, 0]))
    losses = mul(Tensor(coeff), sub(lse, pos_dot))
    return mean(losses)


def assemble_prcl_batch(per_batch: list, random_batch: list, mechanism: str) -> list:
    """Select which transitions the contrastive pass sees.

    mixed: upcoming value-update batch plus a uniform batch; combined: the
    value-update batch only; divided: the uniform batch only.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown sampling mechanism {mechanism!r}")
    if mechanism == "mixed":
        return list(per_batch) + list(random_batch)
    if mechanism == "combined":
        return list(per_batch)
    return list(random_batch)


@dataclass
class PrclResult:
    mean_loss: float
    n_samples: int
    grad_norm: float


def prcl_update(transitions, net: StateRepNet, optimizer: Adam | None,
                strategy: CoefficientStrategy, rng: np.random.Generator,
                apply_update: bool = True) -> PrclResult:
    """One contrastive pass: recompute representations under current
    parameters, rank, sample, and backpropagate the mean loss into the
    behavior-encoder parameters.

    With ``apply_update`` false the gradient is still computed (its probe norm
    is reported) but parameters are left untouched.
    """
    batch = list(transitions)
    if not batch:
        raise ValueError("empty contrastive batch")
    packed = pack_histories([t.history_arrays() for t in batch], net.spec)
    users = [t.user for t in batch]
    if net.spec.kind == "continuous":
        users = np.asarray(users, dtype=np.float64)
    if packed.width == 0 or int(packed.lengths.max()) < 4:
        logger.warning("contrastive pass skipped: no history long enough to rank")
        return PrclResult(mean_loss=0.0, n_samples=0, grad_norm=0.0)

    b, w = packed.batch, packed.width
    mask_rows = packed.mask.reshape(b * w, 1)
    with Tape() as tape:
        reps = net.behavior_reps(packed)
        u_rows = net.user_rows(users, packed)
        weights = net.ranking_weights(u_rows, reps, mask_rows).reshape(b, w)
        samples: list[tuple[int, SampleIndices]] = []
        for i in range(b):
            n = int(packed.lengths[i])
            if n < 4:
                continue
            ranked = rank_behaviors(weights[i, :n], np.arange(n))
            idx = draw_sample_indices(ranked, rng)
            if idx is not None:
                samples.append((i, idx))
        if not samples:
            logger.warning("contrastive pass skipped: all transitions too short")
            return PrclResult(mean_loss=0.0, n_samples=0, grad_norm=0.0)
        loss = batched_infonce(reps, w, samples, strategy)
    backward(loss, tape)
    grad_norm = float(np.linalg.norm(net.grad_probe.grad))
    if apply_update and optimizer is not None:
        optimizer.step()
    else:
        for p in net.encoder_parameters():
            p.zero_grad()
    return PrclResult(mean_loss=loss.item(), n_samples=len(samples), grad_norm=grad_norm)

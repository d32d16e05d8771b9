#!/usr/bin/env python3
"""
Source Model Module

Joint distribution p(U_0 U_1 ... U_M) of the node observations, the entropic
quantities derived from it, and i.i.d. sampling of snapshot blocks.

All quantities are in bits. Variable 0 is the sink's side information; an
alphabet of size 1 means the sink observes nothing.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

try:
    from .errors import ReachbackError
except ImportError:
    from errors import ReachbackError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-9


class SourceModelError(ReachbackError):
    """Invalid joint distribution or variable selection."""


class NegativeProbability(SourceModelError):
    pass


class NotNormalized(SourceModelError):
    pass


class ShapeMismatch(SourceModelError):
    pass


class OverlappingSets(SourceModelError):
    pass


class IndexOutOfRange(SourceModelError):
    pass


@dataclass(frozen=True)
class JointPmf:
    """
    Dense joint pmf over finite alphabets.

    Build instances with new_joint_pmf(); the probability tensor is made
    read-only so a JointPmf can be shared freely.
    """

    alphabet_sizes: tuple
    probs: np.ndarray

    @property
    def num_variables(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def num_sources(self) -> int:
        """M, the number of encoding nodes (variable 0 is the sink)."""
        return len(self.alphabet_sizes) - 1

    def to_dict(self) -> dict:
        return {
            "alphabets": list(self.alphabet_sizes),
            "probs": [float(p) for p in self.probs.ravel()],
        }


@dataclass(frozen=True)
class SnapshotBlock:
    """n i.i.d. draws of (U_0, ..., U_M); samples has shape (M+1, n)."""

    n: int
    samples: np.ndarray

    def sequence(self, node: int) -> np.ndarray:
        return self.samples[node]


def new_joint_pmf(alphabet_sizes: Sequence[int], probs) -> JointPmf:
    """
    Validate and build a JointPmf.

    probs may be a nested list, a flat row-major list or an ndarray. Sums
    within NORMALIZATION_TOL of one are renormalised exactly.

    Raises:
        ShapeMismatch: probs do not fill the alphabet sizes
        NegativeProbability: an entry is negative or not finite
        NotNormalized: the entries do not sum to one
    """
    sizes = tuple(int(a) for a in alphabet_sizes)
    if not sizes or any(a < 1 for a in sizes):
        raise ShapeMismatch(f"alphabet sizes must be positive, got {list(alphabet_sizes)}")

    tensor = np.asarray(probs, dtype=float)
    expected = int(np.prod(sizes))
    if tensor.size != expected:
        raise ShapeMismatch(f"expected {expected} probabilities for alphabets {list(sizes)}, got {tensor.size}")
    if tensor.ndim != 1 and tensor.shape != sizes:
        raise ShapeMismatch(f"tensor shape {tensor.shape} does not match alphabets {sizes}")
    tensor = tensor.reshape(sizes)

    if not np.all(np.isfinite(tensor)):
        raise NegativeProbability("probabilities must be finite")
    if np.any(tensor < 0):
        raise NegativeProbability(f"negative probability {tensor.min()}")

    total = tensor.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"probabilities sum to {total}")

    tensor = tensor / total
    tensor.setflags(write=False)
    return JointPmf(alphabet_sizes=sizes, probs=tensor)


def dsbs(crossover: float) -> JointPmf:
    """Doubly symmetric binary source with no side information at the sink."""
    if not 0.0 <= crossover <= 1.0:
        raise SourceModelError(f"crossover must lie in [0, 1], got {crossover}")
    same = (1.0 - crossover) / 2.0
    diff = crossover / 2.0
    return new_joint_pmf([1, 2, 2], [[[same, diff], [diff, same]]])


def independent_pmf(marginals: Sequence[Sequence[float]]) -> JointPmf:
    """Product distribution of the given marginals (variable 0 first)."""
    tensor = np.ones(())
    for marginal in marginals:
        tensor = np.multiply.outer(tensor, np.asarray(marginal, dtype=float))
    return new_joint_pmf([len(m) for m in marginals], tensor)


def pmf_from_descriptor(descriptor: dict) -> JointPmf:
    """Build a JointPmf from the problem-spec schema: inline tensor or named generator."""
    if not isinstance(descriptor, dict):
        raise SourceModelError("source descriptor must be a mapping")
    if "dsbs" in descriptor:
        params = descriptor["dsbs"] or {}
        return dsbs(float(params.get("crossover", 0.0)))
    if "alphabets" in descriptor and "probs" in descriptor:
        return new_joint_pmf(descriptor["alphabets"], descriptor["probs"])
    raise SourceModelError("source descriptor needs 'alphabets' and 'probs', or 'dsbs'")


def _check_indices(pmf: JointPmf, *index_sets: Iterable[int]) -> list:
    checked = []
    for index_set in index_sets:
        indices = sorted(set(int(i) for i in index_set))
        for i in indices:
            if not 0 <= i < pmf.num_variables:
                raise IndexOutOfRange(f"variable {i} outside 0..{pmf.num_variables - 1}")
        checked.append(indices)
    for a, b in itertools.combinations(checked, 2):
        if set(a) & set(b):
            raise OverlappingSets(f"index sets {a} and {b} overlap")
    return checked


def _entropy_of(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-(p * np.log2(p)).sum())


def marginal(pmf: JointPmf, variables: Sequence[int]) -> JointPmf:
    """Marginal over the listed variables, axes in the order given."""
    order = [int(v) for v in variables]
    _check_indices(pmf, order)
    if len(set(order)) != len(order):
        raise OverlappingSets(f"repeated variable in {order}")
    drop = tuple(i for i in range(pmf.num_variables) if i not in order)
    reduced = pmf.probs.sum(axis=drop) if drop else pmf.probs
    kept = sorted(order)
    reduced = np.transpose(reduced, [kept.index(v) for v in order]) if order else reduced
    sizes = [pmf.alphabet_sizes[v] for v in order]
    if not sizes:
        return new_joint_pmf([1], [1.0])
    return new_joint_pmf(sizes, np.array(reduced))


def entropy(pmf: JointPmf, s: Iterable[int]) -> float:
    """H(U_S) in bits; 0 for the empty set."""
    (indices,) = _check_indices(pmf, s)
    if not indices:
        return 0.0
    drop = tuple(i for i in range(pmf.num_variables) if i not in indices)
    return _entropy_of(pmf.probs.sum(axis=drop) if drop else pmf.probs)


def conditional_entropy(pmf: JointPmf, s: Iterable[int], t: Iterable[int]) -> float:
    """H(U_S | U_T) = H(U_{S u T}) - H(U_T), clipped into its valid range."""
    s_idx, t_idx = _check_indices(pmf, s, t)
    if not s_idx:
        return 0.0
    value = entropy(pmf, s_idx + t_idx) - entropy(pmf, t_idx)
    ceiling = float(sum(np.log2(pmf.alphabet_sizes[i]) for i in s_idx))
    return min(max(value, 0.0), ceiling)


def mutual_information(pmf: JointPmf, s: Iterable[int], t: Iterable[int]) -> float:
    """I(U_S; U_T) = H(S) + H(T) - H(S u T)."""
    s_idx, t_idx = _check_indices(pmf, s, t)
    if not s_idx or not t_idx:
        return 0.0
    value = entropy(pmf, s_idx) + entropy(pmf, t_idx) - entropy(pmf, s_idx + t_idx)
    return max(value, 0.0)


def conditional_mutual_information(pmf: JointPmf, s: Iterable[int], t: Iterable[int],
                                   w: Iterable[int]) -> float:
    """I(U_S; U_T | U_W)."""
    s_idx, t_idx, w_idx = _check_indices(pmf, s, t, w)
    if not s_idx or not t_idx:
        return 0.0
    value = (entropy(pmf, s_idx + w_idx) + entropy(pmf, t_idx + w_idx)
             - entropy(pmf, s_idx + t_idx + w_idx) - entropy(pmf, w_idx))
    return max(value, 0.0)


def sample_block(pmf: JointPmf, n: int, seed) -> SnapshotBlock:
    """
    Draw n i.i.d. snapshots.

    Args:
        pmf: joint distribution of (U_0, ..., U_M)
        n: block length, at least 1
        seed: anything numpy.random.default_rng accepts (int or SeedSequence)

    Returns:
        SnapshotBlock with samples of shape (M+1, n)
    """
    if n < 1:
        raise SourceModelError(f"block length must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    flat = pmf.probs.ravel()
    draws = rng.choice(flat.size, size=n, p=flat)
    samples = np.array(np.unravel_index(draws, pmf.alphabet_sizes), dtype=np.int64)
    return SnapshotBlock(n=n, samples=samples)


def empirical_entropy(block: SnapshotBlock, s: Iterable[int]) -> float:
    """Plug-in estimate of H(U_S) from a sample."""
    indices = sorted(set(int(i) for i in s))
    if not indices:
        return 0.0
    _, counts = np.unique(block.samples[indices].T, axis=0, return_counts=True)
    return _entropy_of(counts / counts.sum())

#!/usr/bin/env python3
"""
Channel Model Module

Independent point-to-point links between nodes: discrete memoryless channels
with Blahut-Arimoto capacities, orthogonal-access Gaussian links, bare
capacities, and the network-wide LinkSet that collects them.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

try:
    from .errors import ReachbackError
    from .source_model import JointPmf, mutual_information, new_joint_pmf
except ImportError:
    from errors import ReachbackError
    from source_model import JointPmf, mutual_information, new_joint_pmf

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 100_000
MAX_STATE_SPACE = 10 ** 6
ROW_TOL = 1e-9


class ChannelModelError(ReachbackError):
    """Invalid channel or link description."""


class InvalidTransition(ChannelModelError):
    pass


class NonPositiveTau(ChannelModelError):
    pass


class NonPositiveNoise(ChannelModelError):
    pass


class InvalidLink(ChannelModelError):
    pass


class DimensionMismatch(ChannelModelError):
    pass


class StateSpaceTooLarge(ChannelModelError):
    pass


class SymbolOutOfRange(ChannelModelError):
    pass


class NoConvergence(ChannelModelError):
    """Blahut-Arimoto ran out of iterations; the best bounds are attached."""

    def __init__(self, message, lower, upper, input_pmf):
        super().__init__(message)
        self.lower = lower
        self.upper = upper
        self.input_pmf = input_pmf


@dataclass(frozen=True)
class DmcSpec:
    """Transition matrix P(y|x), one row per input symbol."""

    transition: np.ndarray

    @property
    def input_size(self) -> int:
        return self.transition.shape[0]

    @property
    def output_size(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class GaussianLink:
    """Orthogonal-access Gaussian link: time fraction, power, noise variance."""

    tau: float
    power: float
    noise_var: float


class CapacityResult(NamedTuple):
    capacity: float
    input_pmf: np.ndarray
    lower: float
    upper: float
    iterations: int
    trace: Tuple[float, ...]


Link = Union[DmcSpec, GaussianLink, float]


def new_dmc(transition) -> DmcSpec:
    """Validate a transition matrix; rows within ROW_TOL of one are renormalised."""
    matrix = np.array(transition, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InvalidTransition(f"transition must be a non-empty matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
        raise InvalidTransition("transition probabilities must be finite and non-negative")
    rows = matrix.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > ROW_TOL):
        raise InvalidTransition(f"rows must sum to 1, got {rows.tolist()}")
    matrix = matrix / rows[:, None]
    matrix.setflags(write=False)
    return DmcSpec(transition=matrix)


def bsc(p: float) -> DmcSpec:
    return new_dmc([[1 - p, p], [p, 1 - p]])


def bec(e: float) -> DmcSpec:
    """Binary erasure channel; output 2 is the erasure symbol."""
    return new_dmc([[1 - e, 0.0, e], [0.0, 1 - e, e]])


def identity_channel(k: int) -> DmcSpec:
    return new_dmc(np.eye(k))


def _divergences(transition: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(W(.|x) || q) in nats for every input x."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(transition > 0, transition / q[None, :], 1.0)
        terms = np.where(transition > 0, transition * np.log(ratio), 0.0)
    return terms.sum(axis=1)


def capacity(dmc: DmcSpec, tol: float = DEFAULT_TOL,
             max_iters: int = DEFAULT_MAX_ITERS) -> CapacityResult:
    """
    Blahut-Arimoto capacity in bits per channel use.

    Iterates from the uniform input pmf until the gap between the lower bound
    log sum_x r(x) exp(D_x) and the upper bound log max_x exp(D_x) drops
    below tol. The lower-bound sequence is returned in `trace`.

    Args:
        dmc: Channel with a validated transition matrix
        tol: Stop once upper minus lower bound falls below this
        max_iters: Iteration cap

    Returns:
        CapacityResult with the capacity, both bounds and the optimal input pmf

    Raises:
        NoConvergence: iterations exhausted; carries the best bound pair.
    """
    if tol <= 0:
        raise ChannelModelError(f"tolerance must be positive, got {tol}")
    w = dmc.transition
    r = np.full(dmc.input_size, 1.0 / dmc.input_size)
    trace: List[float] = []
    lower = upper = 0.0

    for iteration in range(1, max_iters + 1):
        q = r @ w
        d = _divergences(w, q)
        exp_d = np.exp(d - d.max())
        weighted = r @ exp_d
        lower = (d.max() + math.log(weighted)) / math.log(2)
        upper = d.max() / math.log(2)
        trace.append(lower)
        if upper - lower < tol:
            logger.debug(f"Blahut-Arimoto converged after {iteration} iterations: C={lower:.12f}")
            return CapacityResult(max(lower, 0.0), r, lower, upper, iteration, tuple(trace))
        r = r * exp_d / weighted

    logger.warning(f"Blahut-Arimoto did not converge: bounds [{lower}, {upper}]")
    raise NoConvergence(f"no convergence within {max_iters} iterations", lower, upper, r)


def gaussian_capacity(link: GaussianLink) -> float:
    """tau * 1/2 * log2(1 + P / (sigma^2 * tau)) bits per use."""
    if link.tau <= 0:
        raise NonPositiveTau(f"time fraction must be positive, got {link.tau}")
    if link.tau > 1:
        raise InvalidLink(f"time fraction cannot exceed 1, got {link.tau}")
    if link.noise_var <= 0:
        raise NonPositiveNoise(f"noise variance must be positive, got {link.noise_var}")
    if link.power < 0:
        raise InvalidLink(f"power must be non-negative, got {link.power}")
    return link.tau * 0.5 * math.log2(1.0 + link.power / (link.noise_var * link.tau))


def tdma_frame_ok(links: Sequence[GaussianLink]) -> bool:
    """Time fractions sharing one TDMA frame must not exceed the frame."""
    return sum(link.tau for link in links) <= 1.0 + 1e-12


def check_tdma_frame(links: Sequence[GaussianLink], receiver: int = 0) -> None:
    """
    Raise InvalidLink when Gaussian links sharing one receiver overbook its frame.

    Args:
        links: Gaussian links received by the same node
        receiver: Node index, used in the error message
    """
    if not tdma_frame_ok(links):
        total = sum(link.tau for link in links)
        raise InvalidLink(f"time fractions into node {receiver} sum to {total:.6g}, exceeding one frame")


def link_capacity(link: Link, tol: float = DEFAULT_TOL) -> float:
    if isinstance(link, DmcSpec):
        return capacity(link, tol=tol).capacity
    if isinstance(link, GaussianLink):
        return gaussian_capacity(link)
    value = float(link)
    if not math.isfinite(value) or value < 0:
        raise InvalidLink(f"capacity must be finite and non-negative, got {link}")
    return value


class LinkSet:
    """
    The network of independent channels on nodes 0..M (node 0 is the sink).

    Pairs missing from `links` have capacity 0.
    """

    def __init__(self, num_nodes: int, links: Dict[Tuple[int, int], Link] = None,
                 tol: float = DEFAULT_TOL):
        if num_nodes < 1:
            raise InvalidLink(f"a network needs at least one node, got {num_nodes}")
        self.num_nodes = int(num_nodes)
        self.tol = tol
        self.links: Dict[Tuple[int, int], Link] = {}
        for (i, j), link in (links or {}).items():
            self.add(i, j, link)

    def add(self, i: int, j: int, link: Link) -> None:
        if i == j:
            raise InvalidLink(f"self-loop on node {i}")
        if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
            raise InvalidLink(f"link ({i},{j}) outside nodes 0..{self.num_nodes - 1}")
        if not isinstance(link, (DmcSpec, GaussianLink)):
            link = link_capacity(link)
        self.links[(int(i), int(j))] = link
        self.__dict__.pop("capacity_matrix", None)

    @classmethod
    def from_capacities(cls, matrix) -> "LinkSet":
        """Build from a square matrix of bare capacities; the diagonal is ignored."""
        c = np.asarray(matrix, dtype=float)
        links = {(i, j): float(c[i, j]) for i in range(c.shape[0]) for j in range(c.shape[1])
                 if i != j and c[i, j] != 0}
        return cls(c.shape[0], links)

    @classmethod
    def star(cls, capacities_to_sink: Sequence[float]) -> "LinkSet":
        """Non-cooperative array: node i talks only to the sink, at C_i0."""
        links = {(i + 1, 0): float(c) for i, c in enumerate(capacities_to_sink)}
        return cls(len(capacities_to_sink) + 1, links)

    @property
    def num_sources(self) -> int:
        return self.num_nodes - 1

    @cached_property
    def capacity_matrix(self) -> np.ndarray:
        matrix = np.zeros((self.num_nodes, self.num_nodes))
        for (i, j), link in self.links.items():
            matrix[i, j] = link_capacity(link, tol=self.tol)
            logger.debug(f"C[{i},{j}] = {matrix[i, j]:.6f}")
        matrix.setflags(write=False)
        return matrix

    def dmc(self, i: int, j: int):
        link = self.links.get((i, j))
        return link if isinstance(link, DmcSpec) else None


def link_from_descriptor(descriptor: dict) -> Tuple[int, int, Link]:
    """Parse one entry of the JSON link list."""
    try:
        i, j = int(descriptor["from"]), int(descriptor["to"])
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidLink(f"link needs integer 'from' and 'to': {descriptor}") from e
    if "dmc" in descriptor:
        return i, j, new_dmc(descriptor["dmc"]["transition"])
    if "gaussian" in descriptor:
        g = descriptor["gaussian"]
        link = GaussianLink(float(g["tau"]), float(g["power"]), float(g["noise_var"]))
        gaussian_capacity(link)
        return i, j, link
    if "capacity" in descriptor:
        return i, j, link_capacity(descriptor["capacity"])
    raise InvalidLink(f"link needs one of 'dmc', 'gaussian', 'capacity': {descriptor}")


def lemma1_gap(links: Sequence[DmcSpec], joint_input: Optional[JointPmf] = None,
               seed=None) -> Tuple[float, float]:
    """
    Both sides of the independent-array inequality
    I(X_1..X_k; Y_1..Y_k) <= sum_i I(X_i; Y_i), by exact enumeration.

    Args:
        links: One DMC per array position
        joint_input: Joint pmf over the link inputs; drawn at random when None
        seed: Seed for the random joint input, ignored when one is given

    Returns:
        (joint_mi, sum_link_mi)
    """
    k = len(links)
    if joint_input is None:
        sizes = [dmc.input_size for dmc in links]
        if int(np.prod(sizes)) > MAX_STATE_SPACE:
            raise StateSpaceTooLarge(f"{int(np.prod(sizes))} joint inputs exceed {MAX_STATE_SPACE}")
        rng = np.random.default_rng(seed)
        joint_input = new_joint_pmf(sizes, rng.dirichlet(np.ones(int(np.prod(sizes)))).reshape(sizes))
    if joint_input.num_variables != k:
        raise DimensionMismatch(f"{k} links but joint input over {joint_input.num_variables} variables")
    for i, (dmc, size) in enumerate(zip(links, joint_input.alphabet_sizes)):
        if dmc.input_size != size:
            raise DimensionMismatch(f"link {i} takes {dmc.input_size} inputs, joint pmf has {size}")

    out_sizes = [dmc.output_size for dmc in links]
    state_space = int(np.prod(joint_input.alphabet_sizes)) * int(np.prod(out_sizes))
    if state_space > MAX_STATE_SPACE:
        raise StateSpaceTooLarge(f"{state_space} joint (x, y) states exceed {MAX_STATE_SPACE}")

    joint = joint_input.probs
    for i, dmc in enumerate(links):
        # append axis y_i, coupled to axis x_i
        shape = [1] * (k + i) + [dmc.output_size]
        shape[i] = dmc.input_size
        joint = joint[..., None] * dmc.transition.reshape(shape)

    pmf = new_joint_pmf(list(joint_input.alphabet_sizes) + out_sizes, joint)
    xs, ys = list(range(k)), list(range(k, 2 * k))
    joint_mi = mutual_information(pmf, xs, ys)
    sum_link_mi = sum(mutual_information(pmf, [i], [k + i]) for i in range(k))
    logger.debug(f"joint MI {joint_mi:.12f} vs sum of link MI {sum_link_mi:.12f}")
    return joint_mi, sum_link_mi


def transmit(dmc: DmcSpec, inputs, seed) -> np.ndarray:
    """Pass a symbol sequence through the channel, one independent use per symbol."""
    x = np.asarray(inputs, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= dmc.input_size):
        raise SymbolOutOfRange(f"input symbols must lie in 0..{dmc.input_size - 1}")
    rng = np.random.default_rng(seed)
    cumulative = np.cumsum(dmc.transition, axis=1)[x]
    u = rng.random(x.shape)
    y = (u[..., None] >= cumulative).sum(axis=-1)
    return np.minimum(y, dmc.output_size - 1)


def repetition_transport(dmc: DmcSpec, bits, repeat: int, seed) -> np.ndarray:
    """
    Send bits over a binary-input DMC with a repetition code and majority vote.

    Outputs are mapped back to bits by their most likely input; ties in the
    vote resolve to 0.

    Args:
        dmc: Binary-input channel
        bits: 0/1 array
        repeat: Channel uses per bit, odd for a clean majority
        seed: Seed for the channel noise

    Returns:
        Decoded bits, same shape as the input
    """
    if dmc.input_size != 2:
        raise InvalidLink("repetition transport needs a binary-input channel")
    if repeat < 1:
        raise ChannelModelError(f"repeat must be at least 1, got {repeat}")
    payload = np.asarray(bits, dtype=np.int64)
    received = transmit(dmc, np.repeat(payload, repeat), seed)
    hard = np.argmax(dmc.transition[:, received], axis=0)
    votes = hard.reshape(-1, repeat).sum(axis=1) if payload.size else np.zeros(0, dtype=np.int64)
    return (2 * votes > repeat).astype(np.int64)

#!/usr/bin/env python3
"""
Admissibility Module

Decides whether the sources can be delivered reliably to node 0: the cut
conditions over every node subset S that excludes the sink, the Slepian-Wolf
rate region, the three-node rate polytope, and the region reachable with
correlated (source-dependent) channel codes together with its rate losses.
"""

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

try:
    from .channel_model import (
        DmcSpec,
        GaussianLink,
        LinkSet,
        MAX_STATE_SPACE,
        StateSpaceTooLarge,
        capacity,
        check_tdma_frame,
        gaussian_capacity,
    )
    from .errors import ReachbackError
    from .source_model import (
        JointPmf,
        conditional_entropy,
        conditional_mutual_information,
        mutual_information,
        new_joint_pmf,
    )
except ImportError:
    from channel_model import (
        DmcSpec,
        GaussianLink,
        LinkSet,
        MAX_STATE_SPACE,
        StateSpaceTooLarge,
        capacity,
        check_tdma_frame,
        gaussian_capacity,
    )
    from errors import ReachbackError
    from source_model import (
        JointPmf,
        conditional_entropy,
        conditional_mutual_information,
        mutual_information,
        new_joint_pmf,
    )

logger = logging.getLogger(__name__)

DEFAULT_STRICT_MARGIN = 0.0
BOUNDARY_TOL = 1e-12
INTERIOR_TOL = 1e-12


class AdmissibilityError(ReachbackError):
    pass


class NodeCountMismatch(AdmissibilityError):
    pass


class DimensionMismatch(AdmissibilityError):
    pass


class WrongSourceArity(AdmissibilityError):
    pass


class InvalidRate(AdmissibilityError):
    pass


class Verdict(enum.Enum):
    ADMISSIBLE = "Admissible"
    INADMISSIBLE = "Inadmissible"


@dataclass(frozen=True)
class RateVector:
    """Bits per source symbol for nodes 1..M (rates[0] belongs to node 1)."""

    rates: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(r) for r in self.rates)
        for r in values:
            if not math.isfinite(r) or r < 0:
                raise InvalidRate(f"rates must be finite and non-negative, got {list(self.rates)}")
        object.__setattr__(self, "rates", values)

    def __len__(self):
        return len(self.rates)

    def of(self, node: int) -> float:
        return self.rates[node - 1]

    def total(self, s: Sequence[int]) -> float:
        return sum(self.rates[i - 1] for i in s)


@dataclass(frozen=True)
class CutCertificate:
    """One cut condition: required entropy against capacity leaving S."""

    s: Tuple[int, ...]
    required: float
    available: float
    slack: float
    boundary: bool = False

    def to_dict(self) -> dict:
        return {
            "S": list(self.s),
            "required": self.required,
            "available": self.available,
            "slack": self.slack,
            "boundary": self.boundary,
        }


@dataclass(frozen=True)
class AdmissibilityReport:
    verdict: Verdict
    certificates: Tuple[CutCertificate, ...]

    @property
    def admissible(self) -> bool:
        return self.verdict is Verdict.ADMISSIBLE

    @property
    def worst(self) -> Optional[CutCertificate]:
        return self.certificates[0] if self.certificates else None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "worst_slack": self.worst.slack if self.worst else None,
            "certificates": [c.to_dict() for c in self.certificates],
        }


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    violated: Optional[Tuple[int, ...]]
    certificates: Tuple[CutCertificate, ...] = ()


@dataclass(frozen=True)
class HalfPlane:
    """a*R1 + b*R2 (> or <=) rhs."""

    a: float
    b: float
    rhs: float
    strict_lower: bool
    label: str

    def holds(self, r1: float, r2: float, tol: float = 1e-12) -> bool:
        value = self.a * r1 + self.b * r2
        if self.strict_lower:
            return value >= self.rhs - tol
        return value <= self.rhs + tol


@dataclass(frozen=True)
class RatePolytope:
    halfplanes: Tuple[HalfPlane, ...]
    nonempty: bool
    vertices: Tuple[Tuple[float, float], ...]

    def contains(self, r1: float, r2: float) -> bool:
        """Strict membership: open on the entropy faces, closed on capacity faces."""
        for h in self.halfplanes:
            value = h.a * r1 + h.b * r2
            if h.strict_lower and not value > h.rhs:
                return False
            if not h.strict_lower and not value <= h.rhs:
                return False
        return True


@dataclass(frozen=True)
class RateLoss:
    delta0: float
    delta1: float
    delta2: float


def enumerate_cuts(num_sources: int) -> List[Tuple[int, ...]]:
    """Every non-empty S subset of {1..M}, smallest sets first."""
    nodes = range(1, num_sources + 1)
    return [s for size in range(1, num_sources + 1) for s in itertools.combinations(nodes, size)]


def _complement(s: Sequence[int], num_nodes: int) -> List[int]:
    return [j for j in range(num_nodes) if j not in s]


def evaluate_cuts(capacity_matrix, required_fn: Callable[[Tuple[int, ...]], float],
                  strict_margin: float = DEFAULT_STRICT_MARGIN) -> AdmissibilityReport:
    """
    Evaluate every cut condition; certificates are sorted worst (smallest slack) first.

    Admissible iff every slack exceeds strict_margin.
    """
    c = np.asarray(capacity_matrix, dtype=float)
    num_nodes = c.shape[0]
    certificates = []
    for s in enumerate_cuts(num_nodes - 1):
        rest = _complement(s, num_nodes)
        required = float(required_fn(s))
        available = float(c[np.ix_(list(s), rest)].sum())
        slack = available - required
        boundary = abs(slack) <= BOUNDARY_TOL
        if boundary:
            logger.warning(f"cut S={list(s)} sits on the boundary (slack 0)")
        certificates.append(CutCertificate(s, required, available, slack, boundary))

    certificates.sort(key=lambda cert: (cert.slack, len(cert.s), cert.s))
    admissible = all(cert.slack > strict_margin and not cert.boundary for cert in certificates)
    verdict = Verdict.ADMISSIBLE if admissible else Verdict.INADMISSIBLE
    if certificates:
        logger.info(f"{verdict.value}: worst cut S={list(certificates[0].s)} slack {certificates[0].slack:.6f}")
    return AdmissibilityReport(verdict, tuple(certificates))


def reachback_admissible(links: LinkSet, source: JointPmf,
                         strict_margin: float = DEFAULT_STRICT_MARGIN) -> AdmissibilityReport:
    """
    Cut conditions H(U_S | U_{S^c}) < sum_{i in S, j in S^c} C_ij for every S.

    Args:
        links: Network whose capacity matrix gives every cut capacity
        source: Joint pmf of (U_0, ..., U_M)
        strict_margin: Every cut needs slack above this to count as admissible

    Returns:
        AdmissibilityReport with the verdict and one certificate per cut,
        tightest first
    """
    if links.num_nodes != source.num_variables:
        raise NodeCountMismatch(f"network has {links.num_nodes} nodes, source has {source.num_variables} variables")
    num_nodes = links.num_nodes

    def required(s):
        return conditional_entropy(source, s, _complement(s, num_nodes))

    return evaluate_cuts(links.capacity_matrix, required, strict_margin)


def noncooperative_admissible(capacities: Sequence[float], source: JointPmf,
                              strict_margin: float = DEFAULT_STRICT_MARGIN) -> AdmissibilityReport:
    """Array of independent channels: node i reaches only the sink, at C_i0."""
    return reachback_admissible(LinkSet.star(capacities), source, strict_margin)


def gaussian_reachback_admissible(links: Sequence[GaussianLink], source: JointPmf,
                                  strict_margin: float = DEFAULT_STRICT_MARGIN) -> AdmissibilityReport:
    """Orthogonal-access Gaussian array; link i carries node i+1 to the sink."""
    check_tdma_frame(links)
    return noncooperative_admissible([gaussian_capacity(link) for link in links], source, strict_margin)


def slepian_wolf_member(source: JointPmf, r: RateVector) -> MembershipResult:
    """
    sum_{i in S} R_i > H(U_S | U_{S^c}) for every non-empty S of {1..M}.

    The sink's side information U_0 is always part of the conditioning.
    The violated subset reported is the one with the most negative margin.

    Returns:
        MembershipResult; certificates hold the violated subsets
    """
    if len(r) != source.num_sources:
        raise DimensionMismatch(f"{len(r)} rates for {source.num_sources} sources")
    certificates = []
    for s in enumerate_cuts(source.num_sources):
        required = conditional_entropy(source, s, _complement(s, source.num_variables))
        available = r.total(s)
        certificates.append(CutCertificate(s, required, available, available - required,
                                           abs(available - required) <= BOUNDARY_TOL))
    certificates.sort(key=lambda cert: (cert.slack, len(cert.s), cert.s))
    worst = certificates[0] if certificates else None
    member = worst is None or (worst.slack > 0 and not worst.boundary)
    return MembershipResult(member, None if member else worst.s, tuple(certificates))


def _polytope_vertices(halfplanes: Sequence[HalfPlane]) -> Tuple[Tuple[float, float], ...]:
    """
    Vertices of the closed polygon, counter-clockwise.

    Args:
        halfplanes: Faces of the polygon; strict faces are treated as closed

    Returns:
        tuple: Vertex coordinates, empty when the polygon has no interior
    """
    # rows [A | b] with A x + b <= 0
    sign = np.array([-1.0 if h.strict_lower else 1.0 for h in halfplanes])
    a = sign[:, None] * np.array([[h.a, h.b] for h in halfplanes])
    b = -sign * np.array([h.rhs for h in halfplanes])

    # Chebyshev centre: maximise the radius of a disc inside A x <= -b
    norms = np.linalg.norm(a, axis=1)
    result = linprog(c=[0.0, 0.0, -1.0], A_ub=np.column_stack([a, norms]), b_ub=-b,
                     bounds=[(None, None), (None, None), (0, None)], method="highs")
    if result.status != 0 or result.x[2] <= INTERIOR_TOL:
        return ()

    intersection = HalfspaceIntersection(np.column_stack([a, b]), result.x[:2])
    points = np.unique(np.round(intersection.intersections, 12), axis=0) + 0.0
    centre = points.mean(axis=0)
    order = np.argsort(np.arctan2(points[:, 1] - centre[1], points[:, 0] - centre[0]))
    return tuple((float(r1), float(r2)) for r1, r2 in points[order])


def three_node_polytope(source: JointPmf, c10: float, c12: float, c20: float,
                        c21: float) -> RatePolytope:
    """
    Admissible (R1, R2) for two sources and a sink: three Slepian-Wolf faces and
    three capacity faces.

    Args:
        source: Joint pmf of (U_0, U_1, U_2)
        c10, c12, c20, c21: Link capacities C_ij

    Returns:
        RatePolytope with its half-planes and counter-clockwise vertices
    """
    if source.num_sources != 2:
        raise WrongSourceArity(f"three-node polytope needs M = 2, got M = {source.num_sources}")
    h1 = conditional_entropy(source, [1], [0, 2])
    h2 = conditional_entropy(source, [2], [0, 1])
    h12 = conditional_entropy(source, [1, 2], [0])
    b1, b2, b12 = c10 + c12, c20 + c21, c10 + c20

    halfplanes = (
        HalfPlane(1, 0, h1, True, "R1 > H(U1|U2U0)"),
        HalfPlane(0, 1, h2, True, "R2 > H(U2|U1U0)"),
        HalfPlane(1, 1, h12, True, "R1+R2 > H(U1U2|U0)"),
        HalfPlane(1, 0, b1, False, "R1 <= C10+C12"),
        HalfPlane(0, 1, b2, False, "R2 <= C20+C21"),
        HalfPlane(1, 1, b12, False, "R1+R2 <= C10+C20"),
    )

    # interval bounds on R1, R2 and R1+R2: strict below, closed above
    nonempty = (h1 < b1 and h2 < b2 and h12 < b12
                and h1 + h2 < b12 and h12 < b1 + b2)

    vertices = _polytope_vertices(halfplanes)
    logger.debug(f"three-node polytope nonempty={nonempty} with {len(vertices)} vertices")
    return RatePolytope(halfplanes, nonempty, tuple(vertices))


def _correlated_code_joint(source: JointPmf, encoders: Sequence, channels: Sequence[DmcSpec],
                           max_states: int = MAX_STATE_SPACE) -> JointPmf:
    """
    Joint pmf of (U_0..U_M, X_1..X_M, Y_1..Y_M) under
    p(u) prod_i p(x_i|u_i) p(y_i|x_i).
    """
    m = source.num_sources
    if len(encoders) != m or len(channels) != m:
        raise DimensionMismatch(f"need {m} encoders and channels, got {len(encoders)} and {len(channels)}")
    encs = [np.asarray(e, dtype=float) for e in encoders]
    for i, (enc, ch) in enumerate(zip(encs, channels), start=1):
        if enc.ndim != 2 or enc.shape[0] != source.alphabet_sizes[i]:
            raise DimensionMismatch(f"encoder {i} must have {source.alphabet_sizes[i]} rows")
        if np.any(np.abs(enc.sum(axis=1) - 1) > 1e-9) or np.any(enc < 0):
            raise DimensionMismatch(f"encoder {i} rows must be probability vectors")
        if enc.shape[1] != ch.input_size:
            raise DimensionMismatch(f"encoder {i} emits {enc.shape[1]} symbols, channel takes {ch.input_size}")

    sizes = (list(source.alphabet_sizes) + [e.shape[1] for e in encs]
             + [ch.output_size for ch in channels])
    states = int(np.prod(sizes))
    if states > max_states:
        raise StateSpaceTooLarge(f"{states} joint states exceed {max_states}")

    joint = source.probs
    n_u = source.num_variables
    for i, enc in enumerate(encs, start=1):
        shape = [1] * (n_u + i - 1) + [enc.shape[1]]
        shape[i] = enc.shape[0]
        joint = joint[..., None] * enc.reshape(shape)
    for i, ch in enumerate(channels, start=1):
        shape = [1] * (n_u + m + i - 1) + [ch.output_size]
        shape[n_u + i - 1] = ch.input_size
        joint = joint[..., None] * ch.transition.reshape(shape)
    return new_joint_pmf(sizes, joint)


def _two_source_view(source: JointPmf) -> JointPmf:
    """Accept p(u1,u2) directly or p(u0,u1,u2) with a trivial U_0."""
    if source.num_variables == 2:
        return new_joint_pmf([1] + list(source.alphabet_sizes), source.probs[None, ...])
    if source.num_variables == 3 and source.alphabet_sizes[0] == 1:
        return source
    raise DimensionMismatch("rate losses are defined for two sources without sink side information")


def correlated_code_rate_loss(source: JointPmf, enc1, enc2, ch1: DmcSpec, ch2: DmcSpec) -> RateLoss:
    """
    Rate losses of correlated codes over two orthogonal channels:
    delta0 = I(Y1;Y2), delta1 = I(Y1;U2), delta2 = I(Y2;U1).
    """
    joint = _correlated_code_joint(_two_source_view(source), [enc1, enc2], [ch1, ch2])
    # axes: u0, u1, u2, x1, x2, y1, y2
    u1, u2, y1, y2 = 1, 2, 5, 6
    loss = RateLoss(
        delta0=mutual_information(joint, [y1], [y2]),
        delta1=mutual_information(joint, [y1], [u2]),
        delta2=mutual_information(joint, [y2], [u1]),
    )
    logger.debug(f"rate losses: {loss}")
    return loss


def ces_region_member(source: JointPmf, encoders: Sequence, channels: Sequence[DmcSpec],
                      strict_margin: float = DEFAULT_STRICT_MARGIN,
                      max_states: int = MAX_STATE_SPACE) -> MembershipResult:
    """
    Correlated-code sufficient condition over independent channels:
    H(U_S | U_{S^c}) < sum_{i in S} I(X_i; Y_i | U_{S^c}) for every S.

    U_{S^c} includes the sink's side information U_0.
    """
    m = source.num_sources
    joint = _correlated_code_joint(source, encoders, channels, max_states)
    n_u = source.num_variables
    x_axis = {i: n_u + i - 1 for i in range(1, m + 1)}
    y_axis = {i: n_u + m + i - 1 for i in range(1, m + 1)}

    certificates = []
    for s in enumerate_cuts(m):
        rest = _complement(s, n_u)
        required = conditional_entropy(source, s, rest)
        available = sum(conditional_mutual_information(joint, [x_axis[i]], [y_axis[i]], rest) for i in s)
        slack = available - required
        certificates.append(CutCertificate(s, required, available, slack, abs(slack) <= BOUNDARY_TOL))
    certificates.sort(key=lambda cert: (cert.slack, len(cert.s), cert.s))
    worst = certificates[0]
    member = worst.slack > strict_margin and not worst.boundary
    return MembershipResult(member, None if member else worst.s, tuple(certificates))


def channel_capacities(channels: Sequence[DmcSpec]) -> List[float]:
    return [capacity(ch).capacity for ch in channels]

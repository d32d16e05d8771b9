#!/usr/bin/env python3
"""
Flow Router Module

Treats the noiseless network (links of capacity C_ij) as a flow network with
sources 1..M and the single sink 0:

  - feasible_flow: supersource reduction to a single-source max-flow
  - min_cost_route: the linear program choosing rates and routes together
  - flow_to_schedule: turns a flow into per-node bit-partition tables
  - tree_route: best routing restricted to spanning in-trees toward the sink
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy.optimize import linprog

try:
    from .admissibility import (
        CutCertificate,
        RateVector,
        enumerate_cuts,
        reachback_admissible,
    )
    from .channel_model import LinkSet
    from .errors import InternalError, ReachbackError
    from .source_model import JointPmf, conditional_entropy
except ImportError:
    from admissibility import (
        CutCertificate,
        RateVector,
        enumerate_cuts,
        reachback_admissible,
    )
    from channel_model import LinkSet
    from errors import InternalError, ReachbackError
    from source_model import JointPmf, conditional_entropy

logger = logging.getLogger(__name__)

SINK = 0
SUPERSOURCE = "supersource"
FLOW_TOL = 1e-9
ZERO_FLOW = 1e-12
DEFAULT_DELTA = 1e-6
MAX_TREE_NODES = 8

Edge = Tuple[int, int]


class FlowRouterError(ReachbackError):
    pass


class Infeasible(FlowRouterError):
    """No admissible rates/routes; `certificate` holds the worst cut."""

    exit_code = 1

    def __init__(self, message, certificate: Optional[CutCertificate] = None):
        super().__init__(message)
        self.certificate = certificate


class CyclicResidual(FlowRouterError):
    pass


class BlockTooSmall(FlowRouterError):
    pass


class TooManyNodes(FlowRouterError):
    pass


class FlowInvariantViolation(FlowRouterError):
    pass


class NegativeCost(FlowRouterError):
    pass


@dataclass(frozen=True)
class FlowAssignment:
    """
    Net flow phi (skew-symmetric matrix, bits per source symbol) with the
    supplies R_i it carries. `capacities` is kept when known so schedules can
    use the full per-edge budget.
    """

    phi: np.ndarray
    supplies: RateVector
    capacities: Optional[np.ndarray] = None

    @classmethod
    def from_gross(cls, gross, supplies: RateVector, capacities=None) -> "FlowAssignment":
        g = np.where(np.asarray(gross, dtype=float) > ZERO_FLOW, gross, 0.0)
        phi = g - g.T
        phi.setflags(write=False)
        return cls(phi=phi, supplies=supplies, capacities=capacities)

    @property
    def num_nodes(self) -> int:
        return self.phi.shape[0]

    def flow(self, i: int, j: int) -> float:
        return float(self.phi[i, j])

    def edges(self) -> Dict[Edge, float]:
        """Edges carrying positive flow, in (from, to) order."""
        rows, cols = np.nonzero(self.phi > ZERO_FLOW)
        return {(int(i), int(j)): float(self.phi[i, j]) for i, j in sorted(zip(rows, cols))}

    def validate(self, capacity_matrix=None, tol: float = FLOW_TOL) -> None:
        """Check capacity, skew symmetry and conservation; raise on violation."""
        phi = self.phi
        if not np.allclose(phi, -phi.T, atol=tol):
            raise FlowInvariantViolation("flow is not skew-symmetric")
        caps = self.capacities if capacity_matrix is None else np.asarray(capacity_matrix)
        if caps is not None and np.any(phi > caps + tol):
            i, j = np.argwhere(phi > caps + tol)[0]
            raise FlowInvariantViolation(f"phi({i},{j}) = {phi[i, j]} exceeds C = {caps[i, j]}")
        for i in range(1, self.num_nodes):
            out = phi[i].sum()
            if abs(out - self.supplies.of(i)) > tol * max(1, self.num_nodes):
                raise FlowInvariantViolation(f"node {i} sends {out} but supplies {self.supplies.of(i)}")
        inflow = -phi[SINK].sum()
        if abs(inflow - sum(self.supplies.rates)) > tol * max(1, self.num_nodes):
            raise FlowInvariantViolation(f"sink receives {inflow}, expected {sum(self.supplies.rates)}")

    def cost(self, costs: Mapping[Edge, float]) -> float:
        return float(sum(costs.get(e, 0.0) * x for e, x in self.edges().items()))

    def to_dict(self, cost: Optional[float] = None) -> dict:
        return {
            "edges": [{"from": i, "to": j, "bits_per_symbol": x} for (i, j), x in self.edges().items()],
            "rates": list(self.supplies.rates),
            "cost": cost,
        }


@dataclass(frozen=True)
class MinCutWitness:
    """A cut S (sink outside) whose demand exceeds the capacity leaving it."""

    s: Tuple[int, ...]
    demand: float
    cut_capacity: float

    def as_certificate(self) -> CutCertificate:
        return CutCertificate(self.s, self.demand, self.cut_capacity, self.cut_capacity - self.demand)


@dataclass(frozen=True)
class RouteResult:
    rates: RateVector
    flow: FlowAssignment
    cost: float
    status: str

    def to_dict(self) -> dict:
        payload = self.flow.to_dict(cost=self.cost)
        payload["status"] = self.status
        return payload


class BitRange(NamedTuple):
    """Bits [start, stop) of the bin index produced at `origin`."""

    origin: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class NodeTable:
    """What one node receives, adds and sends for a single block."""

    node: int
    round: int
    inbound: Tuple[Tuple[int, Tuple[BitRange, ...]], ...]
    local: Optional[BitRange]
    outbound: Tuple[Tuple[int, Tuple[BitRange, ...]], ...]

    @property
    def inbound_bits(self) -> int:
        return sum(r.size for _, ranges in self.inbound for r in ranges)

    @property
    def outbound_bits(self) -> int:
        return sum(r.size for _, ranges in self.outbound for r in ranges)

    @property
    def local_bits(self) -> int:
        return self.local.size if self.local else 0


@dataclass(frozen=True)
class RoutingSchedule:
    n: int
    topo_order: Tuple[int, ...]
    bits_per_block: Tuple[int, ...]
    edge_bits: Dict[Edge, int]
    tables: Dict[int, NodeTable]
    rounds: int

    @property
    def num_nodes(self) -> int:
        return len(self.topo_order)

    def delivered(self) -> Dict[int, Tuple[BitRange, ...]]:
        """Ranges reaching the sink, grouped by origin and sorted."""
        by_origin: Dict[int, List[BitRange]] = {}
        for _, ranges in self.tables[SINK].inbound:
            for r in ranges:
                by_origin.setdefault(r.origin, []).append(r)
        return {o: tuple(sorted(rs, key=lambda r: r.start)) for o, rs in sorted(by_origin.items())}

    def round_table(self) -> List[dict]:
        entries = []
        for node in self.topo_order:
            table = self.tables[node]
            for dest, ranges in table.outbound:
                entries.append({
                    "round": table.round,
                    "from": node,
                    "to": dest,
                    "bits": sum(r.size for r in ranges),
                    "segments": [[r.origin, r.start, r.stop] for r in ranges],
                })
        entries.sort(key=lambda e: (e["round"], e["from"], e["to"]))
        return entries

    def check_capacities(self, capacity_matrix) -> None:
        c = np.asarray(capacity_matrix)
        for (i, j), bits in self.edge_bits.items():
            if bits > math.floor(self.n * c[i, j] + FLOW_TOL):
                raise FlowInvariantViolation(f"edge ({i},{j}) carries {bits} bits, budget {math.floor(self.n * c[i, j])}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "topo_order": list(self.topo_order),
            "bits_per_block": list(self.bits_per_block),
            "rounds": self.rounds,
            "schedule": self.round_table(),
        }


@dataclass(frozen=True)
class TreeRoute:
    parents: Tuple[Edge, ...]
    loads: Dict[Edge, float]
    cost: float
    violations: Tuple[Edge, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class TreeRouteResult:
    feasible: Tuple[TreeRoute, ...]
    examined: int

    @property
    def best(self) -> Optional[TreeRoute]:
        return self.feasible[0] if self.feasible else None


def _check_rates(links: LinkSet, r: RateVector) -> None:
    if len(r) != links.num_sources:
        raise FlowRouterError(f"{len(r)} rates for {links.num_sources} sources")


def feasible_flow(links: LinkSet, r: RateVector) -> Union[FlowAssignment, MinCutWitness]:
    """
    Route supplies R_i to the sink, or prove it impossible.

    A supersource feeds node i through an edge of capacity R_i; the supplies
    are routable iff the max-flow saturates every supersource edge. Otherwise
    the source side of a minimum cut is a set S with sum R_S above the
    capacity leaving S.

    Args:
        links: Network with its capacity matrix
        r: Supplies R_1..R_M

    Returns:
        A validated FlowAssignment, or the MinCutWitness of a violated cut
    """
    _check_rates(links, r)
    c = links.capacity_matrix
    g = nx.DiGraph()
    g.add_nodes_from(range(links.num_nodes))
    for i in range(1, links.num_nodes):
        g.add_edge(SUPERSOURCE, i, capacity=r.of(i))
    for i in range(links.num_nodes):
        for j in range(links.num_nodes):
            if i != j and c[i, j] > 0:
                g.add_edge(i, j, capacity=float(c[i, j]))

    demand = sum(r.rates)
    value, flow_dict = nx.maximum_flow(g, SUPERSOURCE, SINK)
    logger.debug(f"max-flow {value:.9f} for total supply {demand:.9f}")

    if value >= demand - FLOW_TOL:
        gross = np.zeros_like(c)
        for i, targets in flow_dict.items():
            if i == SUPERSOURCE:
                continue
            for j, x in targets.items():
                gross[i, j] = x
        return FlowAssignment.from_gross(gross, r, capacities=c)

    _, (reachable, _) = nx.minimum_cut(g, SUPERSOURCE, SINK)
    s = tuple(sorted(v for v in reachable if v != SUPERSOURCE))
    rest = [j for j in range(links.num_nodes) if j not in s]
    witness = MinCutWitness(s, r.total(s), float(c[np.ix_(list(s), rest)].sum()))
    logger.info(f"supplies not routable: S={list(s)} demands {witness.demand:.6f} > {witness.cut_capacity:.6f}")
    return witness


def _validated_costs(costs: Optional[Mapping[Edge, float]]) -> Dict[Edge, float]:
    checked = {}
    for (i, j), value in (costs or {}).items():
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise NegativeCost(f"cost of ({i},{j}) must be finite and non-negative, got {value}")
        checked[(int(i), int(j))] = value
    return checked


def min_cost_route(links: LinkSet, costs: Optional[Mapping[Edge, float]] = None,
                   source: Optional[JointPmf] = None, margin: float = DEFAULT_DELTA,
                   rates: Optional[RateVector] = None) -> RouteResult:
    """
    Minimise sum c(i,j) * phi(i,j) over flows and rates.

    Constraints: 0 <= flow <= C_ij per edge, conservation with supply R_i at
    node i, and sum_{i in S} R_i >= H(U_S | U_{S^c}) + margin for every S when
    a source is given. Passing `rates` fixes the supplies (a pure transport
    problem). With all-zero costs this is the feasibility decision.

    Among optimal solutions the one with the least total flow is returned;
    remaining ties go to the lexicographically smallest edge vector, edges
    taken in (from, to) order.

    Args:
        links: Network with its capacity matrix
        costs: Per-edge cost c(i,j); missing edges cost nothing
        source: Joint pmf whose cut entropies bound the rates from below
        margin: Extra rate demanded above every conditional entropy
        rates: Fixed supplies, when the rates are not free

    Returns:
        RouteResult with the chosen rates, the flow, its cost and status

    Raises:
        Infeasible: with the worst cut as certificate.
    """
    if source is None and rates is None:
        raise FlowRouterError("min_cost_route needs a source, fixed rates, or both")
    if margin < 0:
        raise FlowRouterError(f"margin must be non-negative, got {margin}")
    if rates is not None:
        _check_rates(links, rates)
    if source is not None and source.num_variables != links.num_nodes:
        raise FlowRouterError(f"source has {source.num_variables} variables, network {links.num_nodes} nodes")
    cost_map = _validated_costs(costs)

    c = links.capacity_matrix
    num_nodes = links.num_nodes
    m = num_nodes - 1
    edges = [(i, j) for i in range(num_nodes) for j in range(num_nodes) if i != j and c[i, j] > 0]
    n_flow = len(edges)
    n_vars = n_flow + m

    objective = np.zeros(n_vars)
    for k, e in enumerate(edges):
        objective[k] = cost_map.get(e, 0.0)

    a_eq = np.zeros((m, n_vars))
    for k, (i, j) in enumerate(edges):
        if i != SINK:
            a_eq[i - 1, k] += 1.0
        if j != SINK:
            a_eq[j - 1, k] -= 1.0
    for i in range(1, num_nodes):
        a_eq[i - 1, n_flow + i - 1] = -1.0
    b_eq = np.zeros(m)

    a_ub, b_ub = None, None
    if source is not None:
        cuts = enumerate_cuts(m)
        a_ub = np.zeros((len(cuts), n_vars))
        b_ub = np.zeros(len(cuts))
        for row, s in enumerate(cuts):
            rest = [j for j in range(num_nodes) if j not in s]
            for i in s:
                a_ub[row, n_flow + i - 1] = -1.0
            b_ub[row] = -(conditional_entropy(source, s, rest) + margin)

    bounds = [(0.0, float(c[i, j])) for i, j in edges]
    for i in range(1, num_nodes):
        if rates is not None:
            bounds.append((rates.of(i), rates.of(i)))
        else:
            bounds.append((0.0, float(c[i].sum())))

    result = linprog(objective, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                     bounds=bounds, method="highs")
    logger.debug(f"routing LP status {result.status}: {result.message}")

    if result.status != 0:
        # every variable is bounded, so anything but infeasibility is a solver fault
        certificate = _infeasibility_certificate(links, source, rates, margin)
        if result.status == 2 or (certificate is not None and certificate.slack <= margin):
            raise Infeasible("no admissible rate allocation and routing exists", certificate)
        raise InternalError(f"routing LP failed with status {result.status}: {result.message}")

    best_cost = float(result.fun)
    solution = result.x

    # second pass: least total flow among optimal solutions
    tie_ub = objective[None, :]
    tie_rhs = [best_cost + 1e-9 * max(1.0, abs(best_cost))]
    a_ub2 = tie_ub if a_ub is None else np.vstack([a_ub, tie_ub])
    b_ub2 = np.array(tie_rhs) if b_ub is None else np.concatenate([b_ub, tie_rhs])
    secondary = np.concatenate([np.ones(n_flow), np.zeros(m)])
    refined = linprog(secondary, A_ub=a_ub2, b_ub=b_ub2, A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method="highs")
    if refined.status == 0:
        solution = refined.x
        total_ub = np.vstack([a_ub2, secondary[None, :]])
        total_rhs = np.concatenate([b_ub2, [refined.fun + FLOW_TOL * max(1.0, abs(refined.fun))]])
        lexicographic = _lexicographic_flows(total_ub, total_rhs, a_eq, b_eq, bounds, n_flow)
        if lexicographic is not None:
            solution = lexicographic
    else:
        logger.warning(f"tie-breaking pass failed ({refined.message}); keeping first solution")

    gross = np.zeros((num_nodes, num_nodes))
    for k, (i, j) in enumerate(edges):
        gross[i, j] = solution[k]
    chosen = rates if rates is not None else RateVector(
        tuple(max(float(x), 0.0) for x in solution[n_flow:]))
    flow = FlowAssignment.from_gross(gross, chosen, capacities=c)
    total_cost = flow.cost(cost_map)
    status = "optimal" if any(cost_map.values()) else "feasible"
    logger.info(f"routing LP {status}: cost {total_cost:.6f}, rates {list(chosen.rates)}")
    return RouteResult(chosen, flow, total_cost, status)


def _lexicographic_flows(a_ub, b_ub, a_eq, b_eq, bounds, n_flow: int) -> Optional[np.ndarray]:
    """
    Lexicographically smallest edge vector within the given polytope.

    Edge variables come first, in (i, j) order; each is minimised in turn and
    then capped at its minimum for the later passes.

    Returns:
        The solution vector, or None if a pass fails
    """
    bounds = list(bounds)
    solution = None
    for k in range(n_flow):
        unit = np.zeros(len(bounds))
        unit[k] = 1.0
        step = linprog(unit, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if step.status != 0:
            logger.warning(f"lexicographic pass on edge {k} failed ({step.message})")
            return None
        solution = step.x
        low, high = bounds[k]
        bounds[k] = (low, min(high, max(low, step.fun + FLOW_TOL)))
    return solution


def _infeasibility_certificate(links, source, rates, margin) -> Optional[CutCertificate]:
    if source is not None and rates is None:
        return reachback_admissible(links, source, strict_margin=margin).worst
    witness = feasible_flow(links, rates)
    if isinstance(witness, MinCutWitness):
        return witness.as_certificate()
    if source is not None:
        report = reachback_admissible(links, source, strict_margin=margin)
        return report.worst
    return None


def _cancel_cycles(phi: np.ndarray) -> nx.DiGraph:
    """Graph of positive-flow edges with every directed cycle cancelled."""
    g = nx.DiGraph()
    g.add_nodes_from(range(phi.shape[0]))
    for i, j in zip(*np.nonzero(phi > ZERO_FLOW)):
        g.add_edge(int(i), int(j), flow=float(phi[i, j]))

    for _ in range(g.number_of_edges() + 1):
        try:
            cycle = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            return g
        amount = min(g[u][v]["flow"] for u, v in cycle)
        logger.debug(f"cancelling cycle {cycle} carrying {amount}")
        for u, v in cycle:
            g[u][v]["flow"] -= amount
            if g[u][v]["flow"] <= ZERO_FLOW:
                g.remove_edge(u, v)
    raise CyclicResidual("flow cycles remain after cancellation")


def _block_bits(rate: float, n: int, rounding: str) -> int:
    if rounding == "floor":
        return int(math.floor(n * rate + FLOW_TOL))
    return int(math.ceil(n * rate - FLOW_TOL))


def _take(stream: List[BitRange], count: int) -> Tuple[List[BitRange], List[BitRange]]:
    """Split the first `count` bits off a list of ranges."""
    taken = []
    rest = list(stream)
    while count > 0:
        head = rest.pop(0)
        if head.size <= count:
            taken.append(head)
            count -= head.size
        else:
            taken.append(BitRange(head.origin, head.start, head.start + count))
            rest.insert(0, BitRange(head.origin, head.start + count, head.stop))
            count = 0
    return taken, rest


def flow_to_schedule(flow: FlowAssignment, n: int, rounding: str = "ceil") -> RoutingSchedule:
    """
    Per-block forwarding tables for block length n.

    Each node encodes b_i = ceil(n * R_i) bits (floor with rounding="floor").
    Integer edge loads are found on the acyclic support of the flow, staying
    as close to floor(n * phi) as the budgets floor(n * C_ij) allow. Nodes are
    visited in topological order (lowest index first, sink last); inbound
    ranges are ordered by sender, local bits go last, and the resulting
    stream is cut into outbound messages by destination index.

    Args:
        flow: Net flow with its rates
        n: Block length in source symbols
        rounding: "ceil" or "floor" for the per-node bit counts

    Returns:
        RoutingSchedule with per-node bit counts, edge loads and tables

    Raises:
        BlockTooSmall: the rounded bits do not fit into the edge budgets.
        CyclicResidual: cycle cancellation failed.
    """
    if n < 1:
        raise FlowRouterError(f"block length must be at least 1, got {n}")
    num_nodes = flow.num_nodes
    dag = _cancel_cycles(np.array(flow.phi))
    if dag.out_degree(SINK):
        raise CyclicResidual("sink forwards flow after cycle cancellation")
    order = tuple(nx.lexicographical_topological_sort(dag, key=lambda v: (v == SINK, v)))

    bits = [0] + [_block_bits(flow.supplies.of(i), n, rounding) for i in range(1, num_nodes)]

    network = nx.MultiDiGraph()
    for i in range(num_nodes):
        network.add_node(i, demand=-bits[i] if i != SINK else sum(bits))
    for u, v, data in dag.edges(data=True):
        if flow.capacities is not None:
            budget = int(math.floor(n * flow.capacities[u, v] + FLOW_TOL))
        else:
            budget = int(math.ceil(n * data["flow"] - FLOW_TOL))
        base = min(int(math.floor(n * data["flow"] + FLOW_TOL)), budget)
        if base > 0:
            network.add_edge(u, v, key="base", capacity=base, weight=-1)
        if budget > base:
            network.add_edge(u, v, key="extra", capacity=budget - base, weight=1)

    try:
        integral = nx.min_cost_flow(network)
    except nx.NetworkXUnfeasible as e:
        raise BlockTooSmall(f"block length {n} too small to fit {sum(bits)} bits into the edge budgets") from e

    edge_bits: Dict[Edge, int] = {}
    for u, targets in integral.items():
        for v, keyed in targets.items():
            total = int(sum(keyed.values()))
            if total > 0:
                edge_bits[(u, v)] = total

    levels: Dict[int, int] = {}
    received: Dict[int, Dict[int, List[BitRange]]] = {v: {} for v in range(num_nodes)}
    tables: Dict[int, NodeTable] = {}
    for node in order:
        senders = sorted(u for (u, v) in edge_bits if v == node)
        levels[node] = 1 + max(levels[u] for u in senders) if senders else 0
        inbound = tuple((u, tuple(received[node][u])) for u in senders)
        stream = [r for _, ranges in inbound for r in ranges]
        local = BitRange(node, 0, bits[node]) if bits[node] > 0 else None
        if local:
            stream.append(local)

        outbound = []
        for dest in sorted(v for (u, v) in edge_bits if u == node):
            taken, stream = _take(stream, edge_bits[(node, dest)])
            received[dest][node] = taken
            outbound.append((dest, tuple(taken)))
        if node != SINK and stream:
            raise InternalError(f"node {node} left {sum(r.size for r in stream)} bits unsent")
        tables[node] = NodeTable(node, levels[node], inbound, local, tuple(outbound))

    senders_rounds = [tables[v].round for v in order if v != SINK and tables[v].outbound]
    rounds = max(senders_rounds) + 1 if senders_rounds else 0
    schedule = RoutingSchedule(n, order, tuple(bits), edge_bits, tables, rounds)
    logger.info(f"schedule for n={n}: order {list(order)}, {rounds} round(s), {sum(bits)} bits per block")
    return schedule


def enumerate_in_trees(num_nodes: int,
                       allowed: Optional[Mapping[int, Sequence[int]]] = None) -> Iterator[Tuple[Edge, ...]]:
    """
    Every spanning in-tree toward node 0, as (child, parent) edges.

    `allowed[i]` restricts the parents node i may pick; default is any node.
    """
    nodes = list(range(1, num_nodes))
    parent: Dict[int, int] = {}

    def reaches(start: int, target: int) -> bool:
        v = start
        while v in parent:
            v = parent[v]
            if v == target:
                return True
        return False

    def assign(k: int):
        if k == len(nodes):
            yield tuple((i, parent[i]) for i in nodes)
            return
        child = nodes[k]
        candidates = allowed[child] if allowed is not None else range(num_nodes)
        for p in candidates:
            if p == child or (p != SINK and reaches(p, child)):
                continue
            parent[child] = p
            yield from assign(k + 1)
            del parent[child]

    yield from assign(0)


def evaluate_tree(tree: Sequence[Edge], r: RateVector, capacity_matrix,
                  costs: Optional[Mapping[Edge, float]] = None) -> TreeRoute:
    """Route every R_i along its unique path to the sink and price it."""
    c = np.asarray(capacity_matrix)
    parent = dict(tree)
    loads: Dict[Edge, float] = {e: 0.0 for e in tree}
    for i in parent:
        v = i
        while v != SINK:
            loads[(v, parent[v])] += r.of(i)
            v = parent[v]
    violations = tuple(e for e, load in loads.items() if load > c[e] + FLOW_TOL)
    cost = sum((costs or {}).get(e, 0.0) * load for e, load in loads.items())
    return TreeRoute(tuple(tree), loads, float(cost), violations)


def tree_route(links: LinkSet, r: RateVector,
               costs: Optional[Mapping[Edge, float]] = None) -> TreeRouteResult:
    """
    Exhaustive search over spanning in-trees toward the sink.

    Only links with positive capacity are candidate tree edges, except from
    nodes with zero rate, whose edge carries nothing unless a descendant sends.

    Returns:
        TreeRouteResult with every feasible tree, cheapest first, and the
        number of trees examined
    """
    _check_rates(links, r)
    if links.num_sources > MAX_TREE_NODES:
        raise TooManyNodes(f"tree enumeration supports at most {MAX_TREE_NODES} sources")
    cost_map = _validated_costs(costs)
    c = links.capacity_matrix
    num_nodes = links.num_nodes
    allowed = {i: [j for j in range(num_nodes) if j != i and (c[i, j] > 0 or r.of(i) == 0)]
               for i in range(1, num_nodes)}

    examined = 0
    feasible = []
    for tree in enumerate_in_trees(num_nodes, allowed):
        examined += 1
        route = evaluate_tree(tree, r, c, cost_map)
        if route.feasible:
            feasible.append(route)
    feasible.sort(key=lambda t: (t.cost, t.parents))
    logger.info(f"{len(feasible)} feasible tree(s) out of {examined} examined")
    return TreeRouteResult(tuple(feasible), examined)


def split_advantage_instance(ell: float, eps: float):
    """
    Network where only one tree is feasible and it pays for the expensive
    direct link: returns (links, rates, costs).
    """
    links = LinkSet(3, {(1, 0): 1.0 + eps, (1, 2): 1.0, (2, 0): 2.0})
    rates = RateVector((1.0 + eps, 1.0))
    costs = {(1, 0): float(ell), (1, 2): 1.0, (2, 0): 1.0}
    return links, rates, costs


def no_tree_instance():
    """Network whose supplies are routable only by splitting: (links, rates, costs)."""
    links = LinkSet(3, {(1, 0): 1.5, (2, 0): 0.5, (2, 1): 0.5})
    rates = RateVector((1.0, 1.0))
    costs = {(1, 0): 1.0, (2, 0): 1.0, (2, 1): 1.0}
    return links, rates, costs


def overpayment_factor(ell: float, eps: float) -> float:
    """Best-tree cost over optimal split cost for split_advantage_instance."""
    return (ell * (1.0 + eps) + 1.0) / (eps * ell + 3.0)

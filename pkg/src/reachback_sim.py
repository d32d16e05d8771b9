#!/usr/bin/env python3
"""
Reachback Simulation Module

Monte-Carlo estimate of the block error probability of the separate
source/network coding strategy:

  1. every node bins its length-n block into b_i = ceil(n * R_i) bits
  2. bin indices travel through the network along a RoutingSchedule
  3. the sink reassembles the indices and decodes all blocks jointly

Links are ideal bit pipes by default. Decoding is maximum likelihood over
tuples of bin-consistent sequences given the sink's own observation.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from multiprocessing import Pool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

try:
    from .admissibility import RateVector, slepian_wolf_member
    from .channel_model import LinkSet, repetition_transport
    from .errors import ReachbackError
    from .flow_router import (
        SINK,
        FlowInvariantViolation,
        Infeasible,
        MinCutWitness,
        RoutingSchedule,
        feasible_flow,
        flow_to_schedule,
    )
    from .source_model import JointPmf, sample_block
except ImportError:
    from admissibility import RateVector, slepian_wolf_member
    from channel_model import LinkSet, repetition_transport
    from errors import ReachbackError
    from flow_router import (
        SINK,
        FlowInvariantViolation,
        Infeasible,
        MinCutWitness,
        RoutingSchedule,
        feasible_flow,
        flow_to_schedule,
    )
    from source_model import JointPmf, sample_block

logger = logging.getLogger(__name__)

DEFAULT_SCAN_BUDGET = 10 ** 8
DECODE_CHUNK = 1 << 22
TABLE_CHUNK = 1 << 20
INDEX_LIMIT = 2 ** 63
CONVERSE_MARGIN = 0.1
DEFAULT_REPEAT = 5

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_2 = np.uint64(0x94D049BB133111EB)


class SimulationError(ReachbackError):
    pass


class ScanBudgetExceeded(SimulationError):
    pass


class ScheduleMismatch(SimulationError):
    pass


class InvalidConfig(SimulationError):
    pass


@dataclass(frozen=True)
class CodeConfig:
    """
    Code parameters for one block length.

    w_delay defaults to the schedule's number of rounds. k_window and
    t_window are fixed at 1.
    """

    n: int
    rates: RateVector
    w_delay: Optional[int] = None
    binning_seed: int = 0
    k_window: int = 1
    t_window: int = 1
    rounding: str = "ceil"

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfig(f"block length must be at least 1, got {self.n}")
        if self.k_window != 1 or self.t_window != 1:
            raise InvalidConfig("only K = T = 1 codes are supported")
        if self.rounding not in ("ceil", "floor"):
            raise InvalidConfig(f"rounding must be 'ceil' or 'floor', got {self.rounding!r}")
        if self.w_delay is not None and self.w_delay < 0:
            raise InvalidConfig(f"decoding delay must be non-negative, got {self.w_delay}")

    def bits(self) -> Tuple[int, ...]:
        """b_i for nodes 1..M."""
        if self.rounding == "floor":
            return tuple(int(math.floor(self.n * r + 1e-9)) for r in self.rates.rates)
        return tuple(int(math.ceil(self.n * r - 1e-9)) for r in self.rates.rates)

    def validate(self, source: JointPmf) -> None:
        if len(self.rates) != source.num_sources:
            raise InvalidConfig(f"{len(self.rates)} rates for {source.num_sources} sources")
        for node, bits in enumerate(self.bits(), start=1):
            raw = self.n * math.log2(source.alphabet_sizes[node])
            if bits > raw + 1e-9:
                raise InvalidConfig(f"node {node}: {bits} bits exceed the {raw:.3f} raw bits of a block")


@dataclass(frozen=True)
class RoundPayload:
    round: int
    sender: int
    receiver: int
    bits: np.ndarray


@dataclass(frozen=True)
class Transcript:
    block: int
    payloads: Tuple[RoundPayload, ...]
    decoder_inputs: Tuple[int, ...]
    truth: np.ndarray
    estimate: np.ndarray
    error: bool
    decode_time: int


@dataclass(frozen=True)
class SimulationResult:
    n: int
    trials: int
    errors: int
    transcripts: Tuple[Transcript, ...] = ()
    arm: str = "achievability"

    @property
    def pe(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return wilson_interval(self.errors, self.trials)

    def to_row(self) -> dict:
        low, high = self.interval
        return {"arm": self.arm, "n": self.n, "trials": self.trials, "errors": self.errors,
                "pe": self.pe, "ci_low": low, "ci_high": high}


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * MIX_1
    x = (x ^ (x >> np.uint64(27))) * MIX_2
    return x ^ (x >> np.uint64(31))


def binning_key(binning_seed: int, node: int, lane: int = 0) -> np.uint64:
    """Per-node hash key derived from the shared binning seed; lanes > 0 widen the hash."""
    spawn_key = (node,) if lane == 0 else (node, lane)
    state = np.random.SeedSequence(binning_seed, spawn_key=spawn_key).generate_state(1, dtype=np.uint64)
    return state[0]


class BinningCode:
    """
    Random binning of length-n sequences over an alphabet of size `alphabet`.

    When 2^bits covers every sequence the bin index is the sequence's
    lexicographic rank, so bins are singletons. Otherwise a keyed 64-bit
    mixer hashes the sequence and the top `bits` bits select the bin; wider
    bins concatenate independently keyed 64-bit lanes.

    Encoding works for any n. Ranks, preimages and bin tables need
    |U|^n < 2^63.
    """

    def __init__(self, alphabet: int, n: int, bits: int, binning_seed: int = 0, node: int = 1):
        if bits < 0:
            raise InvalidConfig(f"bits must be non-negative, got {bits}")
        self.alphabet = alphabet
        self.n = n
        self.bits = bits
        self.node = node
        self.binning_seed = binning_seed
        self.key = binning_key(binning_seed, node)
        self.size = alphabet ** n
        self.injective = 2 ** bits >= self.size
        self.indexable = self.size < INDEX_LIMIT

    def _require_indexable(self) -> None:
        if not self.indexable:
            raise ScanBudgetExceeded(f"|U|^n = {self.alphabet}^{self.n} is too large to index")

    @cached_property
    def _powers(self) -> np.ndarray:
        self._require_indexable()
        return np.array([self.alphabet ** (self.n - 1 - t) for t in range(self.n)], dtype=np.int64)

    @cached_property
    def _lane_keys(self) -> List[np.uint64]:
        lanes = -(-self.bits // 64)
        return [binning_key(self.binning_seed, self.node, lane) for lane in range(lanes)]

    def ranks(self, sequences: np.ndarray) -> np.ndarray:
        return np.atleast_2d(sequences).astype(np.int64) @ self._powers

    def sequences(self, ranks: np.ndarray) -> np.ndarray:
        ranks = np.asarray(ranks, dtype=np.int64)
        return (ranks[:, None] // self._powers[None, :]) % self.alphabet

    def _hash(self, symbols: np.ndarray, key: np.uint64) -> np.ndarray:
        with np.errstate(over="ignore"):
            h = np.full(symbols.shape[0], key, dtype=np.uint64)
            for t in range(symbols.shape[1]):
                offset = np.uint64(t + 1) * GOLDEN
                h = _mix64(h ^ (symbols[:, t].astype(np.uint64) + offset))
        return h

    def index(self, sequences: np.ndarray) -> np.ndarray:
        """
        Bin indices of a batch of sequences (one per row).

        Returns uint64 indices, or Python ints in an object array when a bin
        index does not fit in 64 bits.
        """
        symbols = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
        if self.injective and self.indexable:
            return self.ranks(symbols).astype(np.uint64)
        if self.injective:
            ranks = []
            for row in symbols:
                rank = 0
                for symbol in row:
                    rank = rank * self.alphabet + int(symbol)
                ranks.append(rank)
            return np.array(ranks, dtype=object)
        if self.bits == 0:
            return np.zeros(symbols.shape[0], dtype=np.uint64)
        if self.bits <= 64:
            return self._hash(symbols, self.key) >> np.uint64(64 - self.bits)

        lanes = [self._hash(symbols, key) for key in self._lane_keys]
        shift = 64 * len(lanes) - self.bits
        wide = []
        for row in range(symbols.shape[0]):
            value = 0
            for lane in lanes:
                value = (value << 64) | int(lane[row])
            wide.append(value >> shift)
        return np.array(wide, dtype=object)

    def _table(self, scan_budget: int) -> Tuple[np.ndarray, np.ndarray]:
        self._require_indexable()
        if self.size > scan_budget:
            raise ScanBudgetExceeded(
                f"node {self.node}: {self.size} sequences exceed the scan budget {scan_budget}")
        return self._sorted_bins

    @cached_property
    def _sorted_bins(self) -> Tuple[np.ndarray, np.ndarray]:
        bins = np.empty(self.size, dtype=np.uint64)
        for start in range(0, self.size, TABLE_CHUNK):
            ranks = np.arange(start, min(start + TABLE_CHUNK, self.size), dtype=np.int64)
            bins[start:start + ranks.size] = self.index(self.sequences(ranks))
        order = np.argsort(bins, kind="stable")
        logger.debug(f"node {self.node}: binning table of {self.size} sequences into 2^{self.bits} bins")
        return bins[order], order

    def preimage(self, bin_index: int, scan_budget: int = DEFAULT_SCAN_BUDGET) -> np.ndarray:
        """Ranks of every sequence in the bin, ascending (lexicographic order)."""
        if self.injective:
            self._require_indexable()
            if 0 <= bin_index < self.size:
                return np.array([bin_index], dtype=np.int64)
            return np.zeros(0, dtype=np.int64)
        sorted_bins, order = self._table(scan_budget)
        target = np.uint64(bin_index)
        lo = np.searchsorted(sorted_bins, target, side="left")
        hi = np.searchsorted(sorted_bins, target, side="right")
        return order[lo:hi].astype(np.int64)


def sw_encode(block, bits: int, binning_seed: int, alphabet: int = 2, node: int = 1) -> int:
    """Bin index of one sequence in {0, ..., 2^bits - 1}."""
    symbols = np.asarray(block, dtype=np.int64)
    return int(BinningCode(alphabet, symbols.size, bits, binning_seed, node).index(symbols)[0])


def build_codes(source: JointPmf, config: CodeConfig) -> List[BinningCode]:
    config.validate(source)
    return [BinningCode(source.alphabet_sizes[node], config.n, bits, config.binning_seed, node)
            for node, bits in enumerate(config.bits(), start=1)]


def sw_decode(bin_indices: Sequence[int], side_info, source: JointPmf, config: CodeConfig,
              codes: Optional[Sequence[BinningCode]] = None,
              scan_budget: int = DEFAULT_SCAN_BUDGET) -> np.ndarray:
    """
    Maximum-likelihood estimate of (u_1^n, ..., u_M^n) among bin-consistent tuples.

    The score of a tuple is sum_t log p(u_0(t), u_1(t), ..., u_M(t)) with u_0
    fixed to the side information. Ties go to the lexicographically smallest
    tuple. An empty bin (possible only after corrupted transport) yields the
    all-zero estimate.

    Args:
        bin_indices: One bin index per source node
        side_info: Sink observation u_0^n
        source: Joint pmf of (U_0, ..., U_M)
        config: Block length, rates and binning seed
        codes: Prebuilt codes from build_codes, reused across blocks
        scan_budget: Largest bin table or candidate product to scan

    Returns:
        Array of shape (M, n) with the decoded sequences

    Raises:
        ScanBudgetExceeded: a bin table or the candidate product exceeds scan_budget.
    """
    codes = list(codes) if codes is not None else build_codes(source, config)
    m = source.num_sources
    n = config.n
    if len(bin_indices) != m:
        raise ScheduleMismatch(f"{len(bin_indices)} bin indices for {m} sources")

    candidates = [code.preimage(int(b), scan_budget) for code, b in zip(codes, bin_indices)]
    lengths = tuple(len(c) for c in candidates)
    if 0 in lengths:
        logger.warning(f"empty bin in {list(bin_indices)}; returning the all-zero estimate")
        return np.zeros((m, n), dtype=np.int64)
    total = math.prod(lengths)
    if total > scan_budget:
        raise ScanBudgetExceeded(f"{total} candidate tuples exceed the scan budget {scan_budget}")

    sequences = [code.sequences(ranks) for code, ranks in zip(codes, candidates)]
    with np.errstate(divide="ignore"):
        log_joint = np.log(source.probs)
    u0 = np.asarray(side_info, dtype=np.int64).reshape(n)

    best_score, best_flat = -np.inf, None
    chunk = max(1, DECODE_CHUNK // n)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        picks = np.unravel_index(flat, lengths)
        parts = [seq[pick] for seq, pick in zip(sequences, picks)]
        scores = log_joint[(np.broadcast_to(u0, parts[0].shape), *parts)].sum(axis=1)
        k = int(np.argmax(scores))
        if best_flat is None or scores[k] > best_score:
            best_score, best_flat = scores[k], int(flat[k])

    picks = np.unravel_index(best_flat, lengths)
    return np.stack([seq[int(pick)] for seq, pick in zip(sequences, picks)])


def _to_bits(index: int, bits: int) -> np.ndarray:
    return np.array([(int(index) >> k) & 1 for k in reversed(range(bits))], dtype=np.int64)


def _from_bits(bits: np.ndarray) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def route_payloads(schedule: RoutingSchedule, payloads: Dict[int, np.ndarray],
                   channel: Optional[Callable[[int, int, np.ndarray], np.ndarray]] = None):
    """
    Push one block of local bits through the schedule.

    Args:
        schedule: Forwarding tables from flow_to_schedule
        payloads: Local bits per source node, keyed by node
        channel: Called as channel(sender, receiver, bits); may alter each
            message in flight

    Returns:
        (delivered, messages): the bits reassembled at the sink per origin,
        and every (round, sender, receiver, bits) message in send order

    Raises:
        ScheduleMismatch: payload sizes disagree with the tables, or the sink
            cannot reassemble every origin exactly once.
    """
    inbox: Dict[int, Dict[int, np.ndarray]] = {v: {} for v in schedule.topo_order}
    messages: List[RoundPayload] = []

    for node in schedule.topo_order:
        if node == SINK:
            continue
        table = schedule.tables[node]
        parts = []
        for sender, ranges in table.inbound:
            message = inbox[node][sender]
            if message.size != sum(r.size for r in ranges):
                raise ScheduleMismatch(f"node {node} expected {sum(r.size for r in ranges)} bits from {sender}")
            parts.append(message)
        if table.local:
            local = np.asarray(payloads.get(node, ()), dtype=np.int64)
            if local.size != table.local.size:
                raise ScheduleMismatch(f"node {node} has {local.size} local bits, schedule expects {table.local.size}")
            parts.append(local)
        stream = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

        offset = 0
        for dest, ranges in table.outbound:
            size = sum(r.size for r in ranges)
            message = stream[offset:offset + size]
            offset += size
            if channel is not None:
                message = channel(node, dest, message)
            inbox[dest][node] = message
            messages.append(RoundPayload(table.round, node, dest, message))
        if offset != stream.size:
            raise ScheduleMismatch(f"node {node} forwards {offset} of {stream.size} bits")

    delivered = {origin: np.full(bits, -1, dtype=np.int64)
                 for origin, bits in enumerate(schedule.bits_per_block) if origin != SINK and bits > 0}
    for sender, ranges in schedule.tables[SINK].inbound:
        message = inbox[SINK][sender]
        offset = 0
        for r in ranges:
            slot = delivered[r.origin][r.start:r.stop]
            if np.any(slot != -1):
                raise ScheduleMismatch(f"bits {r.start}:{r.stop} of node {r.origin} delivered twice")
            delivered[r.origin][r.start:r.stop] = message[offset:offset + r.size]
            offset += r.size
    for origin, bits in delivered.items():
        if np.any(bits == -1):
            raise ScheduleMismatch(f"bits of node {origin} never reached the sink")
    return delivered, messages


@dataclass
class _TrialContext:
    links: LinkSet
    source: JointPmf
    schedule: RoutingSchedule
    config: CodeConfig
    codes: List[BinningCode]
    w_delay: int
    channel_mode: str
    repeat: int
    scan_budget: int
    keep_transcripts: bool


def _dmc_channel(links: LinkSet, repeat: int, rng: np.random.Generator):
    def send(sender: int, receiver: int, message: np.ndarray) -> np.ndarray:
        dmc = links.dmc(sender, receiver)
        if dmc is None or dmc.input_size != 2:
            return message
        return repetition_transport(dmc, message, repeat, int(rng.integers(2 ** 63)))
    return send


def _simulate_block(ctx: _TrialContext, block_index: int, seed: np.random.SeedSequence):
    source_seed, channel_seed = seed.spawn(2)
    block = sample_block(ctx.source, ctx.config.n, source_seed)
    bits = ctx.config.bits()
    bins = [int(code.index(block.sequence(node))[0]) for node, code in enumerate(ctx.codes, start=1)]
    payloads = {node: _to_bits(b, bits[node - 1]) for node, b in enumerate(bins, start=1)}

    channel = None
    if ctx.channel_mode == "dmc":
        channel = _dmc_channel(ctx.links, ctx.repeat, np.random.default_rng(channel_seed))
    delivered, messages = route_payloads(ctx.schedule, payloads, channel)

    received = tuple(_from_bits(delivered.get(node, ())) for node in range(1, ctx.source.num_variables))
    estimate = sw_decode(received, block.sequence(0), ctx.source, ctx.config, ctx.codes, ctx.scan_budget)
    truth = block.samples[1:]
    error = not np.array_equal(estimate, truth)

    transcript = None
    if ctx.keep_transcripts:
        shifted = tuple(RoundPayload(block_index + m.round, m.sender, m.receiver, m.bits) for m in messages)
        transcript = Transcript(block_index, shifted, received, truth, estimate, error,
                                block_index + ctx.w_delay)
    return error, transcript


def _run_chunk(args):
    ctx, items = args
    return [_simulate_block(ctx, k, seed) for k, seed in items]


def _check_schedule(links: LinkSet, source: JointPmf, schedule: RoutingSchedule, config: CodeConfig) -> int:
    if schedule.num_nodes != source.num_variables or links.num_nodes != source.num_variables:
        raise ScheduleMismatch("schedule, links and source disagree on the number of nodes")
    if schedule.n != config.n:
        raise ScheduleMismatch(f"schedule built for n={schedule.n}, code uses n={config.n}")
    if tuple(schedule.bits_per_block[1:]) != config.bits():
        raise ScheduleMismatch(f"schedule carries {list(schedule.bits_per_block[1:])} bits, code needs {list(config.bits())}")
    try:
        schedule.check_capacities(links.capacity_matrix)
    except FlowInvariantViolation as e:
        raise ScheduleMismatch(str(e)) from e
    w_delay = schedule.rounds if config.w_delay is None else config.w_delay
    if w_delay < schedule.rounds:
        raise ScheduleMismatch(f"decoding delay {w_delay} is shorter than the {schedule.rounds} round(s) needed")
    return w_delay


def run_pipeline(links: LinkSet, source: JointPmf, schedule: RoutingSchedule, config: CodeConfig,
                 l_blocks: int, seed, workers: int = 1, keep_transcripts: bool = False,
                 channel_mode: str = "ideal", repeat: int = DEFAULT_REPEAT,
                 scan_budget: int = DEFAULT_SCAN_BUDGET, progress: bool = False,
                 arm: str = "achievability") -> SimulationResult:
    """
    Simulate l_blocks pipelined blocks and count block errors.

    Block k enters the network at time k and is decoded at time k + W.
    Per-block randomness is spawned from `seed`, so the outcome is the same
    for any number of workers.

    Args:
        links: the network the schedule runs on
        source: joint pmf of (U_0, ..., U_M)
        schedule: forwarding tables from flow_to_schedule
        config: code parameters; bits must match the schedule
        l_blocks: number of blocks (trials)
        seed: master seed (int or SeedSequence)
        workers: process count; 1 runs in-process
        channel_mode: "ideal", or "dmc" to send bits over binary DMC links
            with a repetition code

    Returns:
        SimulationResult with error count and optional transcripts
    """
    if channel_mode not in ("ideal", "dmc"):
        raise InvalidConfig(f"unknown channel mode {channel_mode!r}")
    codes = build_codes(source, config)
    w_delay = _check_schedule(links, source, schedule, config)
    ctx = _TrialContext(links, source, schedule, config, codes, w_delay, channel_mode,
                        repeat, scan_budget, keep_transcripts)

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    items = list(enumerate(root.spawn(l_blocks)))
    logger.info(f"simulating {l_blocks} block(s) at n={config.n} with bits {list(config.bits())}")

    outcomes = []
    with tqdm(total=l_blocks, desc=f"{arm} n={config.n}", unit="block", disable=not progress) as progress_bar:
        if workers > 1 and l_blocks > 1:
            size = max(1, math.ceil(l_blocks / (4 * workers)))
            chunks = [(ctx, items[i:i + size]) for i in range(0, l_blocks, size)]
            with Pool(workers) as pool:
                for part in pool.imap(_run_chunk, chunks):
                    outcomes.extend(part)
                    progress_bar.update(len(part))
        else:
            for k, child in items:
                outcomes.append(_simulate_block(ctx, k, child))
                progress_bar.update(1)

    errors = sum(1 for error, _ in outcomes if error)
    transcripts = tuple(t for _, t in outcomes if t is not None)
    result = SimulationResult(config.n, l_blocks, errors, transcripts, arm)
    logger.info(f"{arm} n={config.n}: {errors}/{l_blocks} block errors, P_e = {result.pe:.4f}")
    return result


def _route_rates(links: LinkSet, r: RateVector):
    flow = feasible_flow(links, r)
    if isinstance(flow, MinCutWitness):
        raise Infeasible(f"rates {list(r.rates)} cannot be routed to the sink", flow.as_certificate())
    return flow


def achievability_curve(links: LinkSet, source: JointPmf, r: RateVector, n_list: Sequence[int],
                        trials: int, seed: int, rounding: str = "ceil", arm: str = "achievability",
                        **kwargs) -> List[SimulationResult]:
    """Route r once, then simulate each block length with its own schedule."""
    flow = _route_rates(links, r)
    results = []
    for n in n_list:
        schedule = flow_to_schedule(flow, n, rounding=rounding)
        config = CodeConfig(n, r, binning_seed=seed, rounding=rounding)
        results.append(run_pipeline(links, source, schedule, config, trials,
                                    np.random.SeedSequence([seed, n]), arm=arm, **kwargs))
    return results


def converse_curve(links: LinkSet, source: JointPmf, r: RateVector, n_list: Sequence[int],
                   trials: int, seed: int, **kwargs) -> List[SimulationResult]:
    """
    Error curve for a rate vector outside the Slepian-Wolf region.

    Some subset must miss its conditional entropy by at least 0.1 bit. Bits
    are floor(n * R_i) so rounding cannot lift the rates back over the
    boundary.
    """
    membership = slepian_wolf_member(source, r)
    worst = membership.certificates[0] if membership.certificates else None
    if worst is None or worst.slack > -CONVERSE_MARGIN + 1e-9:
        raise InvalidConfig(f"rates {list(r.rates)} are not {CONVERSE_MARGIN} bit below the Slepian-Wolf region")
    logger.info(f"converse run: S={list(worst.s)} misses its entropy by {-worst.slack:.4f} bit")
    return achievability_curve(links, source, r, n_list, trials, seed, rounding="floor",
                               arm="converse", **kwargs)

"""Deterministic discrete-event engine for PCN payment simulation.

Event ordering is (time, kind rank, sequence number), so identical
(config, seed) pairs replay identical event logs.  Per epoch the engine
freezes a copy of the graph; all routing decisions (path selection) read
that snapshot plus current local demands, never live balances.

Flow mechanics per transaction unit: released from a per-path source
queue under a rate bucket and a congestion window, then forwarded hop by
hop.  Each directed channel is a single server with a processing rate;
underfunded or busy channels queue units, and queued units that outstay
the delay threshold are marked (forwarded without processing and echoed
back as congestion signals).  Aborted transactions refund every transfer
they made, so channel conservation holds at all times.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from pcnkit.errors import InvariantViolation, PathBrokenError
from pcnkit.routing import (
    AdmitOutcome,
    CongestionState,
    Demand,
    PathRate,
    PriceState,
    SchedulerPolicy,
    TransactionUnit,
    TuStatus,
    decide_admission,
    mark_overdue,
    probe_path,
    schedule_queue,
    split_demand,
    update_rate,
)
from pcnkit.simulator.config import SimConfig
from pcnkit.simulator.metrics import SimOutcome, compute_ntp, compute_tsr, latency_summary
from pcnkit.simulator.workload import WorkloadSource
from pcnkit.topology import (
    PathKind,
    PcnGraph,
    assign_capacities,
    candidate_paths,
    generate_small_world,
    load_graph,
)

# event kind ranks; lower fires first at equal times
EPOCH, PRICE, PROBE, ARRIVAL, DELIVERY, SERVICE, TIMEOUT = range(7)

_RETRY = 0.05  # channel service retry while underfunded


@dataclass
class PathState:
    path: object
    key: tuple
    rate: PathRate
    bucket: float
    last_refill: float = 0.0
    source_queue: list = field(default_factory=list)
    outstanding: float = 0.0
    release_scheduled: bool = False


@dataclass
class PairFlow:
    source: int
    dest: int
    paths: list
    needs_reselect: bool = False


@dataclass
class TxRec:
    demand: Demand
    units: list
    arrived: set = field(default_factory=set)
    journal: list = field(default_factory=list)
    status: str = "pending"


class SimEngine:
    def __init__(self, config: SimConfig):
        config.validate()
        self.cfg = config
        self.rp = config.routing
        self.graph = self._build_graph(config)
        self.policy = SchedulerPolicy(self.rp.scheduler)
        self.path_kind = PathKind(self.rp.path_kind)
        self.control = self.rp.control == "share"
        self.prices = PriceState(self.rp.kappa, self.rp.eta, self.rp.t_fee)
        self.cong = CongestionState(
            beta=self.rp.beta,
            gamma=self.rp.gamma,
            delay_threshold=self.rp.delay_threshold,
            queue_cap=self.rp.queue_cap,
            initial_window=self.rp.initial_window if self.control else 1e15,
            min_window=(
                self.rp.min_window if self.rp.min_window is not None else self.rp.max_tu
            ),
        )
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self._tx_seq = itertools.count()
        self._queue_seq = itertools.count()
        self.pairs: dict[tuple[int, int], PairFlow] = {}
        self.txs: dict[str, TxRec] = {}
        self._unit_path: dict[str, PathState] = {}
        self._unit_tx: dict[str, TxRec] = {}
        # per directed channel (cid, src_is_a): measurement and server state
        self._win_in: dict[tuple[int, bool], float] = {}
        self._ema: dict[tuple[int, bool], float] = {}
        self._busy: dict[tuple[int, bool], float] = {}
        self._delta_est: dict[int, float] = {}
        # fixed flow rates for control="off"
        self._fixed_rates: dict[tuple[int, int], float] = {}
        if config.workload.kind == "flows":
            for fl in config.workload.flows:
                self._fixed_rates[(fl.source, fl.dest)] = fl.rate
        # metrics
        self.generated = 0
        self.completed = 0
        self.aborted = 0
        self.generated_value = 0.0
        self.completed_value = 0.0
        self.latencies: list[float] = []
        self.completions: list[tuple[float, int, int, float]] = []
        self.rate_samples: list[tuple[float, int, float, float]] = []
        self.trace_rows: list[tuple] = []
        self.constraint_samples = 0
        self.capacity_violations = 0
        self.balance_violations = 0
        self._total_value0 = self.graph.total_value()
        self._snapshot: PcnGraph = self.graph.copy()
        # schedule the skeleton
        self._push(0.0, EPOCH, ())
        self._push(self.rp.tau, PRICE, ())
        if self.control:
            self._push(self.rp.tau, PROBE, ())
        source = WorkloadSource(config.workload, self.graph, config.seed, config.duration)
        for arr in source.arrivals():
            self._push(arr.time, ARRIVAL, (arr,))

    # -- construction ---------------------------------------------------

    @staticmethod
    def _build_graph(config: SimConfig) -> PcnGraph:
        spec = config.graph
        if spec.kind == "custom":
            return spec.custom.copy()
        if spec.kind == "file":
            return load_graph(spec.path, max_parallel=config.n_cc)
        graph = generate_small_world(
            spec.n, spec.ring_degree, spec.rewire_p, seed=config.seed
        )
        assign_capacities(
            graph, spec.min_cap, spec.mean_cap, spec.median_cap, seed=config.seed
        )
        return graph

    # -- event plumbing ---------------------------------------------------

    def _push(self, at: float, kind: int, payload: tuple) -> None:
        heapq.heappush(self._heap, (at, kind, next(self._seq), payload))

    def run(self) -> SimOutcome:
        duration = self.cfg.duration
        while self._heap and self._heap[0][0] <= duration:
            at, kind, _, payload = heapq.heappop(self._heap)
            self.now = at
            if kind == EPOCH:
                self._on_epoch()
            elif kind == PRICE:
                self._on_price()
            elif kind == PROBE:
                self._on_probe()
            elif kind == ARRIVAL:
                self._on_arrival(*payload)
            elif kind == DELIVERY:
                self._on_delivery(*payload)
            elif kind == SERVICE:
                self._on_service(*payload)
            elif kind == TIMEOUT:
                self._on_timeout(*payload)
        self.now = duration
        for tid, tx in self.txs.items():
            if tx.status == "pending":
                self._abort_tx(tx)
        self._check_conservation()
        return self._outcome()

    def _check_conservation(self) -> None:
        total = self.graph.total_value()
        if abs(total - self._total_value0) > 1e-6 * max(1.0, self._total_value0):
            raise InvariantViolation(
                f"value not conserved: {total} != {self._total_value0}"
            )
        residue = sum(c.escrow_ab + c.escrow_ba for c in self.graph.channels)
        if abs(residue) > 1e-6:
            raise InvariantViolation(f"unresolved escrow at run end: {residue}")

    # -- pair / path management -------------------------------------------

    def _pair(self, s: int, e: int) -> PairFlow:
        key = (s, e)
        pair = self.pairs.get(key)
        if pair is None:
            pair = PairFlow(s, e, [])
            self.pairs[key] = pair
            self._select_paths(pair)
        return pair

    def _select_paths(self, pair: PairFlow) -> None:
        """Path selection reads the epoch snapshot, never live balances."""
        found = candidate_paths(
            self._snapshot, pair.source, pair.dest, self.rp.k_paths, self.path_kind
        )
        old_rates = {ps.path.hops: ps.rate.r_p for ps in pair.paths}
        fixed = self._fixed_rates.get((pair.source, pair.dest))
        pair.paths = []
        for p in found:
            if p.hops in old_rates:
                rate0 = old_rates[p.hops]
            elif not self.control and fixed is not None:
                rate0 = fixed / len(found)
            else:
                rate0 = self.rp.initial_rate
            ps = PathState(
                path=p,
                key=(pair.source, pair.dest, p.hops),
                rate=PathRate(p, r_p=rate0, alpha=self.rp.alpha),
                bucket=2.0 * self.rp.max_tu,
                last_refill=self.now,
            )
            pair.paths.append(ps)
        pair.needs_reselect = False

    # -- arrivals -----------------------------------------------------------

    def _on_arrival(self, arr) -> None:
        tid = f"tx{next(self._tx_seq):07d}"
        demand = Demand(
            tid, arr.source, arr.dest, arr.amount,
            deadline=arr.time + self.cfg.workload.deadline,
            created=arr.time,
        )
        self.generated += 1
        self.generated_value += arr.amount
        pair = self._pair(arr.source, arr.dest)
        tx = TxRec(demand, [])
        self.txs[tid] = tx
        self._push(demand.deadline, TIMEOUT, (tid,))
        if not pair.paths:
            return  # no route: aborts at the deadline
        rates = [ps.rate.r_p for ps in pair.paths]
        units = split_demand(
            demand, self.rp.min_tu, self.rp.max_tu,
            [ps.path for ps in pair.paths], rates,
        )
        tx.units = units
        by_path = {ps.path.hops: ps for ps in pair.paths}
        touched = []
        for tu in units:
            ps = by_path[tu.path.hops]
            self._unit_path[tu.tuid] = ps
            self._unit_tx[tu.tuid] = tx
            ps.source_queue.append((next(self._queue_seq), self.now, tu))
            if ps not in touched:
                touched.append(ps)
        for ps in touched:
            self._try_release(ps)

    # -- source release -------------------------------------------------------

    def _try_release(self, ps: PathState) -> None:
        cap = 2.0 * self.rp.max_tu
        while ps.source_queue:
            ps.bucket = min(cap, ps.bucket + ps.rate.r_p * (self.now - ps.last_refill))
            ps.last_refill = self.now
            entry = schedule_queue(ps.source_queue, self.policy)
            tu = entry[2]
            if tu.status == TuStatus.ABORTED:
                continue
            if ps.outstanding + tu.amount > self.cong.window(ps.key):
                ps.source_queue.append(entry)
                break  # retried when an acknowledgment frees the window
            if self._live_width(ps.path) + 1e-9 < tu.amount:
                # dry bottleneck: holding at the source avoids locking a
                # partial path that can only be refunded
                ps.source_queue.append(entry)
                if not ps.release_scheduled:
                    self._push(self.now + 0.1, SERVICE, ("release", ps))
                    ps.release_scheduled = True
                break
            if ps.bucket + 1e-9 < tu.amount:
                ps.source_queue.append(entry)
                if not ps.release_scheduled:
                    wait = (tu.amount - ps.bucket) / max(ps.rate.r_p, 1e-6)
                    # retry spacing floored so float residue cannot stall time
                    self._push(
                        self.now + max(min(wait, 5.0), 1e-3), SERVICE, ("release", ps)
                    )
                    ps.release_scheduled = True
                break
            ps.bucket -= tu.amount
            ps.outstanding += tu.amount
            tu.status = TuStatus.IN_FLIGHT
            tu.released_at = self.now
            tu.hop = 0
            self._attempt_hop(tu)

    # -- hop forwarding ---------------------------------------------------

    def _effective_rate(self, chan) -> float:
        """Processing rate with the concurrency contention model applied.

        Parallel hub channels share service capacity and pay a coherence
        cost: the per-unit service time scales with the configured
        contention and coherence coefficients in the parallel-channel
        count of that hub pair.
        """
        from pcnkit.topology import NodeRole

        both_hubs = (
            self.graph.roles[chan.a] == NodeRole.ACTIVE_HUB
            and self.graph.roles[chan.b] == NodeRole.ACTIVE_HUB
        )
        base = self.rp.r_process
        if both_hubs and self.rp.hub_r_process is not None:
            base = self.rp.hub_r_process
        if not both_hubs:
            return base
        n = len(self.graph.channels_between(chan.a, chan.b))
        mult = (
            1.0
            + self.cfg.contention_sigma * (n - 1)
            + self.cfg.coherence_varpi * n * (n - 1)
        )
        return base / mult

    def _choose_channel(self, u: int, v: int, amount: float):
        """Forwarding channel among parallels: idle and funded first."""
        options = self.graph.channels_between(u, v)
        if not options:
            return None
        def rank(c):
            dk = (c.cid, u == c.a)
            busy = self._busy.get(dk, 0.0) > self.now + 1e-12
            funded = c.balance_from(u) >= amount
            return (busy, not funded, -c.balance_from(u), c.cid)
        return min(options, key=rank)

    def _attempt_hop(self, tu: TransactionUnit) -> None:
        ps = self._unit_path[tu.tuid]
        hops = tu.path.hops
        u, v = hops[tu.hop], hops[tu.hop + 1]
        chan = self._choose_channel(u, v, tu.amount)
        if chan is None:
            self.pairs[(ps.key[0], ps.key[1])].needs_reselect = True
            return  # dead hop: the transaction aborts at its deadline
        dk = (chan.cid, u == chan.a)
        busy = self._busy.get(dk, 0.0) > self.now + 1e-12
        htlc_full = chan.inflight_from(u) >= chan.max_htlc
        outcome, _ = decide_admission(
            amount=tu.amount,
            path_rate=ps.rate.r_p,
            process_rate=self._effective_rate(chan),
            available_funds=chan.balance_from(u),
            queue_value=chan.queued_value(u),
            queue_cap=self.rp.queue_cap,
            outstanding=0.0,
            window=float("inf"),
        )
        if outcome == AdmitOutcome.REJECTED:
            self.pairs[(ps.key[0], ps.key[1])].needs_reselect = True
            return  # dropped at a full queue: aborts at the deadline
        if outcome == AdmitOutcome.QUEUED or busy or htlc_full:
            tu.enqueued_at = self.now
            chan.queue_from(u).append((next(self._queue_seq), self.now, tu))
            self._push(max(self.now, self._busy.get(dk, 0.0)), SERVICE, ("chan", chan.cid, u))
            return
        self._serve(tu, chan, u)

    def _serve(self, tu: TransactionUnit, chan, u: int) -> None:
        tx = self._unit_tx[tu.tuid]
        if tx.status != "pending" or tu.status == TuStatus.ABORTED:
            return  # stale unit: its escrow was already resolved
        chan.lock(u, tu.amount)
        tx.journal.append((chan.cid, u, tu.amount))
        dk = (chan.cid, u == chan.a)
        self._win_in[dk] = self._win_in.get(dk, 0.0) + tu.amount
        # marked units are forwarded without processing
        service = 0.0 if tu.marked else tu.amount / self._effective_rate(chan)
        done = self.now + service
        self._busy[dk] = done
        self._push(done + self.rp.hop_latency, DELIVERY, (tu.tuid, tu.hop + 1))
        if chan.queue_from(u):
            self._push(done, SERVICE, ("chan", chan.cid, u))
        # the opposite direction gained funds; wake its queue if any
        other = chan.other(u)
        if chan.queue_from(other):
            self._push(self.now, SERVICE, ("chan", chan.cid, other))

    def _on_service(self, which, *args) -> None:
        if which == "release":
            ps = args[0]
            ps.release_scheduled = False
            self._try_release(ps)
            return
        cid, u = args
        chan = self.graph.channels[cid]
        queue = chan.queue_from(u)
        queue[:] = [e for e in queue if e[2].status != TuStatus.ABORTED]
        if not queue:
            return
        dk = (cid, u == chan.a)
        busy_until = self._busy.get(dk, 0.0)
        if busy_until > self.now + 1e-12:
            self._push(busy_until, SERVICE, ("chan", cid, u))
            return
        mark_overdue(queue, self.now, self.cong.delay_threshold)
        entry = schedule_queue(queue, self.policy)
        tu = entry[2]
        if chan.balance_from(u) < tu.amount or chan.inflight_from(u) >= chan.max_htlc:
            queue.append(entry)
            self._push(self.now + _RETRY, SERVICE, ("chan", cid, u))
            return
        self._serve(tu, chan, u)

    # -- delivery and acknowledgments ----------------------------------------

    def _on_delivery(self, tuid: str, hop: int) -> None:
        tx = self._unit_tx[tuid]
        tu = next(t for t in tx.units if t.tuid == tuid)
        if tu.status == TuStatus.ABORTED or tx.status == "aborted":
            return
        if hop == -1:  # acknowledgment arriving back at the source
            self._on_ack(tu)
            return
        tu.hop = hop
        hops = tu.path.hops
        if hop < len(hops) - 1:
            self._attempt_hop(tu)
            return
        # reached the destination
        tx.arrived.add(tuid)
        ack_delay = (len(hops) - 1) * self.rp.hop_latency
        self._push(self.now + ack_delay, DELIVERY, (tuid, -1))
        if (
            tx.status == "pending"
            and len(tx.arrived) == len(tx.units)
            and self.now <= tx.demand.deadline
        ):
            tx.status = "completed"
            self._settle_tx(tx)
            self.completed += 1
            self.completed_value += tx.demand.amount
            self.latencies.append(self.now - tx.demand.created)
            self.completions.append(
                (self.now, tx.demand.source, tx.demand.dest, tx.demand.amount)
            )

    def _settle_tx(self, tx: TxRec) -> None:
        """Release every escrowed hop toward its receiver."""
        woken = []
        for cid, src, amount in tx.journal:
            chan = self.graph.channels[cid]
            chan.settle_lock(src, amount)
            other = chan.other(src)
            if chan.queue_from(other) and (cid, other) not in woken:
                woken.append((cid, other))
        tx.journal = []
        for cid, side in woken:
            self._push(self.now, SERVICE, ("chan", cid, side))

    def _on_ack(self, tu: TransactionUnit) -> None:
        ps = self._unit_path[tu.tuid]
        if tu.status == TuStatus.ABORTED:
            return
        tu.status = TuStatus.COMPLETED
        ps.outstanding = max(0.0, ps.outstanding - tu.amount)
        # measured confirmation delay feeds the per-channel lockup estimate
        delay = self.now - tu.released_at
        for u, v in tu.path.pairs():
            chan = self.graph.best_channel(u, v)
            if chan is None:
                continue
            prev = self._delta_est.get(chan.cid, delay)
            self._delta_est[chan.cid] = 0.8 * prev + 0.2 * delay
        if self.control and not tu.marked:
            queued = max(
                (c.queued_value(u) for u, v in tu.path.pairs()
                 if (c := self.graph.best_channel(u, v)) is not None),
                default=0.0,
            )
            if queued < self.cong.window(ps.key):
                pair = self.pairs[(ps.key[0], ps.key[1])]
                self.cong.on_clean_success(ps.key, [p.key for p in pair.paths])
        self._try_release(ps)

    # -- timeouts -------------------------------------------------------------

    def _on_timeout(self, tid: str) -> None:
        tx = self.txs[tid]
        if tx.status != "pending":
            return
        self._abort_tx(tx)

    def _abort_tx(self, tx: TxRec) -> None:
        tx.status = "aborted"
        self.aborted += 1
        refunded_dirs = []
        for tu in tx.units:
            ps = self._unit_path[tu.tuid]
            if tu.status == TuStatus.IN_FLIGHT:
                ps.outstanding = max(0.0, ps.outstanding - tu.amount)
            if tu.marked:
                self.cong.on_marked_abort(ps.key)
            tu.status = TuStatus.ABORTED
        for cid, src, amount in reversed(tx.journal):
            chan = self.graph.channels[cid]
            chan.refund_lock(src, amount)
            if (cid, src) not in refunded_dirs:
                refunded_dirs.append((cid, src))
        tx.journal = []
        for cid, src in refunded_dirs:
            if self.graph.channels[cid].queue_from(src):
                self._push(self.now, SERVICE, ("chan", cid, src))

    # -- periodic updates -------------------------------------------------

    def _delta_of(self, chan) -> float:
        if self.rp.delta_lockup is not None:
            return self.rp.delta_lockup
        return self._delta_est.get(chan.cid, 4.0 * self.rp.hop_latency)

    def _on_price(self) -> None:
        tau = self.rp.tau
        from pcnkit.routing import FlowStats

        for chan in self.graph.channels:
            ka = (chan.cid, True)
            kb = (chan.cid, False)
            v_ab = self._win_in.get(ka, 0.0)
            v_ba = self._win_in.get(kb, 0.0)
            a = self.rp.ema_alpha
            self._ema[ka] = (1 - a) * self._ema.get(ka, 0.0) + a * (v_ab / tau)
            self._ema[kb] = (1 - a) * self._ema.get(kb, 0.0) + a * (v_ba / tau)
            if self.control:
                delta = self._delta_of(chan)
                stats = FlowStats(
                    n_a=self._ema[ka] * delta,
                    n_b=self._ema[kb] * delta,
                    m_a=v_ab,
                    m_b=v_ba,
                    delta_lockup=delta,
                )
                self.prices.update_capacity_price(chan, stats)
                self.prices.update_imbalance_price(chan, stats)
            if self.cfg.trace:
                self.trace_rows.append((
                    "channel", round(self.now, 6), chan.cid,
                    self.prices.lam_of(chan),
                    self.prices.mu_of(chan, chan.a),
                    self.prices.mu_of(chan, chan.b),
                    self.prices.channel_price(chan, chan.a),
                    chan.queued_value(chan.a), chan.queued_value(chan.b),
                ))
            self._win_in[ka] = 0.0
            self._win_in[kb] = 0.0
            # marking pass for waiting queues
            for side in (chan.a, chan.b):
                q = chan.queue_from(side)
                if q:
                    mark_overdue(q, self.now, self.cong.delay_threshold)
                    self._push(self.now, SERVICE, ("chan", chan.cid, side))
        self._push(self.now + tau, PRICE, ())

    def _on_probe(self) -> None:
        for pair in self.pairs.values():
            total = sum(ps.rate.r_p for ps in pair.paths)
            for ps in pair.paths:
                try:
                    rho = probe_path(self.prices, self.graph, ps.path)
                except PathBrokenError:
                    pair.needs_reselect = True
                    continue
                update_rate(ps.rate, rho, total, self.rp.r_floor, self.rp.r_max)
                if self.cfg.trace:
                    self.trace_rows.append((
                        "path", round(self.now, 6), pair.source, pair.dest,
                        "-".join(map(str, ps.path.hops)),
                        ps.rate.r_p, self.cong.window(ps.key), ps.outstanding,
                    ))
                self._try_release(ps)
        self._push(self.now + self.rp.tau, PROBE, ())

    def _on_epoch(self) -> None:
        self._snapshot = self.graph.copy()
        for pair in self.pairs.values():
            if pair.needs_reselect:
                self._select_paths(pair)
        if self.now >= self.cfg.warmup_time:
            for chan in self.graph.channels:
                r_ab = self._ema.get((chan.cid, True), 0.0)
                r_ba = self._ema.get((chan.cid, False), 0.0)
                self.constraint_samples += 1
                if (r_ab + r_ba) * self._delta_of(chan) > 1.05 * chan.capacity:
                    self.capacity_violations += 1
                if abs(r_ab - r_ba) > self.rp.epsilon_bal:
                    self.balance_violations += 1
                self.rate_samples.append((self.now, chan.cid, r_ab, r_ba))
        self._push(self.now + self.cfg.epoch, EPOCH, ())

    # -- outcome ----------------------------------------------------------

    def _detect_deadlock(self) -> bool:
        """Zero completions over the final quarter while work was pending."""
        window = max(self.cfg.duration * 0.25, 4 * self.cfg.workload.deadline)
        t0 = self.cfg.duration - window
        late_completed = sum(1 for t, *_ in self.completions if t >= t0)
        had_pending = any(
            tx.demand.created >= t0 - self.cfg.workload.deadline
            for tx in self.txs.values()
        )
        return late_completed == 0 and had_pending and self.generated > 0

    def _outcome(self) -> SimOutcome:
        mean, p50, p95 = latency_summary(self.latencies)
        final_rates = {
            (p.source, p.dest): {ps.path.hops: ps.rate.r_p for ps in p.paths}
            for p in self.pairs.values()
        }
        return SimOutcome(
            tsr=compute_tsr(self.completed, self.generated),
            ntp=compute_ntp(self.completed_value, self.generated_value),
            latency_mean=mean,
            latency_p50=p50,
            latency_p95=p95,
            generated_count=self.generated,
            completed_count=self.completed,
            aborted_count=self.aborted,
            generated_value=self.generated_value,
            completed_value=self.completed_value,
            deadlock=self._detect_deadlock(),
            duration=self.cfg.duration,
            warmup=self.cfg.warmup_time,
            constraint_samples=self.constraint_samples,
            capacity_violations=self.capacity_violations,
            balance_violations=self.balance_violations,
            completions=self.completions,
            rate_samples=self.rate_samples,
            trace_rows=self.trace_rows,
            final_rates=final_rates,
        )


def run(config: SimConfig) -> SimOutcome:
    """Run one simulation to completion."""
    return SimEngine(config).run()

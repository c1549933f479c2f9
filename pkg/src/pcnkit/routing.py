"""Price-based rate control, demand splitting, queues and windows.

Everything here is a synchronous state transition; the simulator event
loop owns the state and decides when transitions fire.  Price semantics:

- the capacity price of a channel rises when the funds needed to sustain
  the measured two-way flow exceed the channel capacity, and is clamped
  at zero (dual-variable projection);
- the imbalance prices of the two directions move antisymmetrically with
  the difference of the value entering each end, so their sum is
  conserved;
- fees are a configured fraction of the channel price, floored at zero.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from pcnkit.errors import PathBrokenError
from pcnkit.topology import Channel, Path, PcnGraph

R_FLOOR = 1e-6  # avoids the log-utility singularity at zero rate


class TuStatus(Enum):
    PENDING = "pending"
    IN_FLIGHT = "in_flight"
    COMPLETED = "completed"
    ABORTED = "aborted"


class SchedulerPolicy(Enum):
    FIFO = "fifo"
    LIFO = "lifo"
    SPF = "spf"   # smallest payment first
    EDF = "edf"   # earliest deadline first


class AdmitOutcome(Enum):
    ADMITTED = "admitted"
    QUEUED = "queued"
    REJECTED = "rejected"


@dataclass
class Demand:
    tid: str
    source: int
    dest: int
    amount: float
    deadline: float           # absolute time
    created: float = 0.0

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("demand amount must be positive")
        if self.source == self.dest:
            raise ValueError("source equals destination")


@dataclass
class TransactionUnit:
    tuid: str
    parent_tid: str
    amount: float
    path: Path
    deadline: float
    created: float = 0.0
    marked: bool = False
    status: TuStatus = TuStatus.PENDING
    # simulator bookkeeping
    released_at: float = field(default=0.0, repr=False)
    hop: int = field(default=0, repr=False)
    enqueued_at: float = field(default=0.0, repr=False)


def make_tuid(tid: str, index: int) -> str:
    """Fresh unit id: digest of the parent id and position, not traceable
    back to either without the preimage."""
    return hashlib.sha256(f"{tid}|{index}".encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Demand splitting
# ---------------------------------------------------------------------------


def split_amounts(amount: float, min_tu: float, max_tu: float) -> list[float]:
    """Split into unit amounts within [min_tu, max_tu], largest first.

    At most one trailing remainder below min_tu, and only when the amount
    cannot be partitioned within the bounds at all.
    """
    if not 0 < min_tu <= max_tu:
        raise ValueError("need 0 < min_tu <= max_tu")
    if amount <= 0:
        raise ValueError("amount must be positive")
    if amount < min_tu:
        return [amount]
    k = max(1, -(-amount // max_tu))  # ceil division
    k = int(k)
    if k * min_tu <= amount + 1e-12:
        # feasible in k pieces: greedy max-first while keeping the rest
        # above the per-piece floor
        out = []
        remaining = amount
        for i in range(k, 0, -1):
            piece = min(max_tu, remaining - (i - 1) * min_tu)
            out.append(piece)
            remaining -= piece
        out[-1] += remaining  # absorb float residue
        return out
    # infeasible: peel off max-size pieces, leave one sub-minimum remainder
    out = []
    remaining = amount
    while remaining > max_tu:
        out.append(max_tu)
        remaining -= max_tu
    out.append(remaining)
    return out


def weighted_round_robin(n_items: int, weights: list[float]) -> list[int]:
    """Smooth weighted round robin: index of the slot for each item."""
    if not weights:
        raise ValueError("no slots")
    w = [max(x, 0.0) for x in weights]
    if sum(w) <= 0:
        w = [1.0] * len(weights)
    total = sum(w)
    credit = [0.0] * len(w)
    out = []
    for _ in range(n_items):
        for i in range(len(w)):
            credit[i] += w[i]
        pick = max(range(len(w)), key=lambda i: (credit[i], -i))
        credit[pick] -= total
        out.append(pick)
    return out


def split_demand(
    demand: Demand,
    min_tu: float,
    max_tu: float,
    paths: list[Path],
    rates: list[float] | None = None,
) -> list[TransactionUnit]:
    """Partition a demand into transaction units spread over the paths.

    Unit amounts are bounded by [min_tu, max_tu] (one small remainder
    allowed), sum exactly to the demand, and go to paths by round robin
    weighted with the current per-path rates.
    """
    if not paths:
        raise ValueError("no paths to split over")
    amounts = split_amounts(demand.amount, min_tu, max_tu)
    weights = list(rates) if rates is not None else [1.0] * len(paths)
    slots = weighted_round_robin(len(amounts), weights)
    units = []
    for i, (amt, slot) in enumerate(zip(amounts, slots)):
        units.append(
            TransactionUnit(
                tuid=make_tuid(demand.tid, i),
                parent_tid=demand.tid,
                amount=amt,
                path=paths[slot],
                deadline=demand.deadline,
                created=demand.created,
            )
        )
    return units


# ---------------------------------------------------------------------------
# Prices
# ---------------------------------------------------------------------------


@dataclass
class FlowStats:
    """Per-channel flow measurements over the last update period.

    ``n_a``/``n_b``: funds each end must keep locked to sustain its
    outgoing flow (measured rate times the confirmation delay).
    ``m_a``/``m_b``: token value that entered the channel at each end.
    """

    n_a: float = 0.0
    n_b: float = 0.0
    m_a: float = 0.0
    m_b: float = 0.0
    delta_lockup: float = 1.0

    def __post_init__(self):
        if min(self.n_a, self.n_b, self.m_a, self.m_b) < 0:
            raise ValueError("flow stats must be nonnegative")


class PriceState:
    """Capacity and imbalance prices for every channel of a graph."""

    def __init__(self, kappa: float = 0.01, eta: float = 0.01, t_fee: float = 0.01):
        if kappa <= 0 or eta <= 0:
            raise ValueError("step sizes must be positive")
        if not 0 < t_fee < 1:
            raise ValueError("t_fee must be in (0, 1)")
        self.kappa = kappa
        self.eta = eta
        self.t_fee = t_fee
        self.lam: dict[int, float] = {}
        self.mu: dict[tuple[int, bool], float] = {}

    def lam_of(self, chan: Channel) -> float:
        return self.lam.get(chan.cid, 0.0)

    def mu_of(self, chan: Channel, src: int) -> float:
        return self.mu.get((chan.cid, src == chan.a), 0.0)

    def update_capacity_price(self, chan: Channel, stats: FlowStats) -> float:
        new = max(0.0, self.lam_of(chan) + self.kappa * (stats.n_a + stats.n_b - chan.capacity))
        self.lam[chan.cid] = new
        return new

    def update_imbalance_price(self, chan: Channel, stats: FlowStats) -> tuple[float, float]:
        step = self.eta * (stats.m_a - stats.m_b)
        ab = self.mu_of(chan, chan.a) + step
        ba = self.mu_of(chan, chan.b) - step
        self.mu[(chan.cid, True)] = ab
        self.mu[(chan.cid, False)] = ba
        return ab, ba

    def channel_price(self, chan: Channel, src: int) -> float:
        dst = chan.other(src)
        return 2.0 * self.lam_of(chan) + self.mu_of(chan, src) - self.mu_of(chan, dst)

    def forwarding_fee(self, chan: Channel, src: int) -> float:
        return max(0.0, self.t_fee * self.channel_price(chan, src))

    def path_price(self, graph: PcnGraph, path: Path) -> float:
        total = 0.0
        for u, v in path.pairs():
            chan = graph.best_channel(u, v)
            if chan is None:
                raise PathBrokenError(f"no channel between hops {u}-{v}")
            total += self.channel_price(chan, u)
        return (1.0 + self.t_fee) * total


def probe_path(state: PriceState, graph: PcnGraph, path: Path) -> float:
    """Sample the path price; raises PathBrokenError on a missing channel."""
    return state.path_price(graph, path)


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


@dataclass
class PathRate:
    path: Path
    r_p: float = 0.0
    alpha: float = 0.2

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.r_p < 0:
            raise ValueError("rate must be nonnegative")


def update_rate(
    rate: PathRate,
    rho: float,
    pair_total_rate: float,
    r_floor: float = R_FLOOR,
    r_max: float = 1e6,
) -> float:
    """One rate-control step toward the utility/price fixed point.

    Marginal utility is that of log utility in the pair's total outgoing
    rate, floored at ``r_floor``.  Beyond numerical safety, the floor acts
    as marginal-utility saturation: when a path's price stays above
    ``1/r_floor`` the fixed point is exactly zero, so a starved direction
    shuts off instead of leaking a trickle forever.
    """
    marginal = 1.0 / max(pair_total_rate, r_floor)
    rate.r_p = min(r_max, max(0.0, rate.r_p + rate.alpha * (marginal - rho)))
    return rate.r_p


# ---------------------------------------------------------------------------
# Congestion control
# ---------------------------------------------------------------------------


@dataclass
class CongestionState:
    """Per-path windows plus the queue/window tuning constants.

    ``min_window`` keeps a probe trickle alive: a fully closed window
    would be an absorbing state, since growth happens only on successes.
    The floor never raises a window above its pre-shrink value.
    """

    beta: float = 10.0
    gamma: float = 0.1
    delay_threshold: float = 0.4
    queue_cap: float = 8000.0
    initial_window: float = 40.0
    min_window: float = 4.0
    windows: dict = field(default_factory=dict)

    def window(self, path_key) -> float:
        return self.windows.setdefault(path_key, self.initial_window)

    def on_marked_abort(self, path_key) -> float:
        """Cancellation of a marked unit shrinks the window."""
        old = self.window(path_key)
        w = old - self.beta
        if w < self.min_window:
            w = min(old, self.min_window)
        self.windows[path_key] = max(0.0, w)
        return self.windows[path_key]

    def on_clean_success(self, path_key, sibling_keys) -> float:
        """Successful unmarked transmission grows the window, damped by the
        total window mass across the pair's paths."""
        total = 0.0
        for key in sibling_keys:
            total += self.window(key)
        w = self.window(path_key) + self.gamma / max(total, 1e-9)
        self.windows[path_key] = w
        return w


def decide_admission(
    amount: float,
    path_rate: float,
    process_rate: float,
    available_funds: float,
    queue_value: float,
    queue_cap: float,
    outstanding: float,
    window: float,
) -> tuple[AdmitOutcome, str | None]:
    """Admission check for one unit at one channel hop.

    Returns the outcome and where the unit waits ("source" when blocked by
    the window, "channel" when the channel is over rate or underfunded).
    """
    if outstanding + amount > window:
        return AdmitOutcome.QUEUED, "source"
    if path_rate > process_rate or available_funds < amount:
        if queue_value + amount > queue_cap:
            return AdmitOutcome.REJECTED, None
        return AdmitOutcome.QUEUED, "channel"
    return AdmitOutcome.ADMITTED, None


def mark_overdue(entries: list, now: float, threshold: float) -> list:
    """Flag queued units whose waiting time exceeded the delay threshold."""
    marked = []
    for _, enq_time, tu in entries:
        if not tu.marked and now - enq_time > threshold:
            tu.marked = True
            marked.append(tu)
    return marked


def schedule_queue(entries: list, policy: SchedulerPolicy):
    """Pick the next queue entry under the policy; ties broken by tuid.

    Entries are (seq, enqueue_time, tu) triples; the chosen entry is
    removed from the list and returned.
    """
    if not entries:
        raise ValueError("empty queue")
    if policy == SchedulerPolicy.FIFO:
        entry = min(entries, key=lambda e: (e[1], e[2].tuid))
    elif policy == SchedulerPolicy.LIFO:
        entry = min(entries, key=lambda e: (-e[1], e[2].tuid))
    elif policy == SchedulerPolicy.SPF:
        entry = min(entries, key=lambda e: (e[2].amount, e[2].tuid))
    elif policy == SchedulerPolicy.EDF:
        entry = min(entries, key=lambda e: (e[2].deadline, e[2].tuid))
    else:
        raise ValueError(f"unknown policy {policy}")
    entries.remove(entry)
    return entry

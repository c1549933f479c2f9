"""PCN graph model, generators, and path selection.

A payment-channel network is an undirected multigraph whose edges carry a
pair of directional balances.  Everything here is pure given (parameters,
seed); mutation of balances happens only inside the simulator event loop.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from pcnkit.errors import TopologyError


class NodeRole(Enum):
    CLIENT = "client"
    HUB_CANDIDATE = "candidate"
    ACTIVE_HUB = "hub"


class PathKind(Enum):
    KSP = "ksp"            # Yen-style k shortest paths
    HEURISTIC = "heuristic"  # paths maximizing total channel funds
    EDW = "edw"            # edge-disjoint widest paths
    EDS = "eds"            # edge-disjoint shortest paths


DEFAULT_MAX_HTLC = 483  # protocol-level cap on in-flight sub-payments per direction


@dataclass
class Channel:
    """Bidirectional payment channel.

    Value never leaves the channel: spendable balances plus in-flight
    escrow always sum to the capacity.  Plain transfers settle instantly;
    lock/settle/refund model relayed units whose value is held in escrow
    until the end-to-end payment resolves.
    """

    cid: int
    a: int
    b: int
    balance_ab: float
    balance_ba: float
    max_htlc: int = DEFAULT_MAX_HTLC
    capacity: float = field(init=False)
    escrow_ab: float = field(default=0.0, repr=False)
    escrow_ba: float = field(default=0.0, repr=False)
    # Simulator-owned state: queued transaction units and in-flight counts,
    # keyed by sending endpoint.
    queue_ab: list = field(default_factory=list, repr=False)
    queue_ba: list = field(default_factory=list, repr=False)
    in_flight_ab: int = field(default=0, repr=False)
    in_flight_ba: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-channel at node {self.a}")
        if self.balance_ab < 0 or self.balance_ba < 0:
            raise TopologyError(f"negative balance on channel {self.a}-{self.b}")
        self.capacity = self.balance_ab + self.balance_ba

    def other(self, node: int) -> int:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise TopologyError(f"node {node} not an endpoint of channel {self.cid}")

    def balance_from(self, node: int) -> float:
        """Spendable funds in the direction leaving ``node``."""
        if node == self.a:
            return self.balance_ab
        if node == self.b:
            return self.balance_ba
        raise TopologyError(f"node {node} not an endpoint of channel {self.cid}")

    def transfer(self, src: int, amount: float) -> None:
        """Move ``amount`` from ``src``'s side to the other side."""
        if amount < 0:
            raise ValueError("negative transfer")
        if self.balance_from(src) + 1e-12 < amount:
            raise TopologyError(
                f"insufficient funds on channel {self.cid} from {src}: "
                f"{self.balance_from(src)} < {amount}"
            )
        if src == self.a:
            self.balance_ab -= amount
            self.balance_ba += amount
        else:
            self.balance_ba -= amount
            self.balance_ab += amount

    # -- in-flight escrow (simulator semantics) -------------------------

    def lock(self, src: int, amount: float) -> None:
        """Escrow ``amount`` from src's side pending end-to-end resolution."""
        if self.balance_from(src) + 1e-12 < amount:
            raise TopologyError(
                f"insufficient funds to lock on channel {self.cid} from {src}"
            )
        if src == self.a:
            self.balance_ab -= amount
            self.escrow_ab += amount
            self.in_flight_ab += 1
        else:
            self.balance_ba -= amount
            self.escrow_ba += amount
            self.in_flight_ba += 1

    def settle_lock(self, src: int, amount: float) -> None:
        """Release escrow toward the receiving side (payment completed)."""
        if src == self.a:
            self.escrow_ab -= amount
            self.balance_ba += amount
            self.in_flight_ab -= 1
        else:
            self.escrow_ba -= amount
            self.balance_ab += amount
            self.in_flight_ba -= 1

    def refund_lock(self, src: int, amount: float) -> None:
        """Return escrow to the sending side (payment aborted)."""
        if src == self.a:
            self.escrow_ab -= amount
            self.balance_ab += amount
            self.in_flight_ab -= 1
        else:
            self.escrow_ba -= amount
            self.balance_ba += amount
            self.in_flight_ba -= 1

    def inflight_from(self, node: int) -> int:
        return self.in_flight_ab if node == self.a else self.in_flight_ba

    def total_value(self) -> float:
        return self.balance_ab + self.balance_ba + self.escrow_ab + self.escrow_ba

    def queue_from(self, node: int) -> list:
        return self.queue_ab if node == self.a else self.queue_ba

    def queued_value(self, node: int) -> float:
        return sum(entry[-1].amount for entry in self.queue_from(node))


@dataclass(frozen=True)
class Path:
    """Ordered node sequence plus its width (min directional balance)."""

    hops: tuple[int, ...]
    width: float

    def __len__(self) -> int:
        return len(self.hops)

    @property
    def n_channels(self) -> int:
        return len(self.hops) - 1

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.hops[:-1], self.hops[1:]))


class PcnGraph:
    """Nodes with roles plus channels, with an adjacency index.

    Parallel channels are allowed only between hub-role endpoints and are
    capped at ``max_parallel``; every other pair gets exactly one channel.
    """

    def __init__(self, max_parallel: int = 1):
        self.max_parallel = max_parallel
        self.roles: dict[int, NodeRole] = {}
        self.channels: list[Channel] = []
        self._adj: dict[int, list[Channel]] = {}
        self._by_pair: dict[frozenset, list[Channel]] = {}

    # -- construction -------------------------------------------------

    def add_node(self, nid: int, role: NodeRole = NodeRole.CLIENT) -> None:
        if nid in self.roles:
            raise TopologyError(f"duplicate node id {nid}")
        self.roles[nid] = role
        self._adj[nid] = []

    def set_role(self, nid: int, role: NodeRole) -> None:
        if nid not in self.roles:
            raise TopologyError(f"unknown node {nid}")
        self.roles[nid] = role

    def add_channel(
        self,
        a: int,
        b: int,
        balance_ab: float,
        balance_ba: float,
        max_htlc: int = DEFAULT_MAX_HTLC,
    ) -> Channel:
        for nid in (a, b):
            if nid not in self.roles:
                raise TopologyError(f"unknown node {nid}")
        pair = frozenset((a, b))
        existing = self._by_pair.get(pair, [])
        if existing:
            both_hubs = all(
                self.roles[n] in (NodeRole.ACTIVE_HUB, NodeRole.HUB_CANDIDATE)
                for n in (a, b)
            )
            if not both_hubs:
                raise TopologyError(f"duplicate channel between {a} and {b}")
            if len(existing) >= self.max_parallel:
                raise TopologyError(
                    f"parallel-channel cap {self.max_parallel} reached for {a}-{b}"
                )
        chan = Channel(len(self.channels), a, b, balance_ab, balance_ba, max_htlc)
        self.channels.append(chan)
        self._adj[a].append(chan)
        self._adj[b].append(chan)
        self._by_pair.setdefault(pair, []).append(chan)
        return chan

    # -- queries ------------------------------------------------------

    @property
    def nodes(self) -> list[int]:
        return sorted(self.roles)

    def nodes_with_role(self, role: NodeRole) -> list[int]:
        return sorted(n for n, r in self.roles.items() if r == role)

    def channels_between(self, a: int, b: int) -> list[Channel]:
        return list(self._by_pair.get(frozenset((a, b)), []))

    def incident(self, node: int) -> list[Channel]:
        return list(self._adj[node])

    def neighbors(self, node: int) -> list[int]:
        return sorted({c.other(node) for c in self._adj[node]})

    def best_channel(self, src: int, dst: int) -> Channel | None:
        """Channel between src and dst with the most spendable funds from src."""
        options = self._by_pair.get(frozenset((src, dst)))
        if not options:
            return None
        return max(options, key=lambda c: (c.balance_from(src), -c.cid))

    def directional_balance(self, src: int, dst: int) -> float:
        """Total spendable funds from src toward dst across parallel channels."""
        options = self._by_pair.get(frozenset((src, dst)), [])
        return sum(c.balance_from(src) for c in options)

    def total_value(self) -> float:
        return sum(c.total_value() for c in self.channels)

    def path_width(self, hops: Iterable[int]) -> float:
        """Min over hops of the best single-channel directional balance."""
        hops = tuple(hops)
        width = math.inf
        for u, v in zip(hops[:-1], hops[1:]):
            chan = self.best_channel(u, v)
            if chan is None:
                raise TopologyError(f"no channel between consecutive hops {u}-{v}")
            width = min(width, chan.balance_from(u))
        return width

    def make_path(self, hops: Iterable[int]) -> Path:
        hops = tuple(hops)
        return Path(hops, self.path_width(hops))

    def copy(self) -> "PcnGraph":
        g = PcnGraph(self.max_parallel)
        for nid in self.nodes:
            g.add_node(nid, self.roles[nid])
        for c in self.channels:
            g.add_channel(c.a, c.b, c.balance_ab, c.balance_ba, c.max_htlc)
        return g


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def generate_small_world(
    n: int, ring_degree: int, rewire_p: float, seed: int, max_tries: int = 64
) -> PcnGraph:
    """Small-world PCN topology; regenerated with sub-seeds until connected."""
    if n < 3:
        raise ValueError("need at least 3 nodes")
    if ring_degree % 2 != 0 or ring_degree >= n or ring_degree <= 0:
        raise ValueError("ring_degree must be even, positive, and < n")
    if not 0.0 <= rewire_p <= 1.0:
        raise ValueError("rewire_p must be in [0, 1]")
    for attempt in range(max_tries):
        ws = nx.watts_strogatz_graph(n, ring_degree, rewire_p, seed=seed + attempt)
        if nx.is_connected(ws):
            break
    else:
        raise TopologyError(f"no connected graph after {max_tries} tries")
    graph = PcnGraph()
    for nid in range(n):
        graph.add_node(nid, NodeRole.CLIENT)
    for a, b in sorted(tuple(sorted(e)) for e in ws.edges()):
        graph.add_channel(a, b, 0.0, 0.0)
    return graph


def fit_lognormal(min_cap: float, mean_cap: float, median_cap: float) -> tuple[float, float]:
    """(mu, sigma) of a log-normal with the given median and mean.

    The floor clamp at ``min_cap`` biases the mean upward by a negligible
    amount at realistic parameter ratios, so the closed form suffices.
    """
    if not (0 < min_cap < median_cap < mean_cap):
        raise ValueError("need 0 < min_cap < median_cap < mean_cap")
    mu = math.log(median_cap)
    sigma = math.sqrt(2.0 * math.log(mean_cap / median_cap))
    return mu, sigma


def assign_capacities(
    graph: PcnGraph,
    min_cap: float = 10.0,
    mean_cap: float = 403.0,
    median_cap: float = 152.0,
    seed: int = 0,
) -> PcnGraph:
    """Draw heavy-tailed channel capacities; split balances 50/50.

    Capacities are log-normal (fitted to median and mean) with a floor at
    ``min_cap``.  Mutates and returns ``graph``.
    """
    mu, sigma = fit_lognormal(min_cap, mean_cap, median_cap)
    rng = np.random.default_rng(seed)
    draws = np.maximum(rng.lognormal(mu, sigma, size=len(graph.channels)), min_cap)
    for chan, cap in zip(graph.channels, draws):
        half = float(cap) / 2.0
        chan.balance_ab = half
        chan.balance_ba = half
        chan.capacity = float(cap)
    return graph


def build_multi_star(
    clients: Iterable[int],
    deployment: Mapping[int, int] | Iterable[int],
    assignment: Mapping[int, int],
    hub_mesh: Iterable[tuple[int, int]] | None = None,
    spoke_balance: float = 100.0,
    mesh_balance: float = 1000.0,
) -> PcnGraph:
    """Multi-star topology: one spoke per client, hubs interconnected.

    ``deployment`` is either a candidate->0/1 mapping or an iterable of
    deployed hub ids; ``assignment`` maps each client to its hub.  The hub
    mesh defaults to the complete graph over deployed hubs.
    """
    if isinstance(deployment, Mapping):
        hubs = sorted(n for n, flag in deployment.items() if flag)
    else:
        hubs = sorted(set(deployment))
    if not hubs:
        raise TopologyError("no deployed hubs")
    clients = sorted(set(clients))
    hub_set = set(hubs)
    for m in clients:
        if m not in assignment:
            raise TopologyError(f"client {m} has no assigned hub")
        if assignment[m] not in hub_set:
            raise TopologyError(f"client {m} assigned to undeployed hub {assignment[m]}")
    graph = PcnGraph()
    for h in hubs:
        graph.add_node(h, NodeRole.ACTIVE_HUB)
    for m in clients:
        graph.add_node(m, NodeRole.CLIENT)
        graph.add_channel(m, assignment[m], spoke_balance / 2, spoke_balance / 2)
    if hub_mesh is None:
        hub_mesh = [(u, v) for i, u in enumerate(hubs) for v in hubs[i + 1 :]]
    for u, v in sorted(tuple(sorted(e)) for e in hub_mesh):
        if u not in hub_set or v not in hub_set:
            raise TopologyError(f"mesh edge {u}-{v} touches an undeployed hub")
        graph.add_channel(u, v, mesh_balance / 2, mesh_balance / 2)
    return graph


# ---------------------------------------------------------------------------
# Distances and paths
# ---------------------------------------------------------------------------


def hop_matrix(graph: PcnGraph) -> np.ndarray:
    """All-pairs hop counts by BFS; raises naming an unreachable pair."""
    nodes = graph.nodes
    index = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    hops = np.full((n, n), -1, dtype=np.int64)
    for src in nodes:
        si = index[src]
        hops[si, si] = 0
        frontier = deque([src])
        while frontier:
            u = frontier.popleft()
            du = hops[si, index[u]]
            for v in graph.neighbors(u):
                vi = index[v]
                if hops[si, vi] < 0:
                    hops[si, vi] = du + 1
                    frontier.append(v)
        missing = np.flatnonzero(hops[si] < 0)
        if missing.size:
            raise TopologyError(
                f"graph disconnected: no path from {src} to {nodes[missing[0]]}"
            )
    return hops


def _bfs_shortest(
    graph: PcnGraph, s: int, e: int, removed: set[frozenset]
) -> tuple[int, ...] | None:
    """Shortest hop path avoiding removed node pairs; deterministic ties."""
    parent: dict[int, int] = {s: s}
    frontier = deque([s])
    while frontier:
        u = frontier.popleft()
        if u == e:
            break
        for v in graph.neighbors(u):
            if v in parent or frozenset((u, v)) in removed:
                continue
            parent[v] = u
            frontier.append(v)
    if e not in parent:
        return None
    hops = [e]
    while hops[-1] != s:
        hops.append(parent[hops[-1]])
    return tuple(reversed(hops))


def _widest_path(
    graph: PcnGraph, s: int, e: int, removed: set[frozenset]
) -> tuple[int, ...] | None:
    """Max-min directional-balance path; shortest among equally wide ones.

    Binary search over the distinct balance values, running a threshold BFS
    at each probe: deterministic and O(BFS * log E).
    """
    widths = sorted(
        {
            c.balance_from(src)
            for c in graph.channels
            if frozenset((c.a, c.b)) not in removed
            for src in (c.a, c.b)
        },
        reverse=True,
    )
    if not widths:
        return None

    def reach(threshold: float) -> tuple[int, ...] | None:
        parent: dict[int, int] = {s: s}
        frontier = deque([s])
        while frontier:
            u = frontier.popleft()
            if u == e:
                break
            for v in graph.neighbors(u):
                if v in parent or frozenset((u, v)) in removed:
                    continue
                chan = graph.best_channel(u, v)
                if chan is None or chan.balance_from(u) < threshold:
                    continue
                parent[v] = u
                frontier.append(v)
        if e not in parent:
            return None
        hops = [e]
        while hops[-1] != s:
            hops.append(parent[hops[-1]])
        return tuple(reversed(hops))

    lo, hi = 0, len(widths) - 1  # widths[lo] widest
    if reach(widths[lo]) is not None:
        return reach(widths[lo])
    if reach(widths[hi]) is None:
        return None
    # invariant: widths[lo] unreachable, widths[hi] reachable
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reach(widths[mid]) is None:
            lo = mid
        else:
            hi = mid
    return reach(widths[hi])


def _yen_ksp(
    graph: PcnGraph, s: int, e: int, k: int, removed: set[frozenset] | None = None
) -> list[tuple[int, ...]]:
    """Yen's k shortest loopless paths on hop count; deterministic ties."""
    removed = removed or set()
    first = _bfs_shortest(graph, s, e, removed)
    if first is None:
        return []
    found = [first]
    candidates: list[tuple[int, tuple[int, ...]]] = []
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned = set(removed)
            for p in found:
                if p[: i + 1] == root and len(p) > i + 1:
                    banned.add(frozenset((p[i], p[i + 1])))
            # exclude root nodes (except spur) by banning all their pairs
            blocked_nodes = set(root[:-1])
            extra_banned = {
                frozenset((c.a, c.b))
                for c in graph.channels
                if c.a in blocked_nodes or c.b in blocked_nodes
            }
            spur_path = _bfs_shortest(graph, spur, e, banned | extra_banned)
            if spur_path is None:
                continue
            total = root[:-1] + spur_path
            entry = (len(total), total)
            if total not in (p for _, p in candidates) and total not in found:
                candidates.append(entry)
        if not candidates:
            break
        candidates.sort()
        _, best = candidates.pop(0)
        found.append(best)
    return found


def candidate_paths(
    graph: PcnGraph, s: int, e: int, k: int, kind: PathKind = PathKind.EDW
) -> list[Path]:
    """Up to k candidate paths from s to e.

    EDW/EDS paths are pairwise channel-disjoint.  EDW is ordered by
    nonincreasing width, EDS by nondecreasing length; KSP is Yen's k
    shortest; HEURISTIC ranks a KSP-derived pool by total funds on path.
    """
    if s == e:
        raise ValueError("source equals destination")
    if k < 1:
        raise ValueError("k must be >= 1")
    if kind in (PathKind.EDS, PathKind.EDW):
        finder = _bfs_shortest if kind == PathKind.EDS else _widest_path
        removed: set[frozenset] = set()
        out: list[Path] = []
        for _ in range(k):
            hops = finder(graph, s, e, removed)
            if hops is None:
                break
            out.append(graph.make_path(hops))
            removed.update(frozenset(p) for p in zip(hops[:-1], hops[1:]))
        if kind == PathKind.EDW:
            out.sort(key=lambda p: (-p.width, len(p.hops), p.hops))
        return out
    if kind == PathKind.KSP:
        return [graph.make_path(h) for h in _yen_ksp(graph, s, e, k)]
    if kind == PathKind.HEURISTIC:
        pool = _yen_ksp(graph, s, e, max(4 * k, 16))
        scored = []
        for hops in pool:
            funds = 0.0
            for u, v in zip(hops[:-1], hops[1:]):
                chan = graph.best_channel(u, v)
                funds += chan.balance_from(u)
            scored.append((-funds, len(hops), hops))
        scored.sort()
        return [graph.make_path(h) for _, _, h in scored[:k]]
    raise ValueError(f"unknown path kind {kind}")


# ---------------------------------------------------------------------------
# Line-oriented text format
# ---------------------------------------------------------------------------


def dump_graph_text(graph: PcnGraph) -> str:
    """Serialize as ``node <id> <role>`` / ``chan <a> <b> <bal_ab> <bal_ba>``."""
    lines = [f"node {nid} {graph.roles[nid].value}" for nid in graph.nodes]
    for c in graph.channels:
        lines.append(f"chan {c.a} {c.b} {c.balance_ab!r} {c.balance_ba!r}")
    return "\n".join(lines) + "\n"


def parse_graph_text(text: str, max_parallel: int = 1) -> PcnGraph:
    graph = PcnGraph(max_parallel=max_parallel)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) == 3:
            graph.add_node(int(parts[1]), NodeRole(parts[2]))
        elif parts[0] == "chan" and len(parts) == 5:
            graph.add_channel(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
        else:
            raise TopologyError(f"bad graph line {lineno}: {raw!r}")
    return graph


def save_graph(graph: PcnGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_graph_text(graph))


def load_graph(path, max_parallel: int = 1) -> PcnGraph:
    with open(path) as fh:
        return parse_graph_text(fh.read(), max_parallel=max_parallel)

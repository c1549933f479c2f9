"""Mock attested-execution payment protocol.

Executable state machines for the hub payment flow: an attested-execution
registry standing in for secure processors, an append-only ledger with a
pluggable validity predicate, a key-management group, batched state
commits guarded by monotonic counters, and an adversarial message
transport (drop / delay / replay).

Cryptography is mocked: encryption is a reversible tagged encoding bound
to a key nonce, signatures are keyed digests.  The protocol logic and its
invariants (conservation, atomicity, attestation soundness) are the thing
under test, not cryptographic strength.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum

from pcnkit.errors import InvariantViolation, MockCryptoError
from pcnkit.routing import make_tuid, split_amounts
from pcnkit.topology import PcnGraph, build_multi_star

MSG_LATENCY = 0.01


# ---------------------------------------------------------------------------
# Mock cryptography
# ---------------------------------------------------------------------------


class KeyScope(Enum):
    PROCESSOR = "processor"
    TRANSACTION = "transaction"
    TRANSACTION_UNIT = "transaction_unit"


@dataclass(frozen=True)
class MockPublicKey:
    scope: KeyScope
    nonce: str


@dataclass(frozen=True)
class MockSecretKey:
    scope: KeyScope
    nonce: str


@dataclass(frozen=True)
class MockKeypair:
    pk: MockPublicKey
    sk: MockSecretKey
    scope: KeyScope


def mock_keygen(scope: KeyScope, rng: random.Random) -> MockKeypair:
    nonce = f"{rng.getrandbits(64):016x}"
    return MockKeypair(MockPublicKey(scope, nonce), MockSecretKey(scope, nonce), scope)


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, default=str)


@dataclass(frozen=True)
class MockCiphertext:
    key_nonce: str
    blob: bytes

    @property
    def leak_len(self) -> int:
        return len(self.blob)


def mock_encrypt(pk: MockPublicKey, plaintext) -> MockCiphertext:
    return MockCiphertext(pk.nonce, _canonical(plaintext).encode())


def mock_decrypt(sk: MockSecretKey, ct: MockCiphertext):
    if sk.nonce != ct.key_nonce:
        raise MockCryptoError("wrong key for ciphertext")
    return json.loads(ct.blob.decode())


def mock_sign(sk: MockSecretKey, payload) -> str:
    return hashlib.sha256((sk.nonce + "|" + _canonical(payload)).encode()).hexdigest()


def mock_verify(pk: MockPublicKey, payload, sigma: str) -> bool:
    return mock_sign(MockSecretKey(pk.scope, pk.nonce), payload) == sigma


# ---------------------------------------------------------------------------
# Attested execution
# ---------------------------------------------------------------------------


@dataclass
class Attestation:
    sigma: str
    idx: str
    eid: str
    prog: str
    outp: object


class AttestedExecution:
    """Registry of enclaves: install loads a program, resume steps it and
    signs (session id, enclave id, program, output) with the processor key."""

    def __init__(self, session_id: str, registered: set, rng: random.Random):
        self.session_id = session_id
        self.registered = set(registered)
        self._rng = rng
        keys = mock_keygen(KeyScope.PROCESSOR, rng)
        self.mpk = keys.pk
        self._msk = keys.sk
        self._table: dict[tuple[str, int], tuple[str, object, dict]] = {}

    def getpk(self) -> MockPublicKey:
        return self.mpk

    def install(self, party: int, prog, idx: str | None = None) -> str:
        if party not in self.registered:
            raise InvariantViolation(f"party {party} not registered")
        idx = self.session_id if idx is None else idx
        if idx != self.session_id:
            raise InvariantViolation("honest install must use the session id")
        eid = f"{self._rng.getrandbits(64):016x}"
        self._table[(eid, party)] = (idx, prog, {})
        return eid

    def resume(self, party: int, eid: str, inp) -> tuple[object, Attestation]:
        slot = self._table.get((eid, party))
        if slot is None:
            raise InvariantViolation(f"unknown enclave {eid} for party {party}")
        idx, prog, mem = slot
        outp, mem = prog(inp, mem)
        self._table[(eid, party)] = (idx, prog, mem)
        prog_id = getattr(prog, "__name__", str(prog))
        sigma = mock_sign(self._msk, (idx, eid, prog_id, outp))
        return outp, Attestation(sigma, idx, eid, prog_id, outp)

    def verify(self, att: Attestation) -> bool:
        return mock_verify(self.mpk, (att.idx, att.eid, att.prog, att.outp), att.sigma)


class IasVerifier:
    """Mock attestation service: checks a proof and co-signs the verdict."""

    def __init__(self, gatt: AttestedExecution, rng: random.Random):
        self._gatt = gatt
        self._keys = mock_keygen(KeyScope.PROCESSOR, rng)

    def verify(self, att: Attestation) -> tuple[int, str, str]:
        b = 1 if self._gatt.verify(att) else 0
        sigma_ias = mock_sign(self._keys.sk, (b, att.sigma))
        return b, att.sigma, sigma_ias


# ---------------------------------------------------------------------------
# Append-only ledger
# ---------------------------------------------------------------------------


class Ledger:
    """Keyed append-only storage guarded by a successor predicate."""

    def __init__(self, succ):
        self._succ = succ
        self._storage: dict[str, tuple[object, int]] = {}
        self.seq = 0
        self.log: list[tuple[int, str, object, int]] = []

    def read(self, tid: str):
        entry = self._storage.get(tid)
        return None if entry is None else entry[0]

    def append(self, tid: str, inp, party: int) -> str:
        prev = self.read(tid)
        if self._succ(prev, inp) != 1:
            return "failure"
        self.seq += 1
        self._storage[tid] = (inp, party)
        self.log.append((self.seq, tid, inp, party))
        return "success"


def version_succ(prev, inp) -> int:
    """Default validity: first write, or strictly increasing version field."""
    if prev is None:
        return 1
    try:
        return 1 if inp["version"] > prev["version"] else 0
    except (TypeError, KeyError):
        return 0


# ---------------------------------------------------------------------------
# Key management group
# ---------------------------------------------------------------------------


class Kmg:
    """Designated hubs answering key requests; pairs are cached per id.

    A non-member hub's request is forwarded through a member (one extra
    round trip, counted in ``forwarded_requests``); non-hubs are refused.
    """

    def __init__(self, members: list[int], hubs: list[int], rng: random.Random):
        if not members:
            raise ValueError("key group needs at least one member")
        self.members = sorted(members)
        self.hubs = set(hubs) | set(members)
        self._rng = rng
        self._cache: dict[str, MockKeypair] = {}
        self.forwarded_requests = 0

    def keygen(self, requester: int, key_id: str, scope: KeyScope) -> MockKeypair:
        if requester not in self.hubs:
            raise InvariantViolation(f"key request from non-hub {requester}")
        if requester not in self.members:
            self.forwarded_requests += 1
        if key_id not in self._cache:
            self._cache[key_id] = mock_keygen(scope, self._rng)
        return self._cache[key_id]


# ---------------------------------------------------------------------------
# Monotonic counters and batched commits
# ---------------------------------------------------------------------------


class MonotonicCounter:
    def __init__(self, rate_cap_per_s: float = 10.0):
        self.value = 0
        self.rate_cap = rate_cap_per_s
        self._last_increment = -1e18

    def increment(self, now: float) -> int:
        if now < self._last_increment:
            raise InvariantViolation("counter time went backwards")
        self.value += 1
        self._last_increment = now
        return self.value


@dataclass
class CommittedBatch:
    counter: int
    updates: tuple


class BatchCommitter:
    """Aggregates state updates; one counter increment per committed batch.

    Replaying a batch whose counter is not ahead of the current counter is
    rejected (roll-back defense).
    """

    def __init__(self, window: float = 0.1, counter: MonotonicCounter | None = None):
        self.window = window
        self.counter = counter or MonotonicCounter()
        self.pending: list = []
        self.committed: list[CommittedBatch] = []

    def add(self, update) -> None:
        self.pending.append(update)

    def commit(self, now: float, apply_fn=None) -> CommittedBatch | None:
        if not self.pending:
            return None
        updates = tuple(self.pending)
        self.pending = []
        if apply_fn is not None:
            apply_fn(updates)
        batch = CommittedBatch(self.counter.increment(now), updates)
        self.committed.append(batch)
        return batch

    def replay(self, batch: CommittedBatch) -> str:
        if batch.counter <= self.counter.value:
            return "rejected"
        raise InvariantViolation("replayed batch carries a future counter")


# ---------------------------------------------------------------------------
# Adversarial transport
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdversaryAction:
    op: str          # "drop" | "delay" | "replay"
    kind: str        # message kind to match
    occurrence: int  # nth matching send, 0-based
    dt: float = 0.5  # extra delay for delay/replay


@dataclass
class Msg:
    kind: str
    src: int
    dst: int
    payload: dict
    uid: int = 0


class Transport:
    """Delivers messages in deterministic time order, applying the
    scheduled adversary actions to matching sends."""

    def __init__(self, actions: list[AdversaryAction] | None = None,
                 latency: float = MSG_LATENCY):
        self.latency = latency
        self.actions = list(actions or [])
        self._kind_counts: dict[str, int] = {}
        self._heap: list = []
        self._seq = 0
        self.dropped: list[Msg] = []
        self.observations: list[tuple] = []

    def send(self, msg: Msg, now: float, observe: bool = False) -> None:
        idx = self._kind_counts.get(msg.kind, 0)
        self._kind_counts[msg.kind] = idx + 1
        if observe:
            ct = msg.payload.get("ciphertext")
            self.observations.append(
                (msg.kind, msg.payload.get("tuid"),
                 ct.leak_len if ct is not None else None,
                 msg.payload.get("amount"))
            )
        delay = self.latency
        deliver = True
        replay = False
        for act in self.actions:
            if act.kind == msg.kind and act.occurrence == idx:
                if act.op == "drop":
                    deliver = False
                elif act.op == "delay":
                    delay += act.dt
                elif act.op == "replay":
                    replay = True
        if not deliver:
            self.dropped.append(msg)
            return
        self._push(now + delay, msg)
        if replay:
            self._push(now + delay + self.latency, msg)

    def _push(self, at: float, msg: Msg) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, msg))

    def schedule(self, at: float, event) -> None:
        self._push(at, event)

    def pop(self, until: float | None = None):
        if not self._heap:
            return None
        if until is not None and self._heap[0][0] > until:
            return None
        return heapq.heappop(self._heap)


# ---------------------------------------------------------------------------
# Payment harness
# ---------------------------------------------------------------------------


class PaymentStatus(Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    ROLLED_BACK = "rolled_back"


@dataclass
class PaymentStateRecord:
    tid: str
    theta: bool = False
    tu_states: dict = field(default_factory=dict)

    def refresh(self) -> None:
        self.theta = bool(self.tu_states) and all(self.tu_states.values())


@dataclass
class _Timer:
    kind: str
    payload: dict


@dataclass
class HarnessConfig:
    clients_per_hub: int = 1
    kmg_size: int = 1
    deadline: float = 3.0
    min_tu: float = 1.0
    max_tu: float = 4.0
    batch_window: float = 0.1
    spoke_balance: float = 400.0
    mesh_balance: float = 800.0
    latency: float = MSG_LATENCY


class PaymentHarness:
    """Two-hub multi-star network running the three-phase payment flow.

    Drives clients and hubs as message handlers over the adversarial
    transport; all balance mutations for a payment are journaled so an
    abort can restore the exact pre-transaction state.
    """

    HUB_A = 0
    HUB_B = 1

    def __init__(self, config: HarnessConfig | None = None, seed: int = 0,
                 adversary: list[AdversaryAction] | None = None):
        self.config = config or HarnessConfig()
        self.rng = random.Random(seed)
        cpb = self.config.clients_per_hub
        self.clients_a = [100 + i for i in range(cpb)]
        self.clients_b = [200 + i for i in range(cpb)]
        assignment = {c: self.HUB_A for c in self.clients_a}
        assignment.update({c: self.HUB_B for c in self.clients_b})
        self.graph: PcnGraph = build_multi_star(
            self.clients_a + self.clients_b,
            [self.HUB_A, self.HUB_B],
            assignment,
            spoke_balance=self.config.spoke_balance,
            mesh_balance=self.config.mesh_balance,
        )
        self.hub_of = assignment
        hubs = [self.HUB_A, self.HUB_B]
        self.gatt = AttestedExecution("sid-0", set(hubs), self.rng)
        self.ias = IasVerifier(self.gatt, self.rng)
        self.kmg = Kmg(hubs[: self.config.kmg_size], hubs, self.rng)
        self.ledger = Ledger(version_succ)
        self.transport = Transport(adversary, latency=self.config.latency)
        self.now = 0.0
        self.events_log: list[str] = []
        # enclave per hub runs the state-recording program
        self.eids = {h: self.gatt.install(h, _payment_prog) for h in hubs}
        self.batchers = {h: BatchCommitter(self.config.batch_window) for h in hubs}
        # per-hub protocol state
        self.hub_payments: dict[str, dict] = {}   # sender-hub view per tid
        self.hub_received: dict[int, dict] = {h: {} for h in hubs}  # tuid -> amount
        self.hub_seen_tuids: dict[int, set] = {h: set() for h in hubs}
        self.hub_consolidated: dict[int, set] = {h: set() for h in hubs}
        self.tuid_to_tid: dict[str, str] = {}
        self.client_outcomes: dict[str, dict] = {}
        self.journals: dict[str, list] = {}
        self.records: dict[str, PaymentStateRecord] = {}
        self.attestations: dict[str, Attestation] = {}
        self._uid = 0
        self._batches_scheduled = False

    # -- helpers ------------------------------------------------------

    def _log(self, actor, mtype, ident, outcome) -> None:
        self.events_log.append(f"{self.now:.3f} {actor} {mtype} {ident} {outcome}")

    def _send(self, kind, src, dst, payload, observe=False) -> None:
        self._uid += 1
        self.transport.send(Msg(kind, src, dst, payload, self._uid), self.now,
                            observe=observe)

    def _timer(self, at, kind, payload) -> None:
        self.transport.schedule(at, _Timer(kind, payload))

    def _transfer(self, src: int, dst: int, amount: float, tid: str) -> None:
        chan = self.graph.best_channel(src, dst)
        if chan is None:
            raise InvariantViolation(f"no channel {src}-{dst}")
        chan.transfer(src, amount)
        self.journals.setdefault(tid, []).append((chan.cid, src, amount))

    def _rollback(self, tid: str) -> None:
        for cid, src, amount in reversed(self.journals.get(tid, [])):
            chan = self.graph.channels[cid]
            chan.transfer(chan.other(src), amount)
        self.journals[tid] = []

    def total_value(self) -> float:
        return self.graph.total_value()

    def spoke_balance_of(self, client: int) -> float:
        chan = self.graph.best_channel(client, self.hub_of[client])
        return chan.balance_from(client)

    # -- public API ---------------------------------------------------

    def submit_payment(self, sender: int, recipient: int, amount: float,
                       at: float = 0.0) -> str:
        """Schedule a payment; returns its transaction id."""
        pay_req = _canonical({"s": sender, "r": recipient, "v": amount, "n": self._uid})
        tid = hashlib.sha256(pay_req.encode()).hexdigest()[:16]
        self._uid += 1
        self._timer(at, "client_start", {
            "tid": tid, "pay_req": pay_req, "sender": sender,
            "recipient": recipient, "amount": amount,
        })
        if not self._batches_scheduled:
            self._batches_scheduled = True
            self._timer(at + self.config.batch_window, "batch", {})
        return tid

    def run(self, until: float = 60.0) -> None:
        while True:
            item = self.transport.pop(until)
            if item is None:
                break
            at, _, obj = item
            self.now = at
            if isinstance(obj, _Timer):
                self._on_timer(obj)
            else:
                self._on_msg(obj)

    # -- event dispatch -------------------------------------------------

    def _on_timer(self, timer: _Timer) -> None:
        if timer.kind == "client_start":
            p = timer.payload
            self._log(f"client:{p['sender']}", "init", p["tid"], "sent")
            self._send("init", p["sender"], self.hub_of[p["sender"]], dict(p))
        elif timer.kind == "batch":
            for h, batcher in self.batchers.items():
                batcher.commit(self.now)
            self._timer(self.now + self.config.batch_window, "batch", {})
        elif timer.kind == "payment_deadline":
            tid = timer.payload["tid"]
            state = self.hub_payments.get(tid)
            if state is None or state["status"] != PaymentStatus.PENDING:
                return
            self._abort(tid, "deadline")

    def _abort(self, tid: str, reason: str) -> None:
        state = self.hub_payments[tid]
        state["status"] = PaymentStatus.ROLLED_BACK
        self._rollback(tid)
        record = self.records[tid]
        for tuid in record.tu_states:
            record.tu_states[tuid] = False  # refunded units are not completed
        record.refresh()
        self._log(f"hub:{state['hub']}", "rollback", tid, reason)
        outcome = self.client_outcomes.setdefault(tid, {})
        outcome["status"] = PaymentStatus.ROLLED_BACK

    def _on_msg(self, msg: Msg) -> None:
        handler = getattr(self, f"_h_{msg.kind}", None)
        if handler is None:
            raise InvariantViolation(f"no handler for message kind {msg.kind}")
        handler(msg)

    # -- client handlers --------------------------------------------------

    def _h_init(self, msg: Msg) -> None:
        # sender hub: create state, fetch the transaction key, reply
        hub = msg.dst
        p = msg.payload
        tid = hashlib.sha256(p["pay_req"].encode()).hexdigest()[:16]
        if tid in self.hub_payments:
            self._log(f"hub:{hub}", "init", tid, "duplicate")
            return
        keys = self.kmg.keygen(hub, tid, KeyScope.TRANSACTION)
        record = PaymentStateRecord(tid)
        self.records[tid] = record
        self.hub_payments[tid] = {
            "hub": hub, "sender": p["sender"], "recipient": p["recipient"],
            "amount": p["amount"], "keys": keys, "status": PaymentStatus.PENDING,
            "units": {}, "acked": set(), "stage": "init",
            "deadline": self.now + self.config.deadline,
        }
        self._timer(self.hub_payments[tid]["deadline"], "payment_deadline", {"tid": tid})
        self._log(f"hub:{hub}", "init", tid, "state_created")
        self._send("init_resp", hub, p["sender"], {
            "tid": tid, "pk_tid": keys.pk, "mpk": self.gatt.getpk(),
            "theta": record.theta,
        })

    def _h_init_resp(self, msg: Msg) -> None:
        # sender client: encrypt the demand, move funds, request processing
        client = msg.dst
        tid = msg.payload["tid"]
        state = self.hub_payments[tid]
        if state["status"] != PaymentStatus.PENDING or self.now > state["deadline"]:
            self._log(f"client:{client}", "pay_t", tid, "stale_init")
            return
        demand = [state["sender"], state["recipient"], state["amount"]]
        inp = mock_encrypt(msg.payload["pk_tid"], demand)
        self._transfer(client, self.hub_of[client], state["amount"], tid)
        self._log(f"client:{client}", "pay_t", tid, "funded")
        self._send("pay_t", client, self.hub_of[client], {"tid": tid, "ciphertext": inp})

    def _h_pay_t(self, msg: Msg) -> None:
        # sender hub: decrypt, split, key and dispatch every unit
        hub = msg.dst
        tid = msg.payload["tid"]
        state = self.hub_payments[tid]
        if state["status"] != PaymentStatus.PENDING or state["stage"] != "init":
            self._log(f"hub:{hub}", "pay_t", tid, "ignored")
            return
        demand = mock_decrypt(state["keys"].sk, msg.payload["ciphertext"])
        sender, recipient, amount = demand
        state["stage"] = "processing"
        amounts = split_amounts(amount, self.config.min_tu, self.config.max_tu)
        record = self.records[tid]
        recipient_hub = self.hub_of[recipient]
        for i, amt in enumerate(amounts):
            tuid = make_tuid(tid, i)
            unit_keys = self.kmg.keygen(hub, tuid, KeyScope.TRANSACTION_UNIT)
            record.tu_states[tuid] = False
            state["units"][tuid] = amt
            self.tuid_to_tid[tuid] = tid
            ct = mock_encrypt(unit_keys.pk, [sender, recipient, amt])
            self._transfer(hub, recipient_hub, amt, tid)
            self.batchers[hub].add(("unit_sent", tuid))
            self._log(f"hub:{hub}", "pay_tu", tuid, "sent")
            self._send("pay_tu", hub, recipient_hub,
                       {"tuid": tuid, "ciphertext": ct, "amount": amt},
                       observe=True)

    def _h_pay_tu(self, msg: Msg) -> None:
        # recipient hub: dedup, decrypt, check funds arrived, acknowledge
        hub = msg.dst
        tuid = msg.payload["tuid"]
        if tuid in self.hub_seen_tuids[hub]:
            self._log(f"hub:{hub}", "pay_tu", tuid, "replay_rejected")
            return
        self.hub_seen_tuids[hub].add(tuid)
        unit_keys = self.kmg.keygen(hub, tuid, KeyScope.TRANSACTION_UNIT)
        demand = mock_decrypt(unit_keys.sk, msg.payload["ciphertext"])
        amount = demand[2]
        if abs(amount - msg.payload["amount"]) > 1e-9:
            raise InvariantViolation("unit amount mismatch")
        self.hub_received[hub][tuid] = amount
        self.batchers[hub].add(("unit_received", tuid))
        self._log(f"hub:{hub}", "ack_tu", tuid, "sent")
        self._send("ack_tu", hub, msg.src, {"tuid": tuid})

    def _h_ack_tu(self, msg: Msg) -> None:
        # sender hub: update the unit state; once all done, attest + receipt
        hub = msg.dst
        tuid = msg.payload["tuid"]
        tid = self.tuid_to_tid.get(tuid)
        if tid is None:
            return
        state = self.hub_payments[tid]
        if state["status"] != PaymentStatus.PENDING:
            return
        record = self.records[tid]
        record.tu_states[tuid] = True
        state["acked"].add(tuid)
        record.refresh()
        self.batchers[hub].add(("unit_acked", tuid))
        if record.theta and state["stage"] == "processing":
            state["stage"] = "attested"
            outp, att = self.gatt.resume(
                hub, self.eids[hub],
                ("finalize", tid, sorted(record.tu_states.items())),
            )
            self.attestations[tid] = att
            self.ledger.append(tid, {"version": 1, "state": outp}, hub)
            self._log(f"hub:{hub}", "attest", tid, "signed")
            self._send("receipt_hub", hub, self.hub_of[state["recipient"]], {
                "tid": tid,
                "demand": [state["sender"], state["recipient"], state["amount"]],
            })

    def _h_receipt_hub(self, msg: Msg) -> None:
        # recipient hub: verify all unit funds arrived, consolidate to payee
        hub = msg.dst
        tid = msg.payload["tid"]
        sender, recipient, amount = msg.payload["demand"]
        state = self.hub_payments[tid]
        if (
            tid in self.hub_consolidated[hub]
            or state["status"] != PaymentStatus.PENDING
            or self.now > state["deadline"]
        ):
            self._log(f"hub:{hub}", "receipt", tid, "stale_or_duplicate")
            return
        got = sum(self.hub_received[hub].get(u, 0.0) for u in state["units"])
        if abs(got - amount) > 1e-9:
            self._log(f"hub:{hub}", "receipt", tid, "funds_incomplete")
            return
        self.hub_consolidated[hub].add(tid)
        self._transfer(hub, recipient, amount, tid)
        self._log(f"hub:{hub}", "receipt", tid, "consolidated")
        self._send("receipt_client", hub, recipient,
                   {"tid": tid, "demand": msg.payload["demand"]})

    def _h_receipt_client(self, msg: Msg) -> None:
        # recipient client: confirm the consolidated credit, acknowledge
        client = msg.dst
        tid = msg.payload["tid"]
        self._log(f"client:{client}", "ack_t", tid, "sent")
        self._send("ack_t", client, msg.src, {"tid": tid})

    def _h_ack_t(self, msg: Msg) -> None:
        if msg.dst in (self.HUB_A, self.HUB_B):
            # recipient hub relays the acknowledgment to the sender hub
            tid = msg.payload["tid"]
            state = self.hub_payments[tid]
            if msg.dst != state["hub"]:
                self._send("ack_t", msg.dst, state["hub"], {"tid": tid})
                return
            # sender hub: completion (only before the deadline)
            if state["status"] != PaymentStatus.PENDING:
                return
            if self.now > state["deadline"]:
                self._abort(tid, "late_ack")
                return
            state["status"] = PaymentStatus.COMPLETED
            self._log(f"hub:{state['hub']}", "complete", tid, "ok")
            self._send("pay_done", state["hub"], state["sender"], {
                "tid": tid, "attestation": self.attestations[tid],
            })
            self.client_outcomes.setdefault(tid, {})["status"] = PaymentStatus.COMPLETED

    def _h_pay_done(self, msg: Msg) -> None:
        tid = msg.payload["tid"]
        att = msg.payload["attestation"]
        pi = self.ias.verify(att)
        outcome = self.client_outcomes.setdefault(tid, {})
        outcome["proof"] = pi
        outcome["attestation_ok"] = pi[0] == 1
        self._log(f"client:{msg.dst}", "pay_done", tid, f"b={pi[0]}")


def _payment_prog(inp, mem):
    """Enclave program: records the final per-unit states for a payment."""
    op, tid, tu_states = inp
    mem = dict(mem)
    mem[tid] = tu_states
    return (op, tid, tu_states), mem


# ---------------------------------------------------------------------------
# Randomized end-to-end trials
# ---------------------------------------------------------------------------

_MSG_KINDS = [
    "init", "init_resp", "pay_t", "pay_tu", "ack_tu",
    "receipt_hub", "receipt_client", "ack_t", "pay_done",
]


def random_adversary(rng: random.Random, max_actions: int = 3) -> list[AdversaryAction]:
    actions = []
    for _ in range(rng.randint(1, max_actions)):
        actions.append(
            AdversaryAction(
                op=rng.choice(["drop", "delay", "replay"]),
                kind=rng.choice(_MSG_KINDS),
                occurrence=rng.randint(0, 4),
                dt=rng.uniform(0.05, 5.0),
            )
        )
    return actions


@dataclass
class TrialResult:
    tid: str
    adversarial: bool
    completed: bool
    conserved: bool
    atomic: bool
    attestation_ok: bool | None      # None when no attestation was produced
    tampered_rejected: bool | None
    recipient_delta: float
    events: list[str]


def run_trial(seed: int, adversarial: bool | None = None) -> TrialResult:
    """One randomized payment over the two-hub harness.

    Checks value conservation, payment atomicity (full credit or exact
    pre-transaction balances), and attestation soundness including a
    tamper-rejection probe.
    """
    rng = random.Random(seed ^ 0x5EED)
    if adversarial is None:
        adversarial = rng.random() < 0.6
    actions = random_adversary(rng) if adversarial else []
    cfg = HarnessConfig(clients_per_hub=2, kmg_size=rng.choice([1, 2]))
    harness = PaymentHarness(cfg, seed=seed, adversary=actions)
    sender = rng.choice(harness.clients_a)
    recipient = rng.choice(harness.clients_b)
    amount = round(rng.uniform(0.5, 12.0), 3)

    total_before = harness.total_value()
    snapshot = {c.cid: (c.balance_ab, c.balance_ba) for c in harness.graph.channels}
    recipient_before = harness.spoke_balance_of(recipient)

    tid = harness.submit_payment(sender, recipient, amount)
    harness.run(until=30.0)

    total_after = harness.total_value()
    conserved = abs(total_after - total_before) < 1e-6
    recipient_delta = harness.spoke_balance_of(recipient) - recipient_before
    outcome = harness.client_outcomes.get(tid, {})
    completed = outcome.get("status") == PaymentStatus.COMPLETED
    if completed:
        atomic = abs(recipient_delta - amount) < 1e-6
    else:
        atomic = all(
            abs(c.balance_ab - snapshot[c.cid][0]) < 1e-9
            and abs(c.balance_ba - snapshot[c.cid][1]) < 1e-9
            for c in harness.graph.channels
        )
    att = harness.attestations.get(tid)
    attestation_ok = None
    tampered_rejected = None
    if att is not None:
        attestation_ok = harness.gatt.verify(att)
        forged = Attestation(att.sigma, att.idx, att.eid, att.prog,
                             (att.outp[0], att.outp[1], "tampered"))
        tampered_rejected = not harness.gatt.verify(forged)
    return TrialResult(
        tid=tid,
        adversarial=adversarial,
        completed=completed,
        conserved=conserved,
        atomic=atomic,
        attestation_ok=attestation_ok,
        tampered_rejected=tampered_rejected,
        recipient_delta=recipient_delta,
        events=harness.events_log,
    )

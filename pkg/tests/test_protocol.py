import random

import pytest

from pcnkit.errors import InvariantViolation, MockCryptoError
from pcnkit.protocol import (
    AdversaryAction,
    Attestation,
    AttestedExecution,
    BatchCommitter,
    HarnessConfig,
    KeyScope,
    Kmg,
    Ledger,
    Msg,
    PaymentHarness,
    PaymentStatus,
    mock_decrypt,
    mock_encrypt,
    mock_keygen,
    mock_sign,
    mock_verify,
    run_trial,
    version_succ,
)


class TestMockCrypto:
    def test_encrypt_decrypt_round_trip(self):
        rng = random.Random(0)
        keys = mock_keygen(KeyScope.TRANSACTION, rng)
        ct = mock_encrypt(keys.pk, [1, 2, 3.5])
        assert mock_decrypt(keys.sk, ct) == [1, 2, 3.5]

    def test_wrong_key_fails_detectably(self):
        rng = random.Random(0)
        k1 = mock_keygen(KeyScope.TRANSACTION, rng)
        k2 = mock_keygen(KeyScope.TRANSACTION, rng)
        ct = mock_encrypt(k1.pk, "secret")
        with pytest.raises(MockCryptoError):
            mock_decrypt(k2.sk, ct)

    def test_sign_verify_and_tamper(self):
        rng = random.Random(1)
        keys = mock_keygen(KeyScope.PROCESSOR, rng)
        sigma = mock_sign(keys.sk, ("a", 1))
        assert mock_verify(keys.pk, ("a", 1), sigma)
        assert not mock_verify(keys.pk, ("a", 2), sigma)
        assert not mock_verify(keys.pk, ("a", 1), sigma[:-1] + ("0" if sigma[-1] != "0" else "1"))

    def test_ciphertext_leaks_only_length(self):
        rng = random.Random(2)
        keys = mock_keygen(KeyScope.TRANSACTION_UNIT, rng)
        ct = mock_encrypt(keys.pk, {"v": 4.0})
        assert ct.leak_len == len(ct.blob)


class TestAttestedExecution:
    def make(self):
        return AttestedExecution("sid-1", {0, 1}, random.Random(3))

    def test_install_twice_distinct_eids(self):
        g = self.make()
        assert g.install(0, _echo_prog) != g.install(0, _echo_prog)

    def test_honest_install_asserts_session_id(self):
        g = self.make()
        with pytest.raises(InvariantViolation):
            g.install(0, _echo_prog, idx="other-session")

    def test_unregistered_party_rejected(self):
        g = self.make()
        with pytest.raises(InvariantViolation):
            g.install(7, _echo_prog)

    def test_resume_unknown_eid_aborts(self):
        g = self.make()
        with pytest.raises(InvariantViolation):
            g.resume(0, "no-such", "x")

    def test_resume_round_trip_verifies(self):
        g = self.make()
        eid = g.install(1, _echo_prog)
        outp, att = g.resume(1, eid, "hello")
        assert outp == "hello"
        assert g.verify(att)

    def test_tampered_output_rejected(self):
        g = self.make()
        eid = g.install(1, _echo_prog)
        _, att = g.resume(1, eid, "hello")
        forged = Attestation(att.sigma, att.idx, att.eid, att.prog, "tampered")
        assert not g.verify(forged)

    def test_memory_evolves_across_resumes(self):
        g = self.make()
        eid = g.install(0, _counting_prog)
        out1, _ = g.resume(0, eid, None)
        out2, _ = g.resume(0, eid, None)
        assert (out1, out2) == (1, 2)


def _echo_prog(inp, mem):
    return inp, mem


def _counting_prog(inp, mem):
    mem = dict(mem)
    mem["n"] = mem.get("n", 0) + 1
    return mem["n"], mem


class TestLedger:
    def test_first_append_succeeds(self):
        led = Ledger(version_succ)
        assert led.append("t1", {"version": 1}, 0) == "success"
        assert led.read("t1") == {"version": 1}

    def test_conflicting_append_fails_without_change(self):
        led = Ledger(version_succ)
        led.append("t1", {"version": 2}, 0)
        assert led.append("t1", {"version": 2}, 1) == "failure"
        assert led.read("t1") == {"version": 2}

    def test_absent_read_returns_none(self):
        assert Ledger(version_succ).read("nope") is None

    def test_seq_strictly_increases(self):
        led = Ledger(lambda prev, inp: 1)
        seqs = []
        for i in range(5):
            led.append(f"t{i}", i, 0)
            seqs.append(led.seq)
        assert seqs == sorted(set(seqs))


class TestKmg:
    def test_round_trip_through_group_key(self):
        kmg = Kmg([0], [0, 1], random.Random(5))
        keys = kmg.keygen(0, "tid-1", KeyScope.TRANSACTION)
        ct = mock_encrypt(keys.pk, [9])
        assert mock_decrypt(keys.sk, ct) == [9]

    def test_distinct_ids_distinct_keys(self):
        kmg = Kmg([0], [0, 1], random.Random(5))
        a = kmg.keygen(0, "id-a", KeyScope.TRANSACTION)
        b = kmg.keygen(0, "id-b", KeyScope.TRANSACTION)
        assert a.pk != b.pk

    def test_non_member_hub_forwarded_same_pair(self):
        kmg = Kmg([0], [0, 1], random.Random(5))
        member = kmg.keygen(0, "shared", KeyScope.TRANSACTION_UNIT)
        other = kmg.keygen(1, "shared", KeyScope.TRANSACTION_UNIT)
        assert member == other
        assert kmg.forwarded_requests == 1

    def test_non_hub_rejected(self):
        kmg = Kmg([0], [0, 1], random.Random(5))
        with pytest.raises(InvariantViolation):
            kmg.keygen(42, "x", KeyScope.TRANSACTION)


class TestBatching:
    def test_many_updates_one_increment(self):
        b = BatchCommitter(window=0.1)
        for i in range(10):
            b.add(("update", i))
        batch = b.commit(now=0.1)
        assert len(batch.updates) == 10
        assert b.counter.value == 1

    def test_replayed_batch_rejected(self):
        b = BatchCommitter(window=0.1)
        b.add("u1")
        batch = b.commit(now=0.1)
        b.add("u2")
        b.commit(now=0.2)
        assert b.replay(batch) == "rejected"

    def test_empty_window_no_commit(self):
        b = BatchCommitter(window=0.1)
        assert b.commit(now=0.1) is None
        assert b.counter.value == 0


class TestHonestPayment:
    def run_payment(self, amount=10.0, **kwargs):
        h = PaymentHarness(HarnessConfig(), seed=7, **kwargs)
        sender, recipient = h.clients_a[0], h.clients_b[0]
        before = {
            "total": h.total_value(),
            "sender": h.spoke_balance_of(sender),
            "recipient": h.spoke_balance_of(recipient),
        }
        tid = h.submit_payment(sender, recipient, amount)
        h.run(until=10.0)
        return h, tid, before, sender, recipient

    def test_completes_and_credits_exactly_once(self):
        h, tid, before, sender, recipient = self.run_payment(amount=10.0)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.COMPLETED
        assert h.spoke_balance_of(recipient) - before["recipient"] == pytest.approx(10.0)
        assert before["sender"] - h.spoke_balance_of(sender) == pytest.approx(10.0)
        assert h.total_value() == pytest.approx(before["total"])

    def test_theta_is_conjunction_of_units(self):
        h, tid, *_ = self.run_payment(amount=10.0)
        record = h.records[tid]
        assert len(record.tu_states) == 3  # 10 tokens split at max 4
        assert all(record.tu_states.values())
        assert record.theta

    def test_attestation_verifies_and_ias_cosigns(self):
        h, tid, *_ = self.run_payment()
        att = h.attestations[tid]
        assert h.gatt.verify(att)
        b, sigma, sigma_ias = h.ias.verify(att)
        assert b == 1 and sigma == att.sigma and len(sigma_ias) == 64

    def test_ledger_records_final_state(self):
        h, tid, *_ = self.run_payment()
        assert h.ledger.read(tid)["version"] == 1

    def test_duplicate_pay_req_detected(self):
        h = PaymentHarness(HarnessConfig(), seed=1)
        msg = Msg("init", h.clients_a[0], h.HUB_A, {
            "pay_req": "same-request", "sender": h.clients_a[0],
            "recipient": h.clients_b[0], "amount": 2.0,
        })
        h._h_init(msg)
        n_states = len(h.hub_payments)
        h._h_init(msg)
        assert len(h.hub_payments) == n_states
        assert any("duplicate" in line for line in h.events_log)

    def test_ack_chain_in_event_log(self):
        h, tid, *_ = self.run_payment()
        text = "\n".join(h.events_log)
        for token in ["init", "pay_t", "pay_tu", "ack_tu", "attest", "consolidated", "complete"]:
            assert token in text


class TestAdversarialRuns:
    def snapshot(self, h):
        return {c.cid: (c.balance_ab, c.balance_ba) for c in h.graph.channels}

    def test_dropped_unit_ack_rolls_back_without_client_loss(self):
        adversary = [AdversaryAction("drop", "ack_tu", 1)]
        h = PaymentHarness(HarnessConfig(), seed=3, adversary=adversary)
        before = self.snapshot(h)
        tid = h.submit_payment(h.clients_a[0], h.clients_b[0], 10.0)
        h.run(until=10.0)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.ROLLED_BACK
        assert self.snapshot(h) == before
        assert not h.records[tid].theta

    def test_dropped_unit_payment_rolls_back(self):
        adversary = [AdversaryAction("drop", "pay_tu", 0)]
        h = PaymentHarness(HarnessConfig(), seed=4, adversary=adversary)
        before = self.snapshot(h)
        tid = h.submit_payment(h.clients_a[0], h.clients_b[0], 7.0)
        h.run(until=10.0)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.ROLLED_BACK
        assert self.snapshot(h) == before

    def test_replayed_unit_rejected_by_dedup(self):
        adversary = [AdversaryAction("replay", "pay_tu", 0)]
        h = PaymentHarness(HarnessConfig(), seed=5, adversary=adversary)
        tid = h.submit_payment(h.clients_a[0], h.clients_b[0], 10.0)
        h.run(until=10.0)
        assert any("replay_rejected" in line for line in h.events_log)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.COMPLETED

    def test_delayed_ack_within_deadline_still_completes(self):
        adversary = [AdversaryAction("delay", "ack_tu", 0, dt=0.5)]
        h = PaymentHarness(HarnessConfig(deadline=3.0), seed=6, adversary=adversary)
        tid = h.submit_payment(h.clients_a[0], h.clients_b[0], 4.0)
        h.run(until=10.0)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.COMPLETED

    def test_delayed_receipt_past_deadline_rolls_back(self):
        adversary = [AdversaryAction("delay", "receipt_hub", 0, dt=5.0)]
        h = PaymentHarness(HarnessConfig(deadline=1.0), seed=8, adversary=adversary)
        before = self.snapshot(h)
        tid = h.submit_payment(h.clients_a[0], h.clients_b[0], 5.0)
        h.run(until=15.0)
        assert h.client_outcomes[tid]["status"] == PaymentStatus.ROLLED_BACK
        assert self.snapshot(h) == before


class TestUnlinkability:
    def test_observer_sees_only_unit_id_length_amount(self):
        h = PaymentHarness(HarnessConfig(), seed=9)
        sender, recipient = h.clients_a[0], h.clients_b[0]
        tid = h.submit_payment(sender, recipient, 10.0)
        h.run(until=10.0)
        assert h.transport.observations
        for kind, tuid, leak_len, amount in h.transport.observations:
            assert kind == "pay_tu"
            assert tid not in tuid
            assert str(sender) not in (tuid or "")
            assert isinstance(leak_len, int) and leak_len > 0
            assert amount is not None

    def test_unit_ids_fresh_per_unit(self):
        h = PaymentHarness(HarnessConfig(), seed=10)
        h.submit_payment(h.clients_a[0], h.clients_b[0], 12.0)
        h.run(until=10.0)
        tuids = [obs[1] for obs in h.transport.observations]
        assert len(set(tuids)) == len(tuids)


class TestRandomizedTrials:
    def test_hundred_trials_conserve_and_stay_atomic(self):
        for seed in range(100):
            res = run_trial(seed)
            assert res.conserved, f"seed {seed} broke conservation"
            assert res.atomic, f"seed {seed} broke atomicity"
            if res.attestation_ok is not None:
                assert res.attestation_ok
                assert res.tampered_rejected

    def test_honest_trials_complete(self):
        completed = 0
        for seed in range(20):
            res = run_trial(seed, adversarial=False)
            assert res.conserved and res.atomic
            assert res.attestation_ok and res.tampered_rejected
            completed += res.completed
        assert completed == 20

"""Review workflow tests: state machine, consensus, durability, races."""
from __future__ import annotations

import threading

import pytest

from dudp.qagen import QaPair
from dudp.review import (DEFAULT_POLICIES, ReviewError, ReviewService, RoundPolicy)


def qa(qa_id: str) -> QaPair:
    return QaPair(qa_id=qa_id, record_id=f"r-{qa_id}", question="q?", answer="long answer",
                  answer_form="free_text", gold_label="x")


def accept_all_round(service, qa_ids, round_no, policy=None, decision="accepted"):
    policy = policy or RoundPolicy(reviewers_per_ticket=1)
    service.enqueue_round(qa_ids, round_no, policy)
    for slot in range(policy.reviewers_per_ticket):
        reviewer = f"rev-{round_no}-{slot}"
        while True:
            try:
                ticket = service.claim_next(reviewer)
            except ReviewError:
                break
            service.submit_verdict(ticket.ticket_id, reviewer, decision)


class TestEnqueue:
    def test_round_one_tickets(self):
        service = ReviewService()
        tickets = service.enqueue_round(["a", "b"], 1, RoundPolicy(reviewers_per_ticket=1))
        assert len(tickets) == 2
        assert all(t.state == "pending" for t in tickets)

    def test_idempotent_same_ids(self):
        service = ReviewService()
        first = service.enqueue_round(["a"], 1, RoundPolicy())
        second = service.enqueue_round(["a"], 1)
        assert [t.ticket_id for t in first] == [t.ticket_id for t in second]
        assert len(service.round_status(1)["counts"]) == 5
        assert service.round_status(1)["counts"]["pending"] == 1

    def test_round_two_requires_round_one_acceptance(self):
        service = ReviewService()
        service.enqueue_round(["a"], 1, RoundPolicy())
        with pytest.raises(ReviewError) as err:
            service.enqueue_round(["a"], 2)
        assert err.value.code == "prerequisite_round_incomplete"

    def test_rejected_item_cannot_advance(self):
        service = ReviewService()
        accept_all_round(service, ["a"], 1, decision="rejected")
        with pytest.raises(ReviewError) as err:
            service.enqueue_round(["a"], 2)
        assert err.value.code == "prerequisite_round_incomplete"

    def test_invalid_round(self):
        service = ReviewService()
        with pytest.raises(ReviewError) as err:
            service.enqueue_round(["a"], 4)
        assert err.value.code == "invalid_round"

    def test_needs_revision_reenters_same_round_new_epoch(self):
        service = ReviewService()
        accept_all_round(service, ["a"], 1, decision="needs_revision")
        fresh = service.enqueue_round(["a"], 1)
        assert all(t.epoch == 1 and t.state == "pending" for t in fresh)
        # The fresh epoch drives consensus now.
        assert service.round_status(1)["counts"]["pending"] == 1

    def test_policy_conflict(self):
        service = ReviewService()
        service.enqueue_round(["a"], 1, RoundPolicy(reviewers_per_ticket=1))
        with pytest.raises(ReviewError) as err:
            service.enqueue_round(["b"], 1, RoundPolicy(reviewers_per_ticket=3))
        assert err.value.code == "policy_conflict"


class TestClaimSubmit:
    def test_claim_oldest_first(self):
        service = ReviewService()
        service.enqueue_round(["a", "b"], 1, RoundPolicy())
        first = service.claim_next("alice")
        assert first.qa_id == "a" and first.state == "in_review"
        assert first.reviewer_id == "alice"

    def test_empty_queue(self):
        service = ReviewService()
        with pytest.raises(ReviewError) as err:
            service.claim_next("alice")
        assert err.value.code == "queue_empty"

    def test_reviewer_never_sees_same_qa_twice(self):
        service = ReviewService()
        service.enqueue_round(["a", "b"], 1, RoundPolicy(reviewers_per_ticket=2))
        first = service.claim_next("alice")
        service.submit_verdict(first.ticket_id, "alice", "accepted")
        second = service.claim_next("alice")
        assert second.qa_id != first.qa_id
        third = service.claim_next("bob")  # bob picks up a's sibling slot
        assert third.qa_id == "a"

    def test_submit_requires_assignment(self):
        service = ReviewService()
        tickets = service.enqueue_round(["a"], 1, RoundPolicy())
        with pytest.raises(ReviewError) as err:
            service.submit_verdict(tickets[0].ticket_id, "alice", "accepted")
        assert err.value.code == "invalid_transition"
        ticket = service.claim_next("alice")
        with pytest.raises(ReviewError) as err:
            service.submit_verdict(ticket.ticket_id, "mallory", "accepted")
        assert err.value.code == "not_assignee"

    def test_terminal_states_final(self):
        service = ReviewService()
        service.enqueue_round(["a"], 1, RoundPolicy())
        ticket = service.claim_next("alice")
        done = service.submit_verdict(ticket.ticket_id, "alice", "accepted",
                                      [{"field_path": "answer", "comment": "good"}])
        assert done.state == "accepted"
        assert done.annotations == ({"field_path": "answer", "comment": "good"},)
        with pytest.raises(ReviewError) as err:
            service.submit_verdict(ticket.ticket_id, "alice", "rejected")
        assert err.value.code == "invalid_transition"

    def test_invalid_decision(self):
        service = ReviewService()
        service.enqueue_round(["a"], 1, RoundPolicy())
        ticket = service.claim_next("alice")
        with pytest.raises(ReviewError) as err:
            service.submit_verdict(ticket.ticket_id, "alice", "maybe")
        assert err.value.code == "invalid_decision"

    def test_concurrent_claim_single_winner(self):
        service = ReviewService()
        service.enqueue_round(["solo"], 1, RoundPolicy())
        results, errors = [], []
        barrier = threading.Barrier(2)

        def worker(name):
            barrier.wait()
            try:
                results.append(service.claim_next(name))
            except ReviewError as exc:
                errors.append(exc.code)

        threads = [threading.Thread(target=worker, args=(f"w{i}",)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(results) == 1 and errors == ["queue_empty"]

    def test_no_double_assignment_under_load(self):
        service = ReviewService()
        qa_ids = [f"qa-{i}" for i in range(20)]
        service.enqueue_round(qa_ids, 1, RoundPolicy())
        claimed: list = []
        lock = threading.Lock()

        def worker(name):
            while True:
                try:
                    ticket = service.claim_next(name)
                except ReviewError:
                    return
                with lock:
                    claimed.append(ticket.ticket_id)
                service.submit_verdict(ticket.ticket_id, name, "accepted")

        threads = [threading.Thread(target=worker, args=(f"w{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(claimed) == sorted(set(claimed))
        assert len(claimed) == 20


class TestConsensus:
    def test_unanimous_all_accept(self):
        service = ReviewService()
        accept_all_round(service, ["a", "b"], 1,
                         RoundPolicy(reviewers_per_ticket=2, consensus="unanimous"))
        status = service.round_status(1)
        assert status["consensus_accepted"] == ["a", "b"]
        assert status["advance_eligible"]

    def _two_of_three(self, consensus):
        service = ReviewService()
        policy = RoundPolicy(reviewers_per_ticket=3, consensus=consensus)
        service.enqueue_round(["a"], 1, policy)
        for reviewer, decision in (("r1", "accepted"), ("r2", "accepted"),
                                   ("r3", "rejected")):
            ticket = service.claim_next(reviewer)
            service.submit_verdict(ticket.ticket_id, reviewer, decision)
        return service.round_status(1)

    def test_two_of_three_unanimous_fails(self):
        assert self._two_of_three("unanimous")["consensus_accepted"] == []

    def test_two_of_three_majority_passes(self):
        assert self._two_of_three("majority")["consensus_accepted"] == ["a"]

    def test_advance_threshold(self):
        service = ReviewService()
        policy = RoundPolicy(reviewers_per_ticket=1, advance_threshold=0.9)
        service.enqueue_round(["a", "b"], 1, policy)
        for qa_id, decision in (("a", "accepted"), ("b", "rejected")):
            ticket = service.claim_next(f"rev-{qa_id}")
            service.submit_verdict(ticket.ticket_id, f"rev-{qa_id}", decision)
        assert not service.round_status(1)["advance_eligible"]  # 0.5 < 0.9


def brute_force_consensus(events, round_no):
    """Independent consensus derivation straight from the event log."""
    policy = None
    tickets = {}
    epochs = {}
    for event in events:
        if event["event"] == "round_opened" and event["round"] == round_no:
            policy = event["policy"]
        elif event["event"] == "ticket_created" and event["round"] == round_no:
            tickets[event["ticket_id"]] = {"qa_id": event["qa_id"],
                                           "epoch": event["epoch"], "state": "pending"}
            key = event["qa_id"]
            epochs[key] = max(epochs.get(key, 0), event["epoch"])
        elif event["event"] == "verdict_submitted" and event["ticket_id"] in tickets:
            tickets[event["ticket_id"]]["state"] = event["decision"]
    if policy is None:
        return set()
    votes = {}
    for ticket in tickets.values():
        if ticket["epoch"] != epochs[ticket["qa_id"]]:
            continue
        votes.setdefault(ticket["qa_id"], []).append(ticket["state"])
    accepted = set()
    for qa_id, states in votes.items():
        n_accept = sum(1 for s in states if s == "accepted")
        if policy["consensus"] == "unanimous":
            ok = n_accept == policy["reviewers_per_ticket"]
        else:
            ok = n_accept > policy["reviewers_per_ticket"] / 2
        if ok:
            accepted.add(qa_id)
    return accepted


def scripted_three_rounds(store_dir=None):
    """Fixture workflow: 8 items; 6 pass round 2, 5 pass round 3."""
    service = ReviewService(store_dir=store_dir)
    all_qa = [f"qa-{i}" for i in range(8)]
    # Round 1: everything accepted.
    accept_all_round(service, all_qa, 1)
    # Round 2: first 6 accepted, 2 rejected (2-reviewer unanimous).
    service.enqueue_round(all_qa, 2, RoundPolicy(reviewers_per_ticket=2))
    for slot in range(2):
        reviewer = f"second-{slot}"
        while True:
            try:
                ticket = service.claim_next(reviewer)
            except ReviewError:
                break
            decision = "accepted" if int(ticket.qa_id.split("-")[1]) < 6 else "rejected"
            service.submit_verdict(ticket.ticket_id, reviewer, decision)
    # Round 3: of the 6 eligible, 5 accepted, 1 needs revision.
    service.enqueue_round([f"qa-{i}" for i in range(6)], 3,
                          RoundPolicy(reviewers_per_ticket=2))
    for slot in range(2):
        reviewer = f"third-{slot}"
        while True:
            try:
                ticket = service.claim_next(reviewer)
            except ReviewError:
                break
            decision = "needs_revision" if ticket.qa_id == "qa-5" else "accepted"
            service.submit_verdict(ticket.ticket_id, reviewer, decision)
    return service, all_qa


class TestExportAndReplay:
    def test_export_matches_brute_force(self):
        service, all_qa = scripted_three_rounds()
        corpus = [qa(q) for q in all_qa]
        exported = {q.qa_id for q in service.export_approved(corpus)}
        events = service.events()
        expected = (brute_force_consensus(events, 1)
                    & brute_force_consensus(events, 2)
                    & brute_force_consensus(events, 3))
        assert exported == expected == {f"qa-{i}" for i in range(5)}

    def test_export_empty_without_rounds(self):
        service = ReviewService()
        assert service.export_approved([qa("a")]) == []

    def test_export_deterministic(self):
        service, all_qa = scripted_three_rounds()
        corpus = [qa(q) for q in all_qa]
        assert service.export_approved(corpus) == service.export_approved(corpus)

    def test_event_log_replay_reconstructs_state(self, tmp_path):
        service, _ = scripted_three_rounds(store_dir=tmp_path)
        reopened = ReviewService(store_dir=tmp_path)
        assert reopened._tickets == service._tickets
        assert reopened._policies == service._policies
        for round_no in (1, 2, 3):
            assert reopened.round_status(round_no) == service.round_status(round_no)

    def test_kill_restart_durability(self, tmp_path):
        service = ReviewService(store_dir=tmp_path)
        service.enqueue_round(["a"], 1, RoundPolicy())
        ticket = service.claim_next("alice")
        service.submit_verdict(ticket.ticket_id, "alice", "accepted")
        del service  # simulated crash: no shutdown hook, state only on disk
        reopened = ReviewService(store_dir=tmp_path)
        assert reopened.ticket(ticket.ticket_id).state == "accepted"
        assert reopened.round_status(1)["consensus_accepted"] == ["a"]

    def test_corrupt_log_rejected(self, tmp_path):
        service = ReviewService(store_dir=tmp_path)
        service.enqueue_round(["a"], 1, RoundPolicy())
        log = tmp_path / "events.jsonl"
        with open(log, "a") as handle:
            handle.write('{"event": "verdict_submitted", "ticket_id": "a:r1:e0:s0", '
                         '"reviewer_id": "x", "decision": "accepted", '
                         '"decided_at": "t"}\n')
        with pytest.raises(ReviewError) as err:
            ReviewService(store_dir=tmp_path)
        assert err.value.code == "corrupt_log"


class TestDefaults:
    def test_default_policies_shape(self):
        assert DEFAULT_POLICIES[1].reviewers_per_ticket == 1
        assert DEFAULT_POLICIES[2].reviewers_per_ticket == 2
        assert DEFAULT_POLICIES[3].consensus == "unanimous"
        assert DEFAULT_POLICIES[2].advance_threshold == 0.9

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            RoundPolicy(reviewers_per_ticket=0)
        with pytest.raises(ValueError):
            RoundPolicy(consensus="plurality")
        with pytest.raises(ValueError):
            RoundPolicy(advance_threshold=1.5)


class TestSnapshots:
    def test_snapshot_plus_tail_equals_pure_replay(self, tmp_path):
        service = ReviewService(store_dir=tmp_path)
        service.enqueue_round(["a", "b", "c"], 1, RoundPolicy())
        ticket = service.claim_next("alice")
        service.submit_verdict(ticket.ticket_id, "alice", "accepted")
        service.write_snapshot()
        # More activity after the snapshot: only the tail should replay.
        second = service.claim_next("alice")
        service.submit_verdict(second.ticket_id, "alice", "rejected")

        reopened = ReviewService(store_dir=tmp_path)
        assert reopened._tickets == service._tickets
        assert reopened.round_status(1) == service.round_status(1)
        # Pure replay (snapshot removed) agrees too.
        (tmp_path / "snapshot.json").unlink()
        replayed = ReviewService(store_dir=tmp_path)
        assert replayed._tickets == service._tickets

    def test_periodic_snapshots(self, tmp_path):
        service = ReviewService(store_dir=tmp_path, snapshot_every=3)
        service.enqueue_round(["a", "b"], 1, RoundPolicy())
        assert (tmp_path / "snapshot.json").exists()
        reopened = ReviewService(store_dir=tmp_path)
        assert reopened.round_status(1) == service.round_status(1)

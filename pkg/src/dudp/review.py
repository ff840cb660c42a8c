"""Expert-validation workflow: three review rounds over QA items.

State is event-sourced: every mutation appends one event to an append-only
log (fsync'd before the call returns), and replaying the log reconstructs
the exact state. Claim and submit are linearizable under a single lock, so
no ticket ever has two assignees. A QA item enters round r only after
consensus acceptance in round r-1; items sent back for revision re-enter
the same round under a fresh ticket epoch.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable

from .qagen import QaPair

ROUNDS = (1, 2, 3)
DECISIONS = ("accepted", "rejected", "needs_revision")
TERMINAL_STATES = frozenset(DECISIONS)


class ReviewError(Exception):
    def __init__(self, code: str, message: str = "", field_path: str | None = None):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message
        self.field_path = field_path


@dataclass(frozen=True)
class RoundPolicy:
    reviewers_per_ticket: int = 1
    consensus: str = "unanimous"  # unanimous | majority
    advance_threshold: float = 0.9

    def __post_init__(self):
        if self.reviewers_per_ticket < 1:
            raise ValueError("reviewers_per_ticket must be positive")
        if self.consensus not in ("unanimous", "majority"):
            raise ValueError(f"unknown consensus mode {self.consensus!r}")
        if not 0.0 <= self.advance_threshold <= 1.0:
            raise ValueError("advance_threshold must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {"reviewers_per_ticket": self.reviewers_per_ticket,
                "consensus": self.consensus,
                "advance_threshold": self.advance_threshold}


DEFAULT_POLICIES = {1: RoundPolicy(reviewers_per_ticket=1),
                    2: RoundPolicy(reviewers_per_ticket=2),
                    3: RoundPolicy(reviewers_per_ticket=2)}


@dataclass(frozen=True)
class ReviewTicket:
    ticket_id: str
    qa_id: str
    round: int
    epoch: int
    slot: int
    seq: int  # creation order, drives claim fairness
    state: str = "pending"  # pending | in_review | accepted | rejected | needs_revision
    reviewer_id: str | None = None
    annotations: tuple[dict[str, str], ...] = ()
    decided_at: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"ticket_id": self.ticket_id, "qa_id": self.qa_id, "round": self.round,
                "epoch": self.epoch, "slot": self.slot, "state": self.state,
                "reviewer_id": self.reviewer_id,
                "annotations": list(self.annotations), "decided_at": self.decided_at}


class FileEventLog:
    """Append-only JSONL log; appends are flushed and fsync'd."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: dict[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def read_all(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events


class MemoryEventLog:
    def __init__(self):
        self.events: list[dict[str, Any]] = []

    def append(self, event: dict[str, Any]) -> None:
        self.events.append(event)

    def read_all(self) -> list[dict[str, Any]]:
        return list(self.events)


def _ticket_id(qa_id: str, round_no: int, epoch: int, slot: int) -> str:
    return f"{qa_id}:r{round_no}:e{epoch}:s{slot}"


class ReviewService:
    """Review rounds over an event log. All public methods are thread-safe;
    mutations are serialized through one lock and persisted before returning.
    """

    def __init__(self, store_dir: str | Path | None = None,
                 clock: Callable[[], str] | None = None,
                 snapshot_every: int = 0):
        self._lock = threading.Lock()
        self._clock = clock or (lambda: "1970-01-01T00:00:00Z")
        self._store_dir = Path(store_dir) if store_dir else None
        self._log = FileEventLog(self._store_dir / "events.jsonl") if self._store_dir \
            else MemoryEventLog()
        self._snapshot_every = snapshot_every
        self._tickets: dict[str, ReviewTicket] = {}
        self._policies: dict[int, RoundPolicy] = {}
        self._epochs: dict[tuple[str, int], int] = {}
        self._seq = 0
        self._applied = self._restore_snapshot()
        for event in self._log.read_all()[self._applied:]:
            self._apply(event)
            self._applied += 1

    # -- event application (the only state writer) --------------------------

    def _apply(self, event: dict[str, Any]) -> None:
        kind = event["event"]
        if kind == "round_opened":
            self._policies[event["round"]] = RoundPolicy(**event["policy"])
        elif kind == "ticket_created":
            ticket = ReviewTicket(ticket_id=event["ticket_id"], qa_id=event["qa_id"],
                                  round=event["round"], epoch=event["epoch"],
                                  slot=event["slot"], seq=event["seq"])
            if ticket.ticket_id in self._tickets:
                raise ReviewError("corrupt_log", f"duplicate ticket {ticket.ticket_id}")
            self._tickets[ticket.ticket_id] = ticket
            self._epochs[(ticket.qa_id, ticket.round)] = max(
                self._epochs.get((ticket.qa_id, ticket.round), 0), ticket.epoch)
            self._seq = max(self._seq, ticket.seq + 1)
        elif kind == "ticket_claimed":
            ticket = self._tickets[event["ticket_id"]]
            if ticket.state != "pending":
                raise ReviewError("corrupt_log",
                                  f"claim of non-pending ticket {ticket.ticket_id}")
            self._tickets[ticket.ticket_id] = replace(
                ticket, state="in_review", reviewer_id=event["reviewer_id"])
        elif kind == "verdict_submitted":
            ticket = self._tickets[event["ticket_id"]]
            if ticket.state != "in_review" or ticket.reviewer_id != event["reviewer_id"]:
                raise ReviewError("corrupt_log",
                                  f"illegal verdict transition on {ticket.ticket_id}")
            self._tickets[ticket.ticket_id] = replace(
                ticket, state=event["decision"],
                annotations=tuple(event.get("annotations", [])),
                decided_at=event["decided_at"])
        else:
            raise ReviewError("corrupt_log", f"unknown event {kind!r}")

    def _emit(self, event: dict[str, Any]) -> None:
        self._log.append(event)
        self._apply(event)
        self._applied += 1
        if self._snapshot_every and self._applied % self._snapshot_every == 0:
            self._write_snapshot_locked()

    # -- snapshots (periodic compaction; the log stays authoritative) --------

    def _snapshot_path(self) -> Path | None:
        return self._store_dir / "snapshot.json" if self._store_dir else None

    def _write_snapshot_locked(self) -> None:
        path = self._snapshot_path()
        if path is None:
            return
        state = {
            "applied": self._applied,
            "seq": self._seq,
            "policies": {str(r): p.to_dict() for r, p in self._policies.items()},
            "tickets": [{**t.to_dict(), "seq": t.seq} for t in self._tickets.values()],
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, ensure_ascii=False, sort_keys=True))
        tmp.replace(path)

    def write_snapshot(self) -> None:
        """Persist current state; reopening replays only the log tail."""
        with self._lock:
            self._write_snapshot_locked()

    def _restore_snapshot(self) -> int:
        path = self._snapshot_path()
        if path is None or not path.exists():
            return 0
        state = json.loads(path.read_text(encoding="utf-8"))
        self._seq = state["seq"]
        self._policies = {int(r): RoundPolicy(**p) for r, p in state["policies"].items()}
        for entry in state["tickets"]:
            ticket = ReviewTicket(
                ticket_id=entry["ticket_id"], qa_id=entry["qa_id"], round=entry["round"],
                epoch=entry["epoch"], slot=entry["slot"], seq=entry["seq"],
                state=entry["state"], reviewer_id=entry["reviewer_id"],
                annotations=tuple(entry["annotations"]), decided_at=entry["decided_at"])
            self._tickets[ticket.ticket_id] = ticket
            self._epochs[(ticket.qa_id, ticket.round)] = max(
                self._epochs.get((ticket.qa_id, ticket.round), 0), ticket.epoch)
        return int(state["applied"])

    # -- queries -------------------------------------------------------------

    def ticket(self, ticket_id: str) -> ReviewTicket:
        with self._lock:
            if ticket_id not in self._tickets:
                raise ReviewError("unknown_ticket", ticket_id)
            return self._tickets[ticket_id]

    def _current_tickets(self, round_no: int) -> list[ReviewTicket]:
        """Tickets of the current epoch per (qa, round)."""
        return [t for t in self._tickets.values()
                if t.round == round_no and t.epoch == self._epochs[(t.qa_id, t.round)]]

    def _consensus_accepted(self, round_no: int) -> list[str]:
        policy = self._policies.get(round_no)
        if policy is None:
            return []
        by_qa: dict[str, list[ReviewTicket]] = {}
        for ticket in self._current_tickets(round_no):
            by_qa.setdefault(ticket.qa_id, []).append(ticket)
        accepted = []
        for qa_id, tickets in by_qa.items():
            votes = sum(1 for t in tickets if t.state == "accepted")
            if policy.consensus == "unanimous":
                ok = votes == policy.reviewers_per_ticket
            else:
                ok = votes > policy.reviewers_per_ticket / 2
            if ok:
                accepted.append(qa_id)
        return sorted(accepted)

    # -- operations ----------------------------------------------------------

    def enqueue_round(self, qa_ids: Iterable[str], round_no: int,
                      policy: RoundPolicy | None = None) -> list[ReviewTicket]:
        """Create (or return existing) review tickets for a round.

        Idempotent per (qa, round, slot); a QA whose current tickets ended in
        needs_revision gets a fresh ticket epoch instead.
        """
        if round_no not in ROUNDS:
            raise ReviewError("invalid_round", f"round must be one of {ROUNDS}")
        qa_ids = list(qa_ids)
        with self._lock:
            stored = self._policies.get(round_no)
            if policy is not None and stored is not None and policy != stored:
                raise ReviewError("policy_conflict",
                                  f"round {round_no} already opened with a different policy")
            effective = stored or policy or DEFAULT_POLICIES[round_no]
            if round_no > 1:
                prior = set(self._consensus_accepted(round_no - 1))
                missing = [qa for qa in qa_ids if qa not in prior]
                if missing:
                    raise ReviewError(
                        "prerequisite_round_incomplete",
                        f"round {round_no - 1} has not accepted: {missing[:5]}")
            if stored is None:
                self._emit({"event": "round_opened", "round": round_no,
                            "policy": effective.to_dict()})

            out: list[ReviewTicket] = []
            for qa_id in qa_ids:
                epoch = self._epochs.get((qa_id, round_no), 0)
                existing = [t for t in self._tickets.values()
                            if t.qa_id == qa_id and t.round == round_no and t.epoch == epoch]
                if existing:
                    all_decided = all(t.state in TERMINAL_STATES for t in existing)
                    needs_retry = any(t.state == "needs_revision" for t in existing)
                    if all_decided and needs_retry:
                        epoch += 1  # revision re-entry: new tickets, same round
                    else:
                        out.extend(sorted(existing, key=lambda t: t.slot))
                        continue
                for slot in range(effective.reviewers_per_ticket):
                    event = {"event": "ticket_created",
                             "ticket_id": _ticket_id(qa_id, round_no, epoch, slot),
                             "qa_id": qa_id, "round": round_no, "epoch": epoch,
                             "slot": slot, "seq": self._seq}
                    self._emit(event)
                    out.append(self._tickets[event["ticket_id"]])
            return out

    def claim_next(self, reviewer_id: str) -> ReviewTicket:
        """Atomically assign the oldest claimable pending ticket.

        A reviewer never receives a second ticket for a (qa, round) they
        already hold or have decided.
        """
        if not reviewer_id:
            raise ReviewError("invalid_reviewer", "reviewer_id must be nonempty")
        with self._lock:
            taken: set[tuple[str, int]] = {
                (t.qa_id, t.round) for t in self._tickets.values()
                if t.reviewer_id == reviewer_id}
            candidates = sorted((t for t in self._tickets.values()
                                 if t.state == "pending"
                                 and (t.qa_id, t.round) not in taken),
                                key=lambda t: t.seq)
            if not candidates:
                raise ReviewError("queue_empty", "no claimable pending tickets")
            ticket = candidates[0]
            self._emit({"event": "ticket_claimed", "ticket_id": ticket.ticket_id,
                        "reviewer_id": reviewer_id})
            return self._tickets[ticket.ticket_id]

    def submit_verdict(self, ticket_id: str, reviewer_id: str, decision: str,
                       annotations: Iterable[dict[str, str]] = ()) -> ReviewTicket:
        """Decide an in-review ticket; the event is durable before returning."""
        if decision not in DECISIONS:
            raise ReviewError("invalid_decision", f"decision must be one of {DECISIONS}",
                              field_path="decision")
        annotations = [{"field_path": str(a["field_path"]), "comment": str(a["comment"])}
                       for a in annotations]
        with self._lock:
            if ticket_id not in self._tickets:
                raise ReviewError("unknown_ticket", ticket_id)
            ticket = self._tickets[ticket_id]
            if ticket.state in TERMINAL_STATES or ticket.state == "pending":
                raise ReviewError("invalid_transition",
                                  f"ticket is {ticket.state}, expected in_review")
            if ticket.reviewer_id != reviewer_id:
                raise ReviewError("not_assignee",
                                  f"ticket is assigned to {ticket.reviewer_id!r}")
            self._emit({"event": "verdict_submitted", "ticket_id": ticket_id,
                        "reviewer_id": reviewer_id, "decision": decision,
                        "annotations": annotations, "decided_at": self._clock()})
            return self._tickets[ticket_id]

    def round_status(self, round_no: int) -> dict[str, Any]:
        if round_no not in ROUNDS:
            raise ReviewError("invalid_round", f"round must be one of {ROUNDS}")
        with self._lock:
            tickets = self._current_tickets(round_no)
            counts = {state: 0 for state in
                      ("pending", "in_review", "accepted", "rejected", "needs_revision")}
            for ticket in tickets:
                counts[ticket.state] += 1
            consensus = self._consensus_accepted(round_no)
            enrolled = {t.qa_id for t in tickets}
            policy = self._policies.get(round_no, DEFAULT_POLICIES[round_no])
            eligible = bool(enrolled) and \
                len(consensus) / len(enrolled) >= policy.advance_threshold
            return {"round": round_no, "counts": counts,
                    "consensus_accepted": consensus,
                    "enrolled": len(enrolled),
                    "advance_eligible": eligible}

    def export_approved(self, corpus: Iterable[QaPair],
                        rounds_required: int = 3) -> list[QaPair]:
        """Exactly the items consensus-accepted in every required round."""
        with self._lock:
            approved_sets = [set(self._consensus_accepted(r))
                             for r in range(1, rounds_required + 1)]
        return [qa for qa in corpus if all(qa.qa_id in s for s in approved_sets)]

    def events(self) -> list[dict[str, Any]]:
        with self._lock:
            return self._log.read_all()

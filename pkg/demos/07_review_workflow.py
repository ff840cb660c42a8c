#!/usr/bin/env python3
"""Expert validation: three review rounds, consensus, gated export.

Run: python3 demos/07_review_workflow.py
The same operations are exposed over REST by `dudp serve`.
"""
import tempfile

from dudp.qagen import QaPair
from dudp.review import ReviewError, ReviewService, RoundPolicy

corpus = [QaPair(qa_id=f"qa-{i}", record_id=f"r-{i}",
                 question="Which organ is shown?",
                 answer="The organ shown in this ultrasound image is the liver.",
                 answer_form="free_text", gold_label="liver")
          for i in range(4)]

store = tempfile.mkdtemp(prefix="review-store-")
service = ReviewService(store_dir=store)

# Round 1: one reviewer per item.
service.enqueue_round([qa.qa_id for qa in corpus], 1,
                      RoundPolicy(reviewers_per_ticket=1))
while True:
    try:
        ticket = service.claim_next("dr-chen")
    except ReviewError:
        break
    decision = "rejected" if ticket.qa_id == "qa-3" else "accepted"
    service.submit_verdict(ticket.ticket_id, "dr-chen", decision,
                           [{"field_path": "answer", "comment": "checked vs image"}])
print("round 1:", service.round_status(1)["counts"])

# Round 2 requires round-1 consensus; the rejected item cannot advance.
survivors = service.round_status(1)["consensus_accepted"]
try:
    service.enqueue_round(["qa-3"], 2)
except ReviewError as err:
    print("qa-3 blocked from round 2:", err.code)

# Two reviewers, unanimous consensus.
service.enqueue_round(survivors, 2, RoundPolicy(reviewers_per_ticket=2))
for reviewer in ("dr-ortiz", "dr-khan"):
    while True:
        try:
            ticket = service.claim_next(reviewer)
        except ReviewError:
            break
        service.submit_verdict(ticket.ticket_id, reviewer, "accepted")
print("round 2:", service.round_status(2)["consensus_accepted"])

service.enqueue_round(survivors, 3, RoundPolicy(reviewers_per_ticket=2))
for reviewer in ("dr-ortiz", "dr-khan"):
    while True:
        try:
            ticket = service.claim_next(reviewer)
        except ReviewError:
            break
        service.submit_verdict(ticket.ticket_id, reviewer, "accepted")

# Export emits exactly the items consensus-accepted in all three rounds.
approved = service.export_approved(corpus)
print("exported:", [qa.qa_id for qa in approved])

# Every mutation lives in the append-only event log; reopening the store
# replays it into the identical state.
reopened = ReviewService(store_dir=store)
assert reopened.round_status(3) == service.round_status(3)
print("event log entries:", len(service.events()), "(replay verified)")

#!/usr/bin/env python3
"""QA generation: seeded template draws, balanced MCQs, question evolution.

Run: python3 demos/03_qa_generation.py
"""
import collections
import json

from dudp import build_mcq, build_starter_bank, render_qa, validate_record
from dudp.gateway import GatewayProfile, ModelGateway, ScriptedTransport
from dudp.qagen import evolve_depth

bank = build_starter_bank()
print("starter bank:", {t.value: len(v) for t, v in bank.templates.items()})

record = validate_record(json.dumps({
    "id": "demo-thyroid-0042",
    "source": {"dataset_name": "demo", "origin_id": "t/42.png", "license": "CC0"},
    "task": "diagnostic_classification",
    "anatomy": "thyroid",
    "media": [{"kind": "image", "uri": "t/42.png"}],
    "label": {"class": "malignant nodule"},
}))

# Rendering is a pure function of (record, bank, seed); rerun it anywhere in
# a sharded job and the same pair comes back.
qa = render_qa(record, bank, seed=7)
print("Q:", qa.question)
print("A:", qa.answer)
assert render_qa(record, bank, seed=7) == qa

# MCQs place the gold answer at a uniformly drawn letter per (id, seed), so
# letter frequencies balance across a corpus.
pool = ["benign nodule", "colloid cyst", "normal thyroid", "calcification"]
histogram = collections.Counter()
for fake_index in range(2000):
    fake = validate_record(json.dumps({
        "id": f"demo-{fake_index}",
        "source": {"dataset_name": "demo", "origin_id": "x", "license": "CC0"},
        "task": "diagnostic_classification", "anatomy": "thyroid",
        "media": [{"kind": "image", "uri": "x.png"}],
        "label": {"class": "malignant nodule"},
    }))
    histogram[build_mcq(fake, pool, seed=42).correct_choice] += 1
print("correct-letter histogram over 2000 items:", dict(sorted(histogram.items())))

mcq = build_mcq(record, pool, seed=42)
print(mcq.question)
print("correct:", mcq.correct_choice)

# Evolution rewrites a question via a model gateway; a scripted transport
# stands in for the live service here. The domain guard rejects drift.
free = render_qa(record, bank, seed=3)
if free.answer_form != "free_text":
    from dataclasses import replace
    free = replace(free, answer_form="free_text")
gateway = ModelGateway(
    profile=GatewayProfile(kind="echo", backoff_s=0.0),
    transport=ScriptedTransport([
        "Beyond classifying the thyroid nodule, which two sonographic features "
        "most strongly favor malignancy, and how would they change follow-up?",
        "Marked hypoechogenicity and microcalcifications favor malignancy; both "
        "warrant biopsy rather than interval ultrasound.",
    ]))
harder = evolve_depth(free, gateway)
print("evolved Q:", harder.question)
print("lineage:", harder.lineage)

#!/usr/bin/env python3
"""The quality gate: exact rule predicates, then an LLM judge with a rubric.

Run: python3 demos/04_filter_pipeline.py
"""
import dataclasses
import json

from dudp import FilterRuleConfig, build_starter_bank, render_qa, validate_record
from dudp.filterbank import run_pipeline
from dudp.gateway import GatewayProfile, ModelGateway

bank = build_starter_bank()
records = []
for i, label in enumerate(["hepatic cyst", "hemangioma", "fatty infiltration"]):
    records.append(validate_record(json.dumps({
        "id": f"demo-{i}",
        "source": {"dataset_name": "demo", "origin_id": f"{i}.png", "license": "CC0"},
        "task": "diagnostic_classification", "anatomy": "liver",
        "media": [{"kind": "image", "uri": f"{i}.png"}],
        "label": {"class": label},
    })))
index = {r.id: r for r in records}

corpus = [render_qa(r, bank, seed=5) for r in records]
# Plant two defects: a truncated answer and an answer whose label was lost.
corpus[0] = dataclasses.replace(corpus[0], answer="yes")
corpus[1] = dataclasses.replace(corpus[1],
                                answer="The findings are most consistent with nothing.")

# Stage 1: rules are exact predicates, so planted defects are always caught
# and clean items never are.
passed, audit = run_pipeline(corpus, index, FilterRuleConfig(), stages=("rule",))
for verdict in audit:
    print(f"rule  {verdict.qa_id}: {verdict.decision:6s} {verdict.rule_code or ''}")

# Stage 2: a judge model scores relevance / accuracy / consistency 1-5 and
# the pair passes only if every score clears its threshold. A static mock
# stands in for the live judge.
judge = ModelGateway(profile=GatewayProfile(
    kind="static",
    static_response=json.dumps({"relevance": 5, "accuracy": 4, "consistency": 5,
                                "rationale": "grounded in the image label"})))
passed, audit = run_pipeline(corpus, index, FilterRuleConfig(), judge,
                             stages=("rule", "semantic"))
for verdict in audit:
    scores = verdict.scores
    tail = f"scores={scores.relevance}/{scores.accuracy}/{scores.consistency}" \
        if scores else (verdict.rule_code or "")
    print(f"{verdict.stage:8s} {verdict.qa_id}: {verdict.decision:6s} {tail}")
print("survivors:", [qa.qa_id for qa in passed])

#!/usr/bin/env python3
"""Benchmark scoring: per-task metrics and the aggregate score.

Run: python3 demos/06_evaluation.py
"""
from dudp.metrics import (bleu, eval_run, render_table, rouge_l,
                          score_classification, score_regression, u2_score)

# Classification: exact-match accuracy + macro F1 over gold classes.
print(score_classification(["cyst", "nodule", "cyst"], ["cyst", "nodule", "nodule"]))

# Numeric estimation: rmse / mae / percent within relative tolerance.
print(score_regression([5.15, 33.0], [5.2, 30.0], tolerance=0.05))

# Generation: sentence BLEU (add-one smoothing above unigram) and ROUGE-L.
candidate = "anechoic cyst with posterior enhancement"
reference = "a simple anechoic cyst shows posterior acoustic enhancement"
print("bleu:", round(bleu(candidate, [reference]), 4),
      "rouge_l:", round(rouge_l(candidate, reference), 4))

# A full run routes each prediction to its task kind's metric profile and
# aggregates one scalar per task into the final score.
gold = {
    "d1": {"task_kind": "DD", "target": "hepatic cyst"},
    "d2": {"task_kind": "DD", "target": "hemangioma"},
    "v1": {"task_kind": "VRA", "target": "four chamber view"},
    "l1": {"task_kind": "LL", "target": "upper left"},
    "o1": {"task_kind": "OD", "target": "liver"},
    "k1": {"task_kind": "KD", "target": "apex"},
    "c1": {"task_kind": "CVE", "target": "5.2 mm"},
    "r1": {"task_kind": "RG", "target": reference},
    "g1": {"task_kind": "CG", "target": "fetal abdominal view"},
}
preds = [
    {"qa_id": "d1", "prediction": "hepatic cyst"},
    {"qa_id": "d2", "prediction": "hepatic cyst"},
    {"qa_id": "v1", "prediction": "four chamber view"},
    {"qa_id": "l1", "prediction": "upper right"},
    {"qa_id": "o1", "prediction": "liver"},
    {"qa_id": "k1", "prediction": "apex"},
    {"qa_id": "c1", "prediction": "0.53 cm"},   # unit-converted before scoring
    {"qa_id": "r1", "prediction": candidate},
    {"qa_id": "g1", "prediction": "fetal abdominal view"},
]
report = eval_run(preds, gold)
print(render_table(report, name="demo-model"))
print("aggregate:", round(report.u2, 4), "config:", report.config_hash)

# The aggregate is a uniform-weight mean of per-task scalars by default;
# weights are configurable and hashed into the report for comparability.
print("reweighted:", round(u2_score(report.per_task,
                                    weights={"DD": 3.0}), 4))

"""Benchmark scoring across the eight ultrasound task kinds, with a single
aggregate score.

Task kinds and their metric profiles:

    DD, VRA       accuracy + macro F1
    LL, OD, KD    accuracy
    CVE           rmse, mae, %tol (numeric estimation)
    RG, CG        BLEU%, ROUGE-L%, embedding-similarity% (generation)

The aggregate is a weighted mean of one scalar per task (uniform weights by
default); its aggregation settings are hashed into the report so scores are
only compared within identical configs. Absent generation metrics score 0
in the aggregate, matching the zero-BLEU convention for models that cannot
produce text.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .gateway import ModelGateway
from .records import canonical_json
from .units import normalize_quantity

TASK_KINDS = ("DD", "VRA", "LL", "OD", "KD", "CVE", "RG", "CG")

METRIC_PROFILES: dict[str, tuple[str, ...]] = {
    "DD": ("accuracy", "macro_f1"),
    "VRA": ("accuracy", "macro_f1"),
    "LL": ("accuracy",),
    "OD": ("accuracy",),
    "KD": ("accuracy",),
    "CVE": ("rmse", "mae", "pct_tol"),
    "RG": ("bleu", "rouge_l", "embed_sim"),
    "CG": ("bleu", "rouge_l", "embed_sim"),
}

TOKENIZER_VERSION = "ws-1"
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

_EPS = 1e-12


class MetricError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


def tokenize(text: str) -> list[str]:
    """Versioned tokenizer: casefold, Unicode words, punctuation split off."""
    return _TOKEN_RE.findall(text.casefold())


def score_classification(preds: Sequence[str], gold: Sequence[str]) -> dict[str, float]:
    """Exact-match accuracy and macro F1 over the classes present in gold.

    A gold class never predicted contributes F1 = 0 to the macro mean;
    classes that appear only in predictions are not averaged in.
    """
    if len(preds) != len(gold):
        raise MetricError("length_mismatch", f"{len(preds)} predictions vs {len(gold)} gold")
    if not gold:
        raise MetricError("empty_input")
    hits = sum(1 for p, g in zip(preds, gold) if p == g)
    classes = sorted(set(gold))
    f1_sum = 0.0
    for cls in classes:
        tp = sum(1 for p, g in zip(preds, gold) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(preds, gold) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(preds, gold) if p != cls and g == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1_sum += 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": hits / len(gold), "macro_f1": f1_sum / len(classes)}


def score_regression(preds: Sequence[float], gold: Sequence[float],
                     tolerance: float = 0.05) -> dict[str, float]:
    """rmse, mae, and the percentage of predictions within relative tolerance."""
    if len(preds) != len(gold):
        raise MetricError("length_mismatch", f"{len(preds)} predictions vs {len(gold)} gold")
    if not gold:
        raise MetricError("empty_input")
    p = np.asarray(preds, dtype=float)
    g = np.asarray(gold, dtype=float)
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(p)):
        raise MetricError("nonfinite_value")
    err = p - g
    within = np.abs(err) / np.maximum(np.abs(g), _EPS) <= tolerance
    return {"rmse": float(np.sqrt(np.mean(err ** 2))),
            "mae": float(np.mean(np.abs(err))),
            "pct_tol": float(100.0 * np.mean(within))}


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str] | str, references: Sequence[Sequence[str] | str],
         max_n: int = 4) -> float:
    """Sentence BLEU: clipped n-gram precisions up to max_n with add-one
    smoothing on orders above unigram, brevity penalty min(1, e^(1 - r/c)).

    Orders the candidate is too short to form are dropped and the geometric
    mean renormalizes over the usable orders, so score(x, x) = 1 holds for
    any nonempty x. r is the reference length closest to the candidate's
    (shorter wins ties). An empty candidate scores 0 by convention.
    """
    cand = tokenize(candidate) if isinstance(candidate, str) else list(candidate)
    refs = [tokenize(r) if isinstance(r, str) else list(r) for r in references]
    if not refs:
        raise MetricError("empty_input", "at least one reference required")
    if not cand:
        return 0.0

    log_precisions = []
    for n in range(1, max_n + 1):
        cand_counts = _ngrams(cand, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue  # candidate shorter than n
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, count in _ngrams(ref, n).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        if n == 1:
            if clipped == 0:
                return 0.0
            log_precisions.append(math.log(clipped / total))
        else:
            log_precisions.append(math.log((clipped + 1.0) / (total + 1.0)))

    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(sum(log_precisions) / len(log_precisions))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str] | str, reference: Sequence[str] | str,
            beta: float = 1.2) -> float:
    """ROUGE-L F-measure from longest-common-subsequence overlap."""
    cand = tokenize(candidate) if isinstance(candidate, str) else list(candidate)
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    beta2 = beta * beta
    return (1 + beta2) * precision * recall / (recall + beta2 * precision)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def embed_sim(candidate: str, reference: str, embedder: ModelGateway) -> float:
    """Greedy token-level cosine matching, F-measure style, clamped to [0, 1]."""
    cand_tokens = tokenize(candidate)
    ref_tokens = tokenize(reference)
    if not cand_tokens or not ref_tokens:
        return 0.0
    vectors = embedder.embed(cand_tokens + ref_tokens)
    cand_vecs = [np.asarray(v, dtype=float) for v in vectors[:len(cand_tokens)]]
    ref_vecs = [np.asarray(v, dtype=float) for v in vectors[len(cand_tokens):]]
    precision = sum(max(_cosine(cv, rv) for rv in ref_vecs) for cv in cand_vecs) \
        / len(cand_vecs)
    recall = sum(max(_cosine(rv, cv) for cv in cand_vecs) for rv in ref_vecs) \
        / len(ref_vecs)
    precision, recall = max(precision, 0.0), max(recall, 0.0)
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def task_scalar(kind: str, metric_map: dict[str, float]) -> float:
    """Collapse one task's metric map to a scalar in [0, 1] for aggregation."""
    if kind in ("DD", "VRA"):
        return (metric_map.get("accuracy", 0.0) + metric_map.get("macro_f1", 0.0)) / 2.0
    if kind in ("LL", "OD", "KD"):
        return metric_map.get("accuracy", 0.0)
    if kind == "CVE":
        return metric_map.get("pct_tol", 0.0) / 100.0
    # Generation: mean of available metrics, reported as percentages.
    available = [metric_map[name] / 100.0 for name in ("bleu", "rouge_l", "embed_sim")
                 if name in metric_map]
    return sum(available) / len(available) if available else 0.0


def u2_score(per_task: dict[str, dict[str, float]],
             weights: dict[str, float] | None = None) -> float:
    """Weighted mean of per-task scalars over all eight task kinds.

    Tasks missing from per_task score 0, matching the convention that a
    model unable to produce a task's output earns nothing for it.
    """
    for kind in per_task:
        if kind not in TASK_KINDS:
            raise MetricError("unknown_task_key", kind)
    if weights:
        for kind in weights:
            if kind not in TASK_KINDS:
                raise MetricError("unknown_task_key", kind)
    weights = weights or {}
    total_weight = sum(weights.get(kind, 1.0) for kind in TASK_KINDS)
    if total_weight <= 0:
        raise MetricError("bad_weights", "weights must sum to a positive value")
    acc = 0.0
    for kind in TASK_KINDS:
        scalar = task_scalar(kind, per_task.get(kind, {}))
        acc += weights.get(kind, 1.0) * scalar
    return acc / total_weight


@dataclass(frozen=True)
class EvalConfig:
    tolerance: float = 0.05  # CVE relative tolerance
    rouge_beta: float = 1.2
    weights: dict[str, float] = field(default_factory=dict)
    embedder_profile: str = ""  # empty: embed_sim column absent

    def config_hash(self) -> str:
        blob = canonical_json({"tolerance": self.tolerance, "rouge_beta": self.rouge_beta,
                               "weights": self.weights, "tokenizer": TOKENIZER_VERSION,
                               "embedder": self.embedder_profile})
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class MetricReport:
    per_task: dict[str, dict[str, float]]
    u2: float
    counts: dict[str, int]
    config_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {"per_task": self.per_task, "u2_score": self.u2,
                "counts": self.counts, "config_hash": self.config_hash}


def _parse_pred_number(text: str) -> tuple[float, str | None]:
    match = None
    for match in re.finditer(r"([-+]?\d+(?:[.,]\d+)?(?:[eE][-+]?\d+)?)\s*"
                             r"([%µa-zA-Z][a-zA-Z0-9/%^²³]*)?", text):
        pass
    if match is None:
        raise ValueError(f"no number in {text!r}")
    token = match.group(1)
    if "," in token and "." not in token:
        token = token.replace(",", ".")
    return float(token), match.group(2)


def eval_run(predictions: Iterable[dict[str, Any]],
             gold: dict[str, dict[str, Any]],
             config: EvalConfig | None = None,
             embedder: ModelGateway | None = None) -> MetricReport:
    """Score a prediction file against a gold index.

    predictions: {qa_id, task_kind, prediction} items. gold: qa_id ->
    {"task_kind", "target"} where target is the gold label, value string, or
    reference text as fits the task kind. Numeric predictions that fail to
    parse are scored as 0.0 (documented convention, keeps rmse finite);
    their units are normalized to the gold dimension when both declare one.
    """
    config = config or EvalConfig()
    buckets: dict[str, list[tuple[str, str]]] = {}
    count = 0
    for item in predictions:
        count += 1
        qa_id = item["qa_id"]
        if qa_id not in gold:
            raise MetricError("unresolved_id", qa_id)
        gold_item = gold[qa_id]
        kind = item.get("task_kind") or gold_item["task_kind"]
        if kind not in TASK_KINDS:
            raise MetricError("unknown_task_key", str(kind))
        if gold_item.get("task_kind") not in (None, kind):
            raise MetricError("task_profile_mismatch",
                              f"{qa_id}: prediction {kind} vs gold {gold_item['task_kind']}")
        buckets.setdefault(kind, []).append((str(item["prediction"]),
                                             str(gold_item["target"])))
    if count == 0:
        raise MetricError("empty_input")

    per_task: dict[str, dict[str, float]] = {}
    counts: dict[str, int] = {}
    for kind, pairs in sorted(buckets.items()):
        counts[kind] = len(pairs)
        preds = [p for p, _ in pairs]
        targets = [g for _, g in pairs]
        if kind in ("DD", "VRA", "LL", "OD", "KD"):
            normalize = lambda s: " ".join(s.split()).strip().casefold()
            per_task[kind] = {
                name: value for name, value in score_classification(
                    [normalize(p) for p in preds], [normalize(g) for g in targets]).items()
                if name in METRIC_PROFILES[kind]
            }
        elif kind == "CVE":
            pred_values, gold_values = [], []
            for p, g in pairs:
                gold_value, gold_unit = _parse_pred_number(g)
                try:
                    value, unit = _parse_pred_number(p)
                except ValueError:
                    value, unit = 0.0, gold_unit
                if gold_unit is not None and unit is not None:
                    value_n, dim = normalize_quantity(value, unit)
                    gold_factor, gold_dim = normalize_quantity(1.0, gold_unit)
                    # Express the prediction in the gold item's own unit.
                    value = value_n / gold_factor if dim == gold_dim else 0.0
                pred_values.append(value)
                gold_values.append(gold_value)
            per_task[kind] = score_regression(pred_values, gold_values, config.tolerance)
        else:  # RG, CG
            bleu_scores = [bleu(p, [g]) for p, g in pairs]
            rouge_scores = [rouge_l(p, g, beta=config.rouge_beta) for p, g in pairs]
            metric_map = {
                "bleu": 100.0 * sum(bleu_scores) / len(pairs),
                "rouge_l": 100.0 * sum(rouge_scores) / len(pairs),
            }
            if embedder is not None:
                sims = [embed_sim(p, g, embedder) for p, g in pairs]
                metric_map["embed_sim"] = 100.0 * sum(sims) / len(pairs)
            per_task[kind] = metric_map

    return MetricReport(per_task=per_task,
                        u2=u2_score(per_task, config.weights or None),
                        counts=counts,
                        config_hash=config.config_hash())


_TABLE_COLUMNS = [
    ("DD", "accuracy", "DD Acc."), ("DD", "macro_f1", "DD F1"),
    ("VRA", "accuracy", "VRA Acc."), ("VRA", "macro_f1", "VRA F1"),
    ("LL", "accuracy", "LL Acc."), ("OD", "accuracy", "OD Acc."),
    ("KD", "accuracy", "KD Acc."),
    ("CVE", "rmse", "RMSE"), ("CVE", "mae", "MAE"), ("CVE", "pct_tol", "%tol"),
    ("RG", "bleu", "RG BLEU%"), ("RG", "rouge_l", "RG Rouge%"),
    ("RG", "embed_sim", "RG BERT%"),
    ("CG", "bleu", "CG BLEU%"), ("CG", "rouge_l", "CG Rouge%"),
    ("CG", "embed_sim", "CG BERT%"),
]


def render_table(report: MetricReport, name: str = "model") -> str:
    """Aligned-column text table mirroring the benchmark's column order."""
    headers = [label for _, _, label in _TABLE_COLUMNS] + ["U2-Score"]
    values = []
    for kind, metric, _ in _TABLE_COLUMNS:
        value = report.per_task.get(kind, {}).get(metric)
        values.append("-" if value is None else f"{value:.4f}")
    values.append(f"{report.u2:.4f}")
    name_width = max(len(name), len("model"))
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    header_row = "model".ljust(name_width) + "  " + "  ".join(
        h.rjust(w) for h, w in zip(headers, widths))
    value_row = name.ljust(name_width) + "  " + "  ".join(
        v.rjust(w) for v, w in zip(values, widths))
    return header_row + "\n" + value_row


def write_report(report: MetricReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")

"""Three-tier quality gate: rule filters, model-judge scoring, expert hand-off.

Rule filtering is an exact, pure predicate stage. Semantic filtering prompts
a judge model with a fixed rubric and thresholds its structured scores.
Rejections are verdicts, never exceptions; every item that enters a stage
leaves exactly one verdict in the audit log for that stage.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable

from .gateway import ModelGateway
from .qagen import QaPair
from .records import DudpRecord, gold_label
from .textutil import contains_normalized, find_last_json_object

FIXED_TIMESTAMP = "1970-01-01T00:00:00Z"

# Conservative shapes for leaked personal data: honorific + surname,
# date-of-birth mentions, dated numerics, and ID-number formats.
DEFAULT_SENSITIVE_PATTERNS = (
    r"\b(?:Dr|Mr|Mrs|Ms|Prof)\.\s+[A-Z][a-z]+",
    r"(?i)\b(?:DOB|date of birth)\b",
    r"\b\d{1,2}[/-]\d{1,2}[/-](?:19|20)\d{2}\b",
    r"\b\d{3}-\d{2}-\d{4}\b",
    r"(?i)\b(?:MRN|patient id)\s*[:#]?\s*\d+",
)


class FilterError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class FilterRuleConfig:
    min_answer_chars: int = 10
    max_images: int = 8
    sensitive_patterns: tuple[str, ...] = DEFAULT_SENSITIVE_PATTERNS
    require_gold_containment: bool = True
    require_embedded_json: bool = False

    def __post_init__(self):
        if self.min_answer_chars < 1:
            raise ValueError("min_answer_chars must be at least 1")
        if self.max_images < 1:
            raise ValueError("max_images must be at least 1")


@dataclass(frozen=True)
class JudgeScores:
    relevance: int
    accuracy: int
    consistency: int
    rationale: str = ""

    def __post_init__(self):
        for name in ("relevance", "accuracy", "consistency"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {value!r}")


@dataclass(frozen=True)
class FilterVerdict:
    qa_id: str
    stage: str  # rule | semantic | expert
    decision: str  # pass | reject
    rule_code: str | None = None
    tripped_codes: tuple[str, ...] = ()
    scores: JudgeScores | None = None
    ticket_ref: str | None = None  # expert stage: the review ticket behind it
    timestamp: str = FIXED_TIMESTAMP


def expert_verdict(qa_id: str, ticket_id: str, decision: str,
                   timestamp: str = FIXED_TIMESTAMP) -> FilterVerdict:
    """Record an expert-stage outcome in the same audit stream; the review
    service owns the workflow, this is the hand-off bridge."""
    if decision not in ("pass", "reject"):
        raise FilterError("invalid_decision", decision)
    return FilterVerdict(qa_id=qa_id, stage="expert", decision=decision,
                         ticket_ref=ticket_id, timestamp=timestamp)


def rule_filter(qa: QaPair, record: DudpRecord, cfg: FilterRuleConfig,
                timestamp: str = FIXED_TIMESTAMP) -> FilterVerdict:
    """Exact-predicate stage. The first tripped rule names the verdict;
    every tripped rule lands in tripped_codes for the audit trail."""
    tripped: list[str] = []
    if len(qa.answer) < cfg.min_answer_chars:
        tripped.append("short_response")
    if len(qa.media) > cfg.max_images:
        tripped.append("excessive_images")
    for pattern in cfg.sensitive_patterns:
        if re.search(pattern, qa.question) or re.search(pattern, qa.answer):
            tripped.append("sensitive_content")
            break
    if cfg.require_gold_containment:
        gold = qa.gold_label or gold_label(record)
        if gold is not None and not contains_normalized(qa.answer, gold):
            tripped.append("content_inconsistency")
    if cfg.require_embedded_json and find_last_json_object(qa.answer) is None:
        tripped.append("json_missing")
    if tripped:
        return FilterVerdict(qa_id=qa.qa_id, stage="rule", decision="reject",
                             rule_code=tripped[0], tripped_codes=tuple(tripped),
                             timestamp=timestamp)
    return FilterVerdict(qa_id=qa.qa_id, stage="rule", decision="pass",
                         timestamp=timestamp)


@dataclass(frozen=True)
class JudgeThresholds:
    relevance: int = 3
    accuracy: int = 3
    consistency: int = 3


def _judge_prompt(qa: QaPair) -> list[dict[str, str]]:
    rubric = resources.files("dudp").joinpath("assets/prompts/judge_rubric_v1.txt") \
        .read_text("utf-8")
    body = f"Question:\n{qa.question}\n\nAnswer:\n{qa.answer}"
    return [{"role": "system", "content": rubric}, {"role": "user", "content": body}]


def _parse_scores(completion: str) -> JudgeScores | None:
    blob = find_last_json_object(completion)
    if blob is None:
        return None
    obj = json.loads(blob)
    try:
        return JudgeScores(relevance=obj["relevance"], accuracy=obj["accuracy"],
                           consistency=obj["consistency"],
                           rationale=str(obj.get("rationale", "")))
    except (KeyError, TypeError, ValueError):
        return None


def semantic_filter(qa: QaPair, judge: ModelGateway,
                    thresholds: JudgeThresholds = JudgeThresholds(),
                    timestamp: str = FIXED_TIMESTAMP) -> FilterVerdict:
    """LLM-judge stage: passes iff every rubric score meets its threshold.

    An unparseable judge reply earns one strict reprompt; a second failure
    rejects the pair with rule_code judge_unparseable.
    """
    messages = _judge_prompt(qa)
    completion = judge.chat(messages)
    scores = _parse_scores(completion)
    if scores is None:
        messages = messages + [
            {"role": "assistant", "content": completion},
            {"role": "user", "content": "Reply with only the JSON object, nothing else."},
        ]
        scores = _parse_scores(judge.chat(messages))
    if scores is None:
        return FilterVerdict(qa_id=qa.qa_id, stage="semantic", decision="reject",
                             rule_code="judge_unparseable", timestamp=timestamp)
    passed = (scores.relevance >= thresholds.relevance
              and scores.accuracy >= thresholds.accuracy
              and scores.consistency >= thresholds.consistency)
    return FilterVerdict(qa_id=qa.qa_id, stage="semantic",
                         decision="pass" if passed else "reject",
                         rule_code=None if passed else "judge_low_score",
                         scores=scores, timestamp=timestamp)


def run_pipeline(corpus: Iterable[QaPair],
                 record_index: dict[str, DudpRecord],
                 cfg: FilterRuleConfig | None = None,
                 judge: ModelGateway | None = None,
                 stages: tuple[str, ...] = ("rule",),
                 thresholds: JudgeThresholds = JudgeThresholds(),
                 clock: Callable[[], str] | None = None,
                 ) -> tuple[list[QaPair], list[FilterVerdict]]:
    """Run the configured stages in order over a QA corpus.

    Returns (passed pairs, audit log). The output corpus is always a subset
    of the input and no stage mutates pair content. `clock` supplies verdict
    timestamps; the default is a fixed epoch so audit logs are reproducible.
    """
    cfg = cfg or FilterRuleConfig()
    clock = clock or (lambda: FIXED_TIMESTAMP)
    for stage in stages:
        if stage not in ("rule", "semantic"):
            raise FilterError("unknown_stage", stage)
        if stage == "semantic" and judge is None:
            raise FilterError("no_judge", "semantic stage requires a judge gateway")

    passed: list[QaPair] = []
    audit: list[FilterVerdict] = []
    for qa in corpus:
        if qa.record_id not in record_index:
            raise FilterError("unresolved_record_id",
                              f"{qa.qa_id} references unknown record {qa.record_id!r}")
        alive = True
        for stage in stages:
            if stage == "rule":
                verdict = rule_filter(qa, record_index[qa.record_id], cfg,
                                      timestamp=clock())
            else:
                verdict = semantic_filter(qa, judge, thresholds, timestamp=clock())
            audit.append(verdict)
            if verdict.decision == "reject":
                alive = False
                break
        if alive:
            passed.append(qa)
    return passed, audit


def verdict_to_dict(verdict: FilterVerdict) -> dict:
    out: dict = {"qa_id": verdict.qa_id, "stage": verdict.stage,
                 "decision": verdict.decision, "timestamp": verdict.timestamp}
    if verdict.rule_code is not None:
        out["rule_code"] = verdict.rule_code
    if verdict.tripped_codes:
        out["tripped_codes"] = list(verdict.tripped_codes)
    if verdict.scores is not None:
        out["scores"] = {"relevance": verdict.scores.relevance,
                         "accuracy": verdict.scores.accuracy,
                         "consistency": verdict.scores.consistency,
                         "rationale": verdict.scores.rationale}
    if verdict.ticket_ref is not None:
        out["ticket_ref"] = verdict.ticket_ref
    return out


def write_audit_log(audit: Iterable[FilterVerdict], path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for verdict in audit:
            handle.write(json.dumps(verdict_to_dict(verdict), sort_keys=True,
                                    separators=(",", ":"), ensure_ascii=False) + "\n")
            count += 1
    return count

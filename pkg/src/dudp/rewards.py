"""Verifiable reward signals for reinforcement refinement.

Two independent binary components per rollout: a format reward for
structured-output compliance (reasoning block plus a parseable answer) and
an outcome reward for answer correctness against the gold pair. They are
deliberately not gated on each other, so a correct answer with broken
formatting still earns its outcome point; a gated variant is available via
RewardConfig for ablations. Group-relative advantages standardize total
rewards within each prompt's rollout group.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Iterable

from .qagen import QaPair
from .textutil import contains_normalized, find_last_json_object, normalize_text
from .units import normalize_quantity

ANSWER_PATTERNS = ("mcq_letter", "numeric_with_unit", "free_text", "json_embedded")


class RewardError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class ExtractionFailed(RewardError):
    def __init__(self, reason: str):
        super().__init__("extraction_failed", reason)
        self.reason = reason


@dataclass(frozen=True)
class FormatSpec:
    require_think_block: bool = True
    answer_pattern: str = "mcq_letter"
    think_open: str = "<think>"
    think_close: str = "</think>"

    def __post_init__(self):
        if self.answer_pattern not in ANSWER_PATTERNS:
            raise ValueError(f"unknown answer_pattern {self.answer_pattern!r}")
        if self.require_think_block and (not self.think_open or not self.think_close):
            raise ValueError("think delimiters must be nonempty when the block is required")

    @staticmethod
    def from_dict(obj: dict) -> "FormatSpec":
        return FormatSpec(**obj)


@dataclass(frozen=True)
class ParsedAnswer:
    kind: str
    letter: str | None = None
    value: float | None = None
    unit: str | None = None
    text: str | None = None
    think_present: bool = False


# Standalone option letter: not embedded in a word or identifier.
_LETTER_RE = re.compile(r"(?<![A-Za-z0-9])([A-D])(?![A-Za-z0-9])")
_PREFIXED_LETTER_RE = re.compile(r"(?i)answer\s*[:\-]?\s*\(?([A-D])\)?(?![A-Za-z0-9])")
_NUMBER_RE = re.compile(
    r"([-+]?\d+(?:[.,]\d+)?(?:[eE][-+]?\d+)?)"
    r"[ \t]*([%µa-zA-Z][a-zA-Z0-9/%^²³]*)?")


def _split_think(output: str, spec: FormatSpec) -> tuple[str, bool]:
    """Return (answer region, well-formed think block present).

    The answer region is lenient on purpose: with a malformed block the rest
    of the text is still parsed, because outcome correctness must not depend
    on formatting.
    """
    open_at = output.find(spec.think_open)
    if open_at == -1:
        return output, False
    close_at = output.find(spec.think_close, open_at + len(spec.think_open))
    if close_at == -1:
        return output[open_at + len(spec.think_open):], False
    region = output[close_at + len(spec.think_close):]
    # A stray re-opened block after the close is malformed.
    well_formed = spec.think_open not in region
    return region, well_formed


def _parse_number(token: str) -> float:
    if "," in token and "." not in token:
        token = token.replace(",", ".")
    return float(token)


def extract_answer(output: str, spec: FormatSpec) -> ParsedAnswer:
    """Locate and parse the answer region of a model rollout.

    mcq_letter takes the last standalone A-D token, bare or
    "Answer:"-prefixed; numeric takes the last number with an optional unit
    token; json_embedded takes the last well-formed JSON object.
    """
    region, think_ok = _split_think(output, spec)

    if spec.answer_pattern == "mcq_letter":
        candidates = [(m.start(), m.group(1).upper()) for m in _LETTER_RE.finditer(region)]
        candidates += [(m.start(), m.group(1).upper())
                       for m in _PREFIXED_LETTER_RE.finditer(region)]
        if not candidates:
            raise ExtractionFailed("no_answer_token")
        letter = max(candidates)[1]
        return ParsedAnswer(kind="mcq_letter", letter=letter, think_present=think_ok)

    if spec.answer_pattern == "numeric_with_unit":
        matches = list(_NUMBER_RE.finditer(region))
        if not matches:
            raise ExtractionFailed("no_number")
        match = matches[-1]
        try:
            value = _parse_number(match.group(1))
        except ValueError as exc:
            raise ExtractionFailed("bad_number") from exc
        if not math.isfinite(value):
            raise ExtractionFailed("bad_number")
        return ParsedAnswer(kind="numeric_with_unit", value=value,
                            unit=match.group(2), think_present=think_ok)

    if spec.answer_pattern == "json_embedded":
        blob = find_last_json_object(region)
        if blob is None:
            raise ExtractionFailed("no_json_object")
        return ParsedAnswer(kind="json_embedded", text=blob, think_present=think_ok)

    text = region.strip()
    if not text:
        raise ExtractionFailed("empty_text")
    return ParsedAnswer(kind="free_text", text=text, think_present=think_ok)


def format_reward(output: str, spec: FormatSpec) -> float:
    """1.0 iff the think block is present and well-nested (when required)
    and the answer region parses; else 0.0."""
    try:
        parsed = extract_answer(output, spec)
    except ExtractionFailed:
        return 0.0
    if spec.require_think_block and not parsed.think_present:
        return 0.0
    return 1.0


_FORM_TO_PATTERN = {"mcq": "mcq_letter", "numeric": "numeric_with_unit",
                    "free_text": "free_text", "json_embedded": "json_embedded"}

_EPS = 1e-12


def _numeric_gold(gold: QaPair) -> tuple[float, str | None] | None:
    source = gold.gold_label or gold.answer
    matches = list(_NUMBER_RE.finditer(source))
    if not matches:
        return None
    match = matches[-1]
    try:
        return _parse_number(match.group(1)), match.group(2)
    except ValueError:
        return None


def outcome_reward(parsed: ParsedAnswer, gold: QaPair, tolerance: float = 0.02) -> float:
    """1.0 iff the parsed answer matches the gold pair; else 0.0.

    mcq: exact letter match. numeric: relative error within tolerance after
    unit normalization (a missing rollout unit assumes the gold unit).
    free_text / json: normalized gold-label containment.
    """
    expected = _FORM_TO_PATTERN.get(gold.answer_form)
    if expected is None or parsed.kind != expected:
        return 0.0

    if parsed.kind == "mcq_letter":
        return 1.0 if parsed.letter == gold.correct_choice else 0.0

    if parsed.kind == "numeric_with_unit":
        target = _numeric_gold(gold)
        if target is None or parsed.value is None:
            return 0.0
        gold_value, gold_unit = target
        unit = parsed.unit or gold_unit
        if gold_unit is not None and unit is not None:
            value_n, dim = normalize_quantity(parsed.value, unit)
            gold_n, gold_dim = normalize_quantity(gold_value, gold_unit)
            if dim != gold_dim:
                return 0.0
        else:
            value_n, gold_n = parsed.value, gold_value
        rel = abs(value_n - gold_n) / max(abs(gold_n), _EPS)
        return 1.0 if rel <= tolerance else 0.0

    target_text = gold.gold_label or gold.answer
    if parsed.text is None or not normalize_text(target_text):
        return 0.0
    return 1.0 if contains_normalized(parsed.text, target_text) else 0.0


def group_advantages(rewards: list[float]) -> list[float]:
    """Group-relative advantages: (r - mean) / population std.

    A zero-variance group yields all-zero advantages.
    """
    if len(rewards) < 2:
        raise RewardError("group_too_small", f"need at least 2 rollouts, got {len(rewards)}")
    mean = sum(rewards) / len(rewards)
    variance = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    if std == 0.0:
        return [0.0] * len(rewards)
    return [(r - mean) / std for r in rewards]


@dataclass(frozen=True)
class RewardSignal:
    qa_id: str
    rollout_index: int
    format_reward: float
    outcome_reward: float
    total: float
    advantage: float


@dataclass(frozen=True)
class RewardConfig:
    spec: FormatSpec = FormatSpec()
    tolerance: float = 0.02
    gate_outcome_on_format: bool = False  # ablation variant
    on_ragged_group: str = "warn"  # warn | fail
    # Mixed corpora: derive each pair's answer pattern from its gold form
    # instead of applying spec.answer_pattern uniformly.
    pattern_from_gold: bool = True


def _spec_for(gold: QaPair, config: RewardConfig) -> FormatSpec:
    if not config.pattern_from_gold:
        return config.spec
    pattern = _FORM_TO_PATTERN.get(gold.answer_form, config.spec.answer_pattern)
    if pattern == config.spec.answer_pattern:
        return config.spec
    return dataclasses.replace(config.spec, answer_pattern=pattern)


def score_rollout(output: str, gold: QaPair, config: RewardConfig) -> tuple[float, float]:
    spec = _spec_for(gold, config)
    fmt = format_reward(output, spec)
    try:
        parsed = extract_answer(output, spec)
    except ExtractionFailed:
        return fmt, 0.0
    outcome = outcome_reward(parsed, gold, config.tolerance)
    if config.gate_outcome_on_format and fmt == 0.0:
        outcome = 0.0
    return fmt, outcome


def reward_batch(rollouts: Iterable[dict],
                 gold_corpus: dict[str, QaPair],
                 config: RewardConfig | None = None) -> list[RewardSignal]:
    """Score rollouts {qa_id, rollout_index, output_text} and attach
    group-relative advantages per qa_id group. Deterministic: output is
    sorted by (qa_id, rollout_index)."""
    config = config or RewardConfig()
    groups: dict[str, list[dict]] = {}
    for rollout in rollouts:
        qa_id = rollout["qa_id"]
        if qa_id not in gold_corpus:
            raise RewardError("unknown_qa_id", qa_id)
        groups.setdefault(qa_id, []).append(rollout)

    sizes = {len(v) for v in groups.values()}
    if len(sizes) > 1:
        message = f"rollout groups are ragged: sizes {sorted(sizes)}"
        if config.on_ragged_group == "fail":
            raise RewardError("ragged_group", message)
        logging.getLogger(__name__).warning(message)

    signals: list[RewardSignal] = []
    for qa_id in sorted(groups):
        group = sorted(groups[qa_id], key=lambda r: r["rollout_index"])
        gold = gold_corpus[qa_id]
        scored = [score_rollout(r["output_text"], gold, config) for r in group]
        totals = [fmt + outcome for fmt, outcome in scored]
        advantages = group_advantages(totals) if len(totals) >= 2 else [0.0] * len(totals)
        for rollout, (fmt, outcome), total, advantage in zip(group, scored, totals, advantages):
            signals.append(RewardSignal(qa_id=qa_id,
                                        rollout_index=rollout["rollout_index"],
                                        format_reward=fmt, outcome_reward=outcome,
                                        total=total, advantage=advantage))
    return signals


def read_rollouts(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_reward_signals(signals: Iterable[RewardSignal], path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for s in signals:
            handle.write(json.dumps({
                "qa_id": s.qa_id, "rollout_index": s.rollout_index,
                "format_reward": s.format_reward, "outcome_reward": s.outcome_reward,
                "total": s.total, "advantage": s.advantage,
            }, sort_keys=True, separators=(",", ":")) + "\n")
            count += 1
    return count

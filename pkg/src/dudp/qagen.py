"""QA-pair generation: fixed-template rendering, balanced multiple choice,
and model-assisted distillation / question evolution.

Template rendering and MCQ construction are pure functions of
(record, bank or pool, seed); the PRNG is keyed on (record.id, seed), so
generation is order-independent and shard-safe. Gateway-backed operations
(distill, evolve) are the only nondeterministic surface and are tested
against recorded transcripts.
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field, replace
from importlib import resources

from .gateway import ModelGateway
from .records import (DudpRecord, EmptyMaskError, MediaRef, TaskCategory,
                      canonical_json, format_quantity, gold_label,
                      mask_to_region_descriptor, media_from_dict, media_to_dict)
from .templates import QaTemplate, TemplateBank
from .textutil import find_last_json_object

logger = logging.getLogger(__name__)

MCQ_LETTERS = ("A", "B", "C", "D")


class QagenError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class MissingSlotError(QagenError):
    def __init__(self, template_id: str, slot: str):
        super().__init__("missing_slot", f"template {template_id} needs slot {slot!r}")
        self.template_id = template_id
        self.slot = slot


class InsufficientDistractorsError(QagenError):
    def __init__(self, have: int):
        super().__init__("insufficient_distractors", f"need 3 usable distractors, have {have}")


class DomainDriftError(QagenError):
    def __init__(self, text: str):
        super().__init__("domain_drift", f"generated text left the ultrasound domain: {text[:80]!r}")


@dataclass(frozen=True)
class QaPair:
    qa_id: str
    record_id: str
    question: str
    answer: str
    answer_form: str
    choices: dict[str, str] | None = None
    correct_choice: str | None = None
    template_id: str | None = None
    reasoning: str | None = None
    media: tuple[MediaRef, ...] = ()
    provenance: str = "synthetic"
    gold_label: str | None = None
    lineage: tuple[str, ...] = ()


def validate_qa_pair(qa: QaPair) -> None:
    """Enforce the structural invariants of a QA pair."""
    if qa.answer_form == "mcq":
        if qa.choices is None or set(qa.choices) != set(MCQ_LETTERS):
            raise QagenError("bad_mcq", "mcq requires choices for exactly A-D")
        values = list(qa.choices.values())
        if len(set(values)) != 4 or any(not v for v in values):
            raise QagenError("bad_mcq", "mcq choices must be 4 distinct nonempty strings")
        if qa.correct_choice not in MCQ_LETTERS:
            raise QagenError("bad_mcq", f"correct_choice {qa.correct_choice!r} invalid")
        if qa.gold_label is not None and qa.choices[qa.correct_choice] != qa.gold_label:
            raise QagenError("bad_mcq", "correct choice does not hold the gold label")
    if qa.answer_form == "json_embedded" and find_last_json_object(qa.answer) is None:
        raise QagenError("bad_json_answer", "answer carries no well-formed JSON object")


def _digest(key: str, length: int = 8) -> str:
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:length]


def _primary_measurement(record: DudpRecord):
    primary = record.measurements[0]
    if record.label and isinstance(record.label.get("primary"), str):
        for m in record.measurements:
            if m.name == record.label["primary"]:
                return m
    return primary


def _slot_value(record: DudpRecord, slot: str, template_id: str) -> str:
    if slot == "anatomy":
        return record.anatomy
    if slot == "label":
        value = gold_label(record)
        if value is None:
            raise MissingSlotError(template_id, slot)
        return value
    if slot == "region":
        if record.mask is None or record.mask.format != "rle":
            raise MissingSlotError(template_id, slot)
        try:
            return str(mask_to_region_descriptor(record.mask))
        except EmptyMaskError:
            raise MissingSlotError(template_id, slot) from None
    if slot in ("view", "organ", "structure"):
        if record.label and isinstance(record.label.get(slot), str):
            return record.label[slot]
        raise MissingSlotError(template_id, slot)
    if slot.startswith("measurement."):
        if not record.measurements:
            raise MissingSlotError(template_id, slot)
        m = _primary_measurement(record)
        attr = slot.split(".", 1)[1]
        if attr == "name":
            return m.name
        if attr == "unit":
            return m.unit
        if attr == "value":
            return format_quantity(m.value, m.unit).split(" ")[0]
    raise MissingSlotError(template_id, slot)


_SLOT_RE = re.compile(r"\{([a-z_][a-z0-9_.]*)\}")


def fill_slots(text: str, record: DudpRecord, template_id: str) -> str:
    out = text
    for slot in sorted(set(_SLOT_RE.findall(text)), key=len, reverse=True):
        out = out.replace("{" + slot + "}", _slot_value(record, slot, template_id))
    return out


_ANSWER_SENTENCES = {
    TaskCategory.ANATOMICAL_RECOGNITION: "The organ shown in this ultrasound image is the {gold}.",
    TaskCategory.STANDARD_VIEW: "This image shows the {gold}.",
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: "The findings are most consistent with {gold}.",
    TaskCategory.TISSUE_SEGMENTATION:
        "The segmented structure is centered in the {gold} of the image.",
    TaskCategory.BIOMETRIC_MEASUREMENT: "The measured {name} is {gold}.",
}


def _label_json(record: DudpRecord, gold: str) -> str:
    if record.task is TaskCategory.TISSUE_SEGMENTATION:
        return canonical_json({"region": gold})
    if record.task is TaskCategory.BIOMETRIC_MEASUREMENT:
        m = _primary_measurement(record)
        return canonical_json({"name": m.name, "unit": m.unit, "value": m.value})
    return canonical_json(record.label)


def synthesize_answer(record: DudpRecord, answer_form: str, template_id: str) -> str:
    """Deterministic answer text derived from the record; no model call."""
    gold = gold_label(record)
    if gold is None:
        slot = "region" if record.task is TaskCategory.TISSUE_SEGMENTATION else "label"
        raise MissingSlotError(template_id, slot)
    if answer_form == "numeric":
        return gold
    if answer_form == "json_embedded":
        payload = _label_json(record, gold)
        suffix = f" ({gold})" if record.task is TaskCategory.BIOMETRIC_MEASUREMENT else ""
        return f"The structured reading is {payload}.{suffix}"
    sentence = _ANSWER_SENTENCES[record.task]
    name = _primary_measurement(record).name if record.measurements else ""
    return sentence.format(gold=gold, name=name)


def select_template(bank: TemplateBank, record_id: str, task: TaskCategory,
                    seed: int) -> QaTemplate:
    """The seeded template draw used by render_qa; exposed for coverage tests."""
    templates = bank.for_task(task)
    if not templates:
        raise QagenError("no_templates", f"bank has no templates for {task.value}")
    rng = random.Random(f"render|{record_id}|{seed}")
    return rng.choice(templates)


def render_qa(record: DudpRecord, bank: TemplateBank, seed: int) -> QaPair:
    """Render a deterministic QA pair from a seeded template draw.

    Pure in (record, bank, seed): the same inputs always produce the same
    pair, including its qa_id.
    """
    tpl = select_template(bank, record.id, record.task, seed)
    question = fill_slots(tpl.question_text, record, tpl.template_id)
    answer = synthesize_answer(record, tpl.answer_form, tpl.template_id)
    qa = QaPair(
        qa_id=f"{record.id}-q{_digest(f'{tpl.template_id}|{seed}')}",
        record_id=record.id,
        question=question,
        answer=answer,
        answer_form=tpl.answer_form,
        template_id=tpl.template_id,
        media=record.media,
        provenance=record.provenance,
        gold_label=gold_label(record),
    )
    validate_qa_pair(qa)
    return qa


_MCQ_STEMS = {
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: "Which diagnosis best fits this ultrasound study?",
    TaskCategory.STANDARD_VIEW: "Which standard view does this image show?",
    TaskCategory.ANATOMICAL_RECOGNITION: "Which organ is shown in this ultrasound image?",
    TaskCategory.TISSUE_SEGMENTATION: "In which region of the image is the structure centered?",
    TaskCategory.BIOMETRIC_MEASUREMENT: "Which value matches the caliper measurement shown?",
}


def build_mcq(record: DudpRecord, distractor_pool: list[str], seed: int) -> QaPair:
    """Build a four-option multiple-choice pair with a seeded letter draw.

    The correct letter is drawn uniformly per (record.id, seed), so letter
    frequencies are balanced in expectation over a corpus.
    """
    gold = gold_label(record)
    if gold is None:
        raise MissingSlotError("mcq", "label")
    pool = []
    for candidate in distractor_pool:
        if candidate and candidate != gold and candidate not in pool:
            pool.append(candidate)
    if len(pool) < 3:
        raise InsufficientDistractorsError(len(pool))
    rng = random.Random(f"mcq|{record.id}|{seed}")
    distractors = rng.sample(pool, 3)
    correct = rng.choice(MCQ_LETTERS)
    choices: dict[str, str] = {}
    remaining = iter(distractors)
    for letter in MCQ_LETTERS:
        choices[letter] = gold if letter == correct else next(remaining)
    option_block = "\n".join(f"{letter}. {choices[letter]}" for letter in MCQ_LETTERS)
    qa = QaPair(
        qa_id=f"{record.id}-m{_digest(str(seed))}",
        record_id=record.id,
        question=f"{_MCQ_STEMS[record.task]}\n{option_block}",
        answer=gold,
        answer_form="mcq",
        choices=choices,
        correct_choice=correct,
        media=record.media,
        provenance=record.provenance,
        gold_label=gold,
    )
    validate_qa_pair(qa)
    return qa


def choice_class_histogram(pairs) -> dict[str, dict[str, int]]:
    """Option-class balance report over an MCQ corpus: how often each label
    appears as an option and as the correct answer."""
    histogram: dict[str, dict[str, int]] = {}
    for qa in pairs:
        if qa.answer_form != "mcq" or not qa.choices:
            continue
        for letter, label in qa.choices.items():
            entry = histogram.setdefault(label, {"option": 0, "correct": 0})
            entry["option"] += 1
            if letter == qa.correct_choice:
                entry["correct"] += 1
    return histogram


def build_distractor_pool(record: DudpRecord, corpus: list[DudpRecord]) -> list[str]:
    """Labels from same-task records, preferring the same anatomy."""
    gold = gold_label(record)
    same_anatomy, same_task = [], []
    for other in corpus:
        if other.task is not record.task or other.id == record.id:
            continue
        value = gold_label(other)
        if not value or value == gold:
            continue
        if other.anatomy == record.anatomy:
            if value not in same_anatomy:
                same_anatomy.append(value)
        elif value not in same_task:
            same_task.append(value)
    return same_anatomy + [v for v in same_task if v not in same_anatomy]


def _prompt_asset(name: str) -> str:
    return resources.files("dudp").joinpath(f"assets/prompts/{name}").read_text("utf-8")


DEFAULT_DOMAIN_KEYWORDS = (
    "ultrasound", "sonograph", "doppler", "echogenic", "hypoechoic",
    "hyperechoic", "anechoic", "isoechoic", "transducer", "probe",
    "b-mode", "m-mode", "echotexture", "acoustic", "scan",
    "lesion", "nodule", "cyst", "view", "plane",
    "brachial plexus", "lung", "liver", "knee", "thyroid", "carotid",
    "heart", "cardiac", "prostate", "breast", "kidney", "renal", "fetal",
    "fetus", "colon", "pancreas", "ovary", "ovarian", "uterus", "gallbladder",
)


@dataclass
class DomainGuard:
    """Keyword gate keeping evolved questions inside the ultrasound domain,
    with an optional judge-model fallback for keyword misses."""
    keywords: tuple[str, ...] = DEFAULT_DOMAIN_KEYWORDS
    judge: ModelGateway | None = None

    def check(self, text: str) -> bool:
        lowered = text.casefold()
        if any(k in lowered for k in self.keywords):
            return True
        if self.judge is not None:
            prompt = _prompt_asset("domain_check_v1.txt").format(question=text)
            verdict = self.judge.chat([{"role": "user", "content": prompt}])
            return verdict.strip().casefold().startswith("yes")
        return False


def distill_answer(question: str, context: str, gateway: ModelGateway) -> str:
    """Model-written answer grounded in the supplied context."""
    messages = [
        {"role": "system", "content": _prompt_asset("distill_v1.txt")},
        {"role": "user", "content": f"Context:\n{context}\n\nQuestion: {question}"},
    ]
    logger.debug("distill prompt: %s", messages)
    completion = gateway.chat(messages)
    logger.debug("distill completion: %s", completion)
    return completion


@dataclass(frozen=True)
class EvolutionConfig:
    guard: DomainGuard = field(default_factory=DomainGuard)
    redistill: bool = True


def _evolve(qa: QaPair, gateway: ModelGateway, prompt_asset: str, tag: str,
            config: EvolutionConfig) -> QaPair:
    if qa.answer_form != "free_text":
        raise QagenError("bad_answer_form", "evolution applies to free_text pairs only")
    prompt = _prompt_asset(prompt_asset).format(question=qa.question)
    new_question = gateway.chat([{"role": "user", "content": prompt}]).strip()
    if not config.guard.check(new_question):
        raise DomainDriftError(new_question)
    context = f"Q: {qa.question}\nA: {qa.answer}"
    new_answer = distill_answer(new_question, context, gateway) if config.redistill \
        else qa.answer
    return replace(
        qa,
        qa_id=f"{qa.qa_id}-{tag}{_digest(new_question)}",
        question=new_question,
        answer=new_answer,
        template_id=None,
        provenance="distilled",
        lineage=qa.lineage + (qa.qa_id,),
    )


def evolve_depth(qa: QaPair, gateway: ModelGateway,
                 config: EvolutionConfig | None = None) -> QaPair:
    """Rewrite a question into a harder variant and re-distill its answer."""
    return _evolve(qa, gateway, "evolve_depth_v1.txt", "d", config or EvolutionConfig())


def evolve_breadth(qa: QaPair, gateway: ModelGateway,
                   config: EvolutionConfig | None = None) -> QaPair:
    """Generate a related-topic question and distill its answer."""
    return _evolve(qa, gateway, "evolve_breadth_v1.txt", "b", config or EvolutionConfig())


def qa_to_dict(qa: QaPair) -> dict:
    out: dict = {
        "qa_id": qa.qa_id, "record_id": qa.record_id, "question": qa.question,
        "answer": qa.answer, "answer_form": qa.answer_form,
        "media": [media_to_dict(m) for m in qa.media],
        "provenance": qa.provenance,
    }
    if qa.choices is not None:
        out["choices"] = qa.choices
        out["correct_choice"] = qa.correct_choice
    for key in ("template_id", "reasoning", "gold_label"):
        value = getattr(qa, key)
        if value is not None:
            out[key] = value
    if qa.lineage:
        out["lineage"] = list(qa.lineage)
    return out


def qa_from_dict(obj: dict) -> QaPair:
    return QaPair(
        qa_id=obj["qa_id"], record_id=obj["record_id"], question=obj["question"],
        answer=obj["answer"], answer_form=obj["answer_form"],
        choices=obj.get("choices"), correct_choice=obj.get("correct_choice"),
        template_id=obj.get("template_id"), reasoning=obj.get("reasoning"),
        media=tuple(media_from_dict(m) for m in obj.get("media", [])),
        provenance=obj.get("provenance", "synthetic"),
        gold_label=obj.get("gold_label"),
        lineage=tuple(obj.get("lineage", ())),
    )


def write_qa_corpus(pairs, path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for qa in pairs:
            handle.write(json.dumps(qa_to_dict(qa), sort_keys=True,
                                    separators=(",", ":"), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_qa_corpus(path: str) -> list[QaPair]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(qa_from_dict(json.loads(line)))
    return out

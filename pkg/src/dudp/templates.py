"""Fixed question-template banks for deterministic QA generation.

A bank holds, per task category, a list of question templates with named
placeholders. Banks load from JSONL and must carry at least the configured
minimum number of templates per task (default 100) so sampling stays
diverse. The starter bank shipped with the package is composed from curated
lead-in and question-frame phrase tables.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .records import TaskCategory

ANSWER_FORMS = ("free_text", "mcq", "numeric", "json_embedded")

RECOGNIZED_SLOTS = frozenset({
    "anatomy", "label", "region", "view", "organ", "structure",
    "measurement.name", "measurement.value", "measurement.unit",
})

_SLOT_RE = re.compile(r"\{([a-z_][a-z0-9_.]*)\}")

DEFAULT_MINIMUM_PER_TASK = 100


class BankError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class QaTemplate:
    template_id: str
    task: TaskCategory
    question_text: str
    answer_form: str = "free_text"

    def slots(self) -> frozenset[str]:
        return frozenset(_SLOT_RE.findall(self.question_text))


@dataclass(frozen=True)
class TemplateBank:
    templates: dict[TaskCategory, tuple[QaTemplate, ...]] = field(default_factory=dict)

    def for_task(self, task: TaskCategory) -> tuple[QaTemplate, ...]:
        return self.templates.get(task, ())

    def size(self) -> int:
        return sum(len(v) for v in self.templates.values())


def _check_template(tpl: QaTemplate) -> None:
    if tpl.answer_form not in ANSWER_FORMS:
        raise BankError("unknown_answer_form",
                        f"{tpl.template_id}: {tpl.answer_form!r}")
    unknown = tpl.slots() - RECOGNIZED_SLOTS
    if unknown:
        raise BankError("unknown_slot",
                        f"{tpl.template_id}: unrecognized placeholders {sorted(unknown)}")


def make_bank(templates: Iterable[QaTemplate],
              minimum_per_task: int = DEFAULT_MINIMUM_PER_TASK) -> TemplateBank:
    """Assemble and validate a bank from individual templates."""
    by_task: dict[TaskCategory, list[QaTemplate]] = {}
    seen_ids: set[str] = set()
    seen_text: dict[TaskCategory, set[str]] = {}
    for tpl in templates:
        _check_template(tpl)
        if tpl.template_id in seen_ids:
            raise BankError("duplicate_template",
                            f"duplicate template_id {tpl.template_id!r}")
        seen_ids.add(tpl.template_id)
        texts = seen_text.setdefault(tpl.task, set())
        if tpl.question_text in texts:
            raise BankError("duplicate_template",
                            f"{tpl.template_id}: question_text already present for "
                            f"{tpl.task.value}")
        texts.add(tpl.question_text)
        by_task.setdefault(tpl.task, []).append(tpl)
    for task in TaskCategory:
        count = len(by_task.get(task, []))
        if count < minimum_per_task:
            raise BankError("bank_too_small",
                            f"{task.value}: {count} templates, minimum {minimum_per_task}")
    return TemplateBank(templates={t: tuple(v) for t, v in by_task.items()})


def load_template_bank(path: str,
                       minimum_per_task: int = DEFAULT_MINIMUM_PER_TASK) -> TemplateBank:
    """Load a JSONL bank file and enforce all bank invariants."""
    templates = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            templates.append(QaTemplate(template_id=obj["template_id"],
                                        task=TaskCategory(obj["task"]),
                                        question_text=obj["question_text"],
                                        answer_form=obj.get("answer_form", "free_text")))
    return make_bank(templates, minimum_per_task)


def save_template_bank(bank: TemplateBank, path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for task in TaskCategory:
            for tpl in bank.for_task(task):
                handle.write(json.dumps({
                    "template_id": tpl.template_id, "task": tpl.task.value,
                    "question_text": tpl.question_text, "answer_form": tpl.answer_form,
                }, ensure_ascii=False) + "\n")
                count += 1
    return count


# --- starter bank ----------------------------------------------------------

_LEAD_INS = (
    "",
    "Based on this ultrasound image, ",
    "Looking at the sonographic appearance, ",
    "In this scan, ",
    "From the imaging findings, ",
    "Considering the {anatomy} study shown, ",
    "For this {anatomy} examination, ",
    "On review of the image, ",
    "Given the acquired frame, ",
    "As shown in the ultrasound, ",
    "Per the displayed study, ",
    "After examining the image, ",
)

# Anatomy-free lead-ins for organ recognition, where naming the anatomical
# system would give the answer away.
_NEUTRAL_LEAD_INS = (
    "",
    "Based on this ultrasound image, ",
    "Looking at the sonographic appearance, ",
    "In this scan, ",
    "From the imaging findings, ",
    "In the current field of view, ",
    "Within the acquired window, ",
    "On review of the image, ",
    "Given the acquired frame, ",
    "As shown in the ultrasound, ",
    "Per the displayed study, ",
    "After examining the image, ",
)

_FRAMES: dict[TaskCategory, tuple[tuple[str, str], ...]] = {
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: (
        ("what is the most likely diagnosis?", "free_text"),
        ("which diagnosis best fits the findings?", "free_text"),
        ("what pathology is demonstrated?", "free_text"),
        ("how would you classify the lesion?", "free_text"),
        ("what is the leading consideration for this appearance?", "free_text"),
        ("what condition do the findings indicate?", "free_text"),
        ("what is your diagnostic impression?", "free_text"),
        ("state the diagnostic label for this case as a JSON object.", "json_embedded"),
        ("return the classification result in JSON form.", "json_embedded"),
    ),
    TaskCategory.STANDARD_VIEW: (
        ("which standard imaging plane is shown?", "free_text"),
        ("what standard view has been acquired?", "free_text"),
        ("identify the scan plane.", "free_text"),
        ("which protocol view does this frame represent?", "free_text"),
        ("name the standardized view.", "free_text"),
        ("what acquisition plane is this?", "free_text"),
        ("which canonical view is displayed?", "free_text"),
        ("which standard plane was the operator targeting?", "free_text"),
        ("report the standard view as a JSON object.", "json_embedded"),
    ),
    TaskCategory.ANATOMICAL_RECOGNITION: (
        ("which organ is depicted?", "free_text"),
        ("what anatomical structure is shown?", "free_text"),
        ("identify the organ in the field of view.", "free_text"),
        ("what structure is being imaged?", "free_text"),
        ("which anatomy does this scan capture?", "free_text"),
        ("name the organ visualized.", "free_text"),
        ("what is the primary structure in this image?", "free_text"),
        ("what organ does the probe visualize here?", "free_text"),
        ("state the recognized organ as a JSON object.", "json_embedded"),
    ),
    TaskCategory.TISSUE_SEGMENTATION: (
        ("where is the segmented structure located?", "free_text"),
        ("in which region of the image does the lesion lie?", "free_text"),
        ("describe the location of the delineated region.", "free_text"),
        ("which part of the frame contains the marked structure?", "free_text"),
        ("where should the outlined tissue be localized?", "free_text"),
        ("what is the position of the annotated region?", "free_text"),
        ("in which image zone is the finding centered?", "free_text"),
        ("give the standardized location descriptor for the outlined area.", "free_text"),
        ("where does the traced structure sit within the frame?", "free_text"),
    ),
    TaskCategory.BIOMETRIC_MEASUREMENT: (
        ("what is the measured {measurement.name}?", "numeric"),
        ("report the {measurement.name}.", "numeric"),
        ("what value was obtained for the {measurement.name}?", "numeric"),
        ("provide the numeric reading for the {measurement.name}.", "numeric"),
        ("what does the caliper measurement of the {measurement.name} show?", "numeric"),
        ("quantify the {measurement.name}.", "numeric"),
        ("what is the recorded {measurement.name} value?", "numeric"),
        ("state the {measurement.name} together with its unit.", "free_text"),
        ("give the measurement for the {measurement.name}, including units.", "free_text"),
    ),
}

_TASK_PREFIX = {
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: "dx",
    TaskCategory.STANDARD_VIEW: "view",
    TaskCategory.ANATOMICAL_RECOGNITION: "organ",
    TaskCategory.TISSUE_SEGMENTATION: "seg",
    TaskCategory.BIOMETRIC_MEASUREMENT: "meas",
}


def _compose(lead_in: str, frame: str) -> str:
    text = lead_in + frame
    return text[0].upper() + text[1:]


def build_starter_bank() -> TemplateBank:
    """The package's authored bank: 108 templates per task."""
    templates: list[QaTemplate] = []
    for task, frames in _FRAMES.items():
        lead_ins = _NEUTRAL_LEAD_INS if task is TaskCategory.ANATOMICAL_RECOGNITION \
            else _LEAD_INS
        index = 0
        for frame, form in frames:
            for lead_in in lead_ins:
                templates.append(QaTemplate(
                    template_id=f"{_TASK_PREFIX[task]}-{index:03d}",
                    task=task,
                    question_text=_compose(lead_in, frame),
                    answer_form=form,
                ))
                index += 1
    return make_bank(templates)


def default_bank_path() -> str:
    """Path of the packaged starter-bank JSONL asset."""
    return str(resources.files("dudp").joinpath("assets/template_bank.jsonl"))

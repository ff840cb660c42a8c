"""Shared fixtures: random-but-valid record generation for property tests."""
from __future__ import annotations

import json
import random

import pytest

from dudp.records import (DEFAULT_ANATOMY_VOCABULARY, TaskCategory,
                          record_from_dict, validate_record)

ANATOMIES = sorted(DEFAULT_ANATOMY_VOCABULARY)

DIAGNOSIS_LABELS = [
    "hepatic cyst", "malignant nodule", "benign nodule", "calcification",
    "simple cyst", "complex cyst", "hydronephrosis", "polyp", "plaque",
    "effusion", "normal study", "fatty infiltration",
]
VIEW_LABELS = [
    "fetal abdominal standard plane", "four chamber view", "long axis view",
    "short axis view", "transverse view", "sagittal view", "coronal view",
    "apical view",
]
ORGAN_LABELS = [
    "liver", "kidney", "thyroid", "breast", "prostate", "pancreas",
    "heart", "lung", "colon", "ovary",
]
MEASUREMENT_NAMES = [
    "femur length", "biparietal diameter", "nodule diameter",
    "wall thickness", "nuchal translucency", "cyst diameter",
]
UNITS = ["mm", "cm", "ml"]


def encode_rle(pixels: list[bool]) -> list[int]:
    """Row-major alternating runs starting with background; test-side oracle."""
    runs: list[int] = []
    current = False
    count = 0
    for pixel in pixels:
        if pixel == current:
            count += 1
        else:
            runs.append(count)
            current = pixel
            count = 1
    runs.append(count)
    return runs


def random_rle(rng: random.Random, width: int, height: int) -> list[int]:
    """Random mask runs summing to width*height with >=1 foreground pixel."""
    total = width * height
    pixels = [rng.random() < 0.35 for _ in range(total)]
    if not any(pixels):
        pixels[rng.randrange(total)] = True
    return encode_rle(pixels)


def random_record_dict(rng: random.Random, index: int,
                       task: TaskCategory | None = None) -> dict:
    task = task or rng.choice(list(TaskCategory))
    anatomy = rng.choice(ANATOMIES)
    media = [{"kind": "image", "uri": f"images/{index:05d}_{i}.png"}
             for i in range(rng.randint(1, 3))]
    if rng.random() < 0.2:
        media.append({"kind": "video", "uri": f"videos/{index:05d}.mp4",
                      "frame_count": rng.randint(1, 240)})
    if rng.random() < 0.5:
        media[0]["width"] = rng.randint(64, 1024)
        media[0]["height"] = rng.randint(64, 1024)
    obj: dict = {
        "id": f"gen-{index:06d}",
        "source": {"dataset_name": "genset", "origin_id": f"case/{index}",
                   "license": "CC-BY-4.0"},
        "task": task.value,
        "anatomy": anatomy,
        "media": media,
        "split": rng.choice(["train", "val", "test"]),
        "provenance": rng.choice(["public", "textbook", "synthetic", "distilled"]),
    }
    if task is TaskCategory.DIAGNOSTIC_CLASSIFICATION:
        label = rng.choice(DIAGNOSIS_LABELS)
        obj["label"] = {"class": label}
        if rng.random() < 0.4:
            extras = rng.sample([l for l in DIAGNOSIS_LABELS if l != label], 3)
            obj["label"]["label_set"] = sorted([label] + extras)
    elif task is TaskCategory.STANDARD_VIEW:
        obj["label"] = {"view": rng.choice(VIEW_LABELS)}
    elif task is TaskCategory.ANATOMICAL_RECOGNITION:
        obj["label"] = {"organ": rng.choice(ORGAN_LABELS)}
    elif task is TaskCategory.BIOMETRIC_MEASUREMENT:
        obj["measurements"] = [
            {"name": rng.choice(MEASUREMENT_NAMES),
             "value": round(rng.uniform(0.5, 99.0), rng.randint(0, 2)),
             "unit": rng.choice(UNITS)}
            for _ in range(rng.randint(1, 3))
        ]
    else:  # tissue_segmentation
        width, height = rng.randint(4, 24), rng.randint(4, 24)
        obj["mask"] = {"format": "rle", "width": width, "height": height,
                       "data": random_rle(rng, width, height)}
        if rng.random() < 0.5:
            obj["label"] = {"structure": rng.choice(DIAGNOSIS_LABELS)}
    if rng.random() < 0.3:
        obj["extra_note"] = {"nested": [1, 2.5, "text"], "flag": True}
    return obj


def random_record(rng: random.Random, index: int, task: TaskCategory | None = None):
    return record_from_dict(random_record_dict(rng, index, task))


def parse_record_dict(obj: dict):
    return validate_record(json.dumps(obj))


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240901)


@pytest.fixture
def sample_records(rng):
    return [random_record(rng, i) for i in range(40)]


@pytest.fixture
def diagnostic_record(rng):
    return random_record(rng, 7, TaskCategory.DIAGNOSTIC_CLASSIFICATION)

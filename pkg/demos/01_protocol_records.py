#!/usr/bin/env python3
"""Tour of the record protocol: validate, canonicalize, locate, split.

Run: python3 demos/01_protocol_records.py
"""
import json

from dudp import (canonicalize, mask_to_region_descriptor, partition_splits,
                  validate_record)
from dudp.records import MaskRef, SchemaError, gold_label

# A record arrives as JSON text, usually one line of a corpus file.
raw = json.dumps({
    "schema": "dudp/1",
    "id": "demo-liver-0001",
    "source": {"dataset_name": "demo", "origin_id": "cases/0001.png",
               "license": "CC-BY-4.0"},
    "task": "diagnostic_classification",
    "anatomy": "liver",
    "media": [{"kind": "image", "uri": "cases/0001.png", "width": 640, "height": 480}],
    "label": {"class": "hepatic cyst", "label_set": ["hepatic cyst", "hemangioma",
                                                     "normal study"]},
    "reviewer_hint": "textbook case",   # unknown keys ride along in extensions
})

record = validate_record(raw)
print("task:", record.task.value)
print("gold label:", gold_label(record))
print("extensions:", record.extensions)

# Canonical form is byte-stable: sorted keys, no stray whitespace, shortest
# float spellings. Two serializations of the same record are identical.
line = canonicalize(record)
assert canonicalize(validate_record(line)) == line
print("canonical line:", line[:100], "...")

# Validation errors carry a field path and machine-readable code.
broken = json.loads(raw)
broken["media"][0]["uri"] = "has a space.png"
try:
    validate_record(json.dumps(broken))
except SchemaError as err:
    print("rejected:", err.field_path, err.code)

# Segmentation masks are run-length encoded; the centroid maps to one of
# nine location phrases used in generated answers.
mask = MaskRef(format="rle", width=6, height=6, data=(5, 1, 5, 1, 24))
print("lesion location:", mask_to_region_descriptor(mask))

# Split assignment hashes (id, seed): stable under reordering and sharding.
corpus = [record]
assigned = partition_splits(corpus, {"train": 0.8, "val": 0.1, "test": 0.1}, seed=7)
print("split for", assigned[0].id, "->", assigned[0].split)

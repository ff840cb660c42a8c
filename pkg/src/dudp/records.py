"""Core ultrasound record protocol: types, validation, canonical JSON form.

A corpus is UTF-8 JSONL, one canonical record per line, each carrying the
top-level field ``schema: "dudp/1"``. All functions here are pure; records
are frozen dataclasses and safe to share across workers.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Iterator
from urllib.parse import urlsplit

SCHEMA_VERSION = "dudp/1"

# Default anatomical-system vocabulary (15 systems). Configurable: pass your
# own set to validate_record when a corpus uses a different taxonomy.
DEFAULT_ANATOMY_VOCABULARY = frozenset({
    "brachial plexus", "lung", "liver", "knee", "thyroid",
    "carotid artery", "soft tissue", "heart", "prostate", "breast",
    "kidney", "fetal", "colon", "pancreas", "ovary",
})

SPLITS = ("train", "val", "test")
PROVENANCES = ("public", "textbook", "synthetic", "distilled")


class DudpError(Exception):
    """Base class for protocol errors."""


class ParseError(DudpError):
    """Raw input is not well-formed JSON."""


class SchemaError(DudpError):
    """A record violates the protocol; carries the offending field path."""

    def __init__(self, field_path: str, code: str, message: str):
        super().__init__(f"{field_path}: {message} [{code}]")
        self.field_path = field_path
        self.code = code


class EmptyMaskError(DudpError):
    """Mask has no foreground pixels (code: empty_mask)."""


class BadRatiosError(DudpError):
    """Split ratios are negative or do not sum to 1 (code: bad_ratios)."""


class TaskCategory(str, Enum):
    ANATOMICAL_RECOGNITION = "anatomical_recognition"
    STANDARD_VIEW = "standard_view"
    DIAGNOSTIC_CLASSIFICATION = "diagnostic_classification"
    TISSUE_SEGMENTATION = "tissue_segmentation"
    BIOMETRIC_MEASUREMENT = "biometric_measurement"


@dataclass(frozen=True)
class SourceInfo:
    dataset_name: str
    origin_id: str
    license: str


@dataclass(frozen=True)
class MediaRef:
    kind: str  # "image" | "video"
    uri: str
    frame_count: int | None = None  # video only
    width: int | None = None
    height: int | None = None


@dataclass(frozen=True)
class MaskRef:
    format: str  # "rle" | "image_ref"
    width: int
    height: int
    # rle: tuple of run lengths, alternating background/foreground starting
    # with background, row-major. image_ref: URI string.
    data: tuple[int, ...] | str


@dataclass(frozen=True)
class Measurement:
    name: str
    value: float
    unit: str


@dataclass(frozen=True)
class RegionDescriptor:
    vertical: str  # upper | middle | lower
    horizontal: str  # left | center | right

    def __str__(self) -> str:
        return f"{self.vertical} {self.horizontal}"


@dataclass(frozen=True)
class DudpRecord:
    id: str
    source: SourceInfo
    task: TaskCategory
    anatomy: str
    media: tuple[MediaRef, ...]
    label: dict[str, Any] | None = None
    measurements: tuple[Measurement, ...] = ()
    mask: MaskRef | None = None
    split: str = "train"
    provenance: str = "public"
    extensions: dict[str, Any] = field(default_factory=dict)


def _is_valid_uri(uri: str) -> bool:
    """Accept a syntactically plausible URL or relative path."""
    if not uri or any(ord(c) <= 0x20 for c in uri) or "\\" in uri:
        return False
    if "://" in uri:
        parts = urlsplit(uri)
        return bool(parts.scheme) and bool(parts.netloc or parts.path)
    return not uri.startswith("/")


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}{key}", "missing_field", "required field absent")
    return obj[key]


def _require_str(obj: dict, key: str, path: str) -> str:
    val = _require(obj, key, path)
    if not isinstance(val, str):
        raise SchemaError(f"{path}{key}", "wrong_type", "expected a string")
    if not val:
        raise SchemaError(f"{path}{key}", "empty_value", "must be nonempty")
    return val


def _positive_int(val: Any, path: str) -> int:
    if not isinstance(val, int) or isinstance(val, bool) or val <= 0:
        raise SchemaError(path, "wrong_type", "expected a positive integer")
    return val


def _validate_media(raw: Any, path: str) -> MediaRef:
    if not isinstance(raw, dict):
        raise SchemaError(path, "wrong_type", "media entry must be an object")
    kind = _require_str(raw, "kind", path + ".")
    if kind not in ("image", "video"):
        raise SchemaError(f"{path}.kind", "unknown_enum_value", f"unknown media kind {kind!r}")
    uri = _require_str(raw, "uri", path + ".")
    if not _is_valid_uri(uri):
        raise SchemaError(f"{path}.uri", "bad_uri", "not a relative path or URL")
    frame_count = raw.get("frame_count")
    if frame_count is not None:
        frame_count = _positive_int(frame_count, f"{path}.frame_count")
        if kind != "video":
            raise SchemaError(f"{path}.frame_count", "frame_count_on_image",
                              "frame_count is only valid for video media")
    width, height = raw.get("width"), raw.get("height")
    if (width is None) != (height is None):
        missing = "height" if height is None else "width"
        raise SchemaError(f"{path}.{missing}", "dims_mismatch",
                          "width and height must be both present or both absent")
    if width is not None:
        width = _positive_int(width, f"{path}.width")
        height = _positive_int(height, f"{path}.height")
    return MediaRef(kind=kind, uri=uri, frame_count=frame_count, width=width, height=height)


def _validate_mask(raw: Any, path: str = "mask") -> MaskRef:
    if not isinstance(raw, dict):
        raise SchemaError(path, "wrong_type", "mask must be an object")
    fmt = _require_str(raw, "format", path + ".")
    if fmt not in ("rle", "image_ref"):
        raise SchemaError(f"{path}.format", "unknown_enum_value", f"unknown mask format {fmt!r}")
    width = _positive_int(_require(raw, "width", path + "."), f"{path}.width")
    height = _positive_int(_require(raw, "height", path + "."), f"{path}.height")
    data = _require(raw, "data", path + ".")
    if fmt == "rle":
        if not isinstance(data, list):
            raise SchemaError(f"{path}.data", "wrong_type", "rle data must be a list of runs")
        for run in data:
            if not isinstance(run, int) or isinstance(run, bool) or run < 0:
                raise SchemaError(f"{path}.data", "rle_negative_run",
                                  "run lengths must be nonnegative integers")
        if sum(data) != width * height:
            raise SchemaError(f"{path}.data", "rle_length_mismatch",
                              f"runs sum to {sum(data)}, expected {width * height}")
        return MaskRef(format=fmt, width=width, height=height, data=tuple(data))
    if not isinstance(data, str) or not _is_valid_uri(data):
        raise SchemaError(f"{path}.data", "bad_uri", "image_ref data must be a valid URI")
    return MaskRef(format=fmt, width=width, height=height, data=data)


def _validate_measurement(raw: Any, path: str) -> Measurement:
    if not isinstance(raw, dict):
        raise SchemaError(path, "wrong_type", "measurement must be an object")
    name = _require_str(raw, "name", path + ".")
    value = _require(raw, "value", path + ".")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}.value", "wrong_type", "expected a number")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{path}.value", "nonfinite_value", "measurement value must be finite")
    unit = _require_str(raw, "unit", path + ".")
    return Measurement(name=name, value=value, unit=unit)


_KNOWN_KEYS = {"schema", "id", "source", "task", "anatomy", "media", "label",
               "measurements", "mask", "split", "provenance"}

# Required key of the label payload, per task.
_LABEL_KEYS = {
    TaskCategory.ANATOMICAL_RECOGNITION: "organ",
    TaskCategory.STANDARD_VIEW: "view",
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: "class",
}


def _reject_constant(token: str) -> float:
    raise ParseError(f"non-finite number {token!r} is not valid JSON")


def record_from_dict(obj: dict[str, Any],
                     anatomy_vocabulary: Iterable[str] | None = None,
                     require_schema: bool = False) -> DudpRecord:
    """Validate an already-parsed JSON object into a record."""
    if not isinstance(obj, dict):
        raise SchemaError("", "wrong_type", "record must be a JSON object")
    vocab = frozenset(anatomy_vocabulary) if anatomy_vocabulary is not None \
        else DEFAULT_ANATOMY_VOCABULARY

    schema = obj.get("schema")
    if require_schema and schema is None:
        raise SchemaError("schema", "missing_field", "corpus records must declare a schema version")
    if schema is not None and schema != SCHEMA_VERSION:
        raise SchemaError("schema", "schema_version_mismatch",
                          f"expected {SCHEMA_VERSION!r}, got {schema!r}")

    rec_id = _require_str(obj, "id", "")

    raw_source = _require(obj, "source", "")
    if not isinstance(raw_source, dict):
        raise SchemaError("source", "wrong_type", "source must be an object")
    source = SourceInfo(
        dataset_name=_require_str(raw_source, "dataset_name", "source."),
        origin_id=_require_str(raw_source, "origin_id", "source."),
        license=_require_str(raw_source, "license", "source."),
    )

    raw_task = _require_str(obj, "task", "")
    try:
        task = TaskCategory(raw_task)
    except ValueError:
        raise SchemaError("task", "unknown_enum_value", f"unknown task {raw_task!r}") from None

    anatomy = _require_str(obj, "anatomy", "")
    if anatomy not in vocab:
        raise SchemaError("anatomy", "unknown_enum_value",
                          f"{anatomy!r} is not in the anatomical vocabulary")

    raw_media = _require(obj, "media", "")
    if not isinstance(raw_media, list) or not raw_media:
        raise SchemaError("media", "media_empty", "media must be a nonempty list")
    media = tuple(_validate_media(m, f"media[{i}]") for i, m in enumerate(raw_media))

    raw_meas = obj.get("measurements", [])
    if not isinstance(raw_meas, list):
        raise SchemaError("measurements", "wrong_type", "measurements must be a list")
    measurements = tuple(_validate_measurement(m, f"measurements[{i}]")
                         for i, m in enumerate(raw_meas))

    mask = _validate_mask(obj["mask"]) if obj.get("mask") is not None else None

    label = obj.get("label")
    if label is not None and not isinstance(label, dict):
        raise SchemaError("label", "wrong_type", "label must be an object")

    # Task-specific payload shape.
    if task in _LABEL_KEYS:
        key = _LABEL_KEYS[task]
        if label is None:
            raise SchemaError("label", "label_shape_mismatch",
                              f"{task.value} requires a label object")
        if not isinstance(label.get(key), str) or not label[key]:
            raise SchemaError(f"label.{key}", "label_shape_mismatch",
                              f"{task.value} requires a nonempty label.{key} string")
        if task is TaskCategory.DIAGNOSTIC_CLASSIFICATION:
            label_set = label.get("label_set")
            if label_set is not None:
                if (not isinstance(label_set, list)
                        or not all(isinstance(x, str) for x in label_set)):
                    raise SchemaError("label.label_set", "wrong_type",
                                      "label_set must be a list of strings")
                if label["class"] not in label_set:
                    raise SchemaError("label.class", "label_shape_mismatch",
                                      "class must belong to the declared label set")
    elif task is TaskCategory.TISSUE_SEGMENTATION:
        if mask is None:
            raise SchemaError("mask", "label_shape_mismatch",
                              "tissue_segmentation requires a mask")
    elif task is TaskCategory.BIOMETRIC_MEASUREMENT:
        if not measurements:
            raise SchemaError("measurements", "label_shape_mismatch",
                              "biometric_measurement requires a nonempty measurements list")

    split = obj.get("split", "train")
    if split not in SPLITS:
        raise SchemaError("split", "unknown_enum_value", f"unknown split {split!r}")
    provenance = obj.get("provenance", "public")
    if provenance not in PROVENANCES:
        raise SchemaError("provenance", "unknown_enum_value",
                          f"unknown provenance {provenance!r}")

    extensions = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS}
    return DudpRecord(id=rec_id, source=source, task=task, anatomy=anatomy,
                      media=media, label=label, measurements=measurements,
                      mask=mask, split=split, provenance=provenance,
                      extensions=extensions)


def validate_record(raw: str,
                    anatomy_vocabulary: Iterable[str] | None = None,
                    require_schema: bool = False) -> DudpRecord:
    """Parse and validate one JSON record.

    Raises ParseError for malformed JSON and SchemaError (with field path and
    rule code) for protocol violations. Unknown top-level keys are preserved
    in the record's extensions map.
    """
    try:
        obj = json.loads(raw, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return record_from_dict(obj, anatomy_vocabulary, require_schema=require_schema)


def media_to_dict(m: MediaRef) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": m.kind, "uri": m.uri}
    if m.frame_count is not None:
        out["frame_count"] = m.frame_count
    if m.width is not None:
        out["width"] = m.width
        out["height"] = m.height
    return out


def media_from_dict(obj: dict[str, Any]) -> MediaRef:
    return MediaRef(kind=obj["kind"], uri=obj["uri"],
                    frame_count=obj.get("frame_count"),
                    width=obj.get("width"), height=obj.get("height"))


def record_to_dict(record: DudpRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "id": record.id,
        "source": {"dataset_name": record.source.dataset_name,
                   "origin_id": record.source.origin_id,
                   "license": record.source.license},
        "task": record.task.value,
        "anatomy": record.anatomy,
        "media": [media_to_dict(m) for m in record.media],
        "split": record.split,
        "provenance": record.provenance,
    }
    if record.label is not None:
        out["label"] = record.label
    if record.measurements:
        out["measurements"] = [{"name": m.name, "value": m.value, "unit": m.unit}
                               for m in record.measurements]
    if record.mask is not None:
        data = list(record.mask.data) if record.mask.format == "rle" else record.mask.data
        out["mask"] = {"format": record.mask.format, "width": record.mask.width,
                       "height": record.mask.height, "data": data}
    out.update(record.extensions)
    return out


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, no insignificant whitespace, shortest
    round-trip float form."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonicalize(record: DudpRecord) -> str:
    """Serialize a valid record to its canonical one-line JSON text."""
    return canonical_json(record_to_dict(record))


def _foreground_sums(mask: MaskRef) -> tuple[int, int, int]:
    """(sum of x, sum of y, count) over foreground pixels of an rle mask."""
    if mask.format != "rle":
        raise DudpError("centroid requires an rle mask; image_ref masks are opaque")
    width = mask.width
    sx = sy = count = 0
    pos = 0
    foreground = False
    for run in mask.data:
        if foreground:
            for idx in range(pos, pos + run):
                sx += idx % width
                sy += idx // width
            count += run
        pos += run
        foreground = not foreground
    if count == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return sx, sy, count


def mask_foreground_centroid(mask: MaskRef) -> tuple[float, float]:
    """Normalized (cx, cy) of the foreground, using pixel centers.

    Only rle masks can be evaluated; image decoding is out of scope.
    """
    sx, sy, count = _foreground_sums(mask)
    cx = (sx / count + 0.5) / mask.width
    cy = (sy / count + 0.5) / mask.height
    return cx, cy


def _band3(numerator: int, denominator: int, low: str, mid: str, high: str) -> str:
    # Exact rational comparison against 1/3 and 2/3 (center band closed), so
    # the banding is bit-stable under integer upscaling of the mask.
    if 3 * numerator < denominator:
        return low
    if 3 * numerator <= 2 * denominator:
        return mid
    return high


def mask_to_region_descriptor(mask: MaskRef, grid: int = 3) -> RegionDescriptor:
    """Map the foreground centroid to a coarse location descriptor.

    grid=3 uses the nine-cell upper/middle/lower x left/center/right grid;
    grid=2 collapses to quadrants (no middle/center cells).
    """
    sx, sy, count = _foreground_sums(mask)
    # Centroid as an exact fraction: ((2*s + count) / (2*dim*count)).
    x_num, x_den = 2 * sx + count, 2 * mask.width * count
    y_num, y_den = 2 * sy + count, 2 * mask.height * count
    if grid == 3:
        return RegionDescriptor(
            vertical=_band3(y_num, y_den, "upper", "middle", "lower"),
            horizontal=_band3(x_num, x_den, "left", "center", "right"))
    if grid == 2:
        return RegionDescriptor(vertical="upper" if 2 * y_num <= y_den else "lower",
                                horizontal="left" if 2 * x_num <= x_den else "right")
    raise ValueError(f"unsupported grid resolution {grid}")


def _unit_interval_hash(key: str) -> float:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def partition_splits(records: list[DudpRecord],
                     ratios: dict[str, float],
                     seed: int) -> list[DudpRecord]:
    """Assign splits deterministically by hashing (id, seed).

    The assignment is a pure function of (id, seed, ratios): the same record
    id always lands in the same split regardless of corpus order or sharding.
    """
    if not records:
        raise ValueError("records must be nonempty")
    fractions = [float(ratios.get(name, 0.0)) for name in SPLITS]
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise BadRatiosError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    out = []
    for record in records:
        u = _unit_interval_hash(f"{seed}:{record.id}")
        acc = 0.0
        chosen = SPLITS[-1]
        for name, frac in zip(SPLITS, fractions):
            acc += frac
            if u < acc:
                chosen = name
                break
        out.append(replace(record, split=chosen))
    return out


def format_quantity(value: float, unit: str) -> str:
    """Render a measurement as text, e.g. 5.2 -> "5.2 mm", 5.0 -> "5 mm"."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return f"{text} {unit}"


def gold_label(record: DudpRecord) -> str | None:
    """The deterministic answer target for a record, or None if underivable
    (image_ref segmentation masks are opaque)."""
    if record.task in _LABEL_KEYS:
        return record.label[_LABEL_KEYS[record.task]]  # type: ignore[index]
    if record.task is TaskCategory.BIOMETRIC_MEASUREMENT:
        primary = record.measurements[0]
        if record.label and isinstance(record.label.get("primary"), str):
            for m in record.measurements:
                if m.name == record.label["primary"]:
                    primary = m
                    break
        return format_quantity(primary.value, primary.unit)
    # tissue_segmentation
    if record.mask is not None and record.mask.format == "rle":
        try:
            return str(mask_to_region_descriptor(record.mask))
        except EmptyMaskError:
            return None
    if record.label and isinstance(record.label.get("structure"), str):
        return record.label["structure"]
    return None


def read_corpus(path: str,
                anatomy_vocabulary: Iterable[str] | None = None) -> Iterator[DudpRecord]:
    """Iterate validated records from a JSONL corpus file.

    Enforces the schema version field and id uniqueness within the file.
    """
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = validate_record(line, anatomy_vocabulary, require_schema=True)
            except ParseError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from exc
            except SchemaError as exc:
                raise SchemaError(exc.field_path, exc.code,
                                  f"{path}:{line_no}: invalid record") from exc
            if record.id in seen:
                raise SchemaError("id", "duplicate_id",
                                  f"{path}:{line_no}: duplicate record id {record.id!r}")
            seen.add(record.id)
            yield record


def write_corpus(records: Iterable[DudpRecord], path: str) -> int:
    """Write records as canonical JSONL; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(canonicalize(record) + "\n")
            count += 1
    return count

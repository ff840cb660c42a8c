"""Raw-source ingestion: textbook markdown and public-dataset layouts.

Textbook books arrive as markdown plus an asset map; they are scrubbed of
front/back matter, chunked for QA generation, and mined for image-caption
pairs. Public datasets are converted through per-dataset adapter configs
into protocol records; per-sample failures go to an error report instead of
aborting the run.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator

from .records import (DudpRecord, MaskRef, Measurement, MediaRef, SchemaError,
                      SourceInfo, TaskCategory, record_from_dict)


class IngestError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class TextbookDoc:
    doc_id: str
    markdown: str
    image_assets: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    chunk_index: int
    text: str
    heading_path: tuple[str, ...] = ()


@dataclass(frozen=True)
class CaptionPair:
    images: tuple[MediaRef, ...]
    caption: str
    doc_id: str
    locator: tuple[int, int]  # character span in the scrubbed source


@dataclass(frozen=True)
class UnmatchedImage:
    doc_id: str
    asset_key: str
    locator: tuple[int, int]
    reason: str


@dataclass(frozen=True)
class ScrubRules:
    """Patterns identifying non-substantive content.

    heading_patterns drop whole sections, block_patterns drop the enclosing
    paragraph, line_patterns drop single lines (page-margin artifacts).
    exclusion_lines is the manual-override list: exact lines to drop.
    """
    heading_patterns: tuple[str, ...] = (
        r"^(front |back )?cover$", r"^copyright", r"^index$",
        r"^(table of )?contents$", r"^acknowledg", r"^dedication$",
        r"^about the (authors?|publisher)$", r"^list of (figures|tables)$",
    )
    block_patterns: tuple[str, ...] = (
        r"copyright ©", r"all rights reserved", r"\bISBN[- ]?1?[03]?:?\s*[\d-]+",
    )
    line_patterns: tuple[str, ...] = (
        r"^\s*\d{1,4}\s*$",                      # bare page numbers
        r"^\s*page \d+( of \d+)?\s*$",
        r"^\s*-{0,2}\s*\d+\s*-{0,2}\s*$",        # decorated page numbers
    )
    exclusion_lines: frozenset[str] = frozenset()

    @staticmethod
    def with_exclusion_file(path: str) -> "ScrubRules":
        lines = frozenset(
            line.rstrip("\n") for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
        return ScrubRules(exclusion_lines=lines)


_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_IMAGE_RE = re.compile(r"!\[[^\]]*\]\(([^)\s]+)\)")
DEFAULT_CAPTION_PATTERN = r"^(Figure|Fig\.?)\s*[\d.]+[:.]?\s*"


def validate_doc(doc: TextbookDoc) -> None:
    """Check the doc invariants: nonempty body, resolvable image references."""
    if not doc.markdown.strip():
        raise IngestError("empty_doc", f"{doc.doc_id}: markdown body is empty")
    for match in _IMAGE_RE.finditer(doc.markdown):
        key = match.group(1)
        if key not in doc.image_assets:
            raise IngestError("unresolved_asset",
                              f"{doc.doc_id}: image reference {key!r} has no asset")


def scrub_nonsubstantive(doc: TextbookDoc, rules: ScrubRules | None = None) -> TextbookDoc:
    """Drop front/back-matter sections and page-margin artifacts.

    Kept lines are byte-identical to the input; removal is line-granular so
    fixtures can diff exactly what was dropped.
    """
    rules = rules or ScrubRules()
    heading_res = [re.compile(p, re.IGNORECASE) for p in rules.heading_patterns]
    block_res = [re.compile(p, re.IGNORECASE) for p in rules.block_patterns]
    line_res = [re.compile(p, re.IGNORECASE) for p in rules.line_patterns]

    lines = doc.markdown.splitlines(keepends=True)
    stripped = [line.rstrip("\n") for line in lines]
    drop = [False] * len(lines)

    # Whole sections whose heading matches (until the next heading of the
    # same or higher level).
    i = 0
    while i < len(lines):
        match = _HEADING_RE.match(stripped[i])
        if match and any(r.search(match.group(2)) for r in heading_res):
            level = len(match.group(1))
            drop[i] = True
            j = i + 1
            while j < len(lines):
                nxt = _HEADING_RE.match(stripped[j])
                if nxt and len(nxt.group(1)) <= level:
                    break
                drop[j] = True
                j += 1
            i = j
        else:
            i += 1

    # Paragraph blocks containing a block pattern.
    i = 0
    while i < len(lines):
        if not drop[i] and stripped[i].strip() and any(r.search(stripped[i]) for r in block_res):
            start = i
            while start > 0 and stripped[start - 1].strip() and not drop[start - 1]:
                start -= 1
            end = i
            while end + 1 < len(lines) and stripped[end + 1].strip():
                end += 1
            for k in range(start, end + 1):
                drop[k] = True
            i = end + 1
        else:
            i += 1

    # Single margin-artifact lines and manual exclusions.
    for i, text in enumerate(stripped):
        if drop[i]:
            continue
        if text in rules.exclusion_lines or any(r.match(text) for r in line_res):
            drop[i] = True

    kept = "".join(line for line, gone in zip(lines, drop) if not gone)
    if not kept.strip():
        raise IngestError("empty_after_scrub", f"{doc.doc_id}: nothing substantive left")
    return replace(doc, markdown=kept)


def _split_keep(text: str, pattern: re.Pattern) -> list[str]:
    """Split text at pattern boundaries; pieces concatenate back exactly."""
    pieces, last = [], 0
    for match in pattern.finditer(text):
        end = match.end()
        pieces.append(text[last:end])
        last = end
    if last < len(text):
        pieces.append(text[last:])
    return [p for p in pieces if p]


_PARA_BOUNDARY = re.compile(r"\n{2,}")
_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?;:])\s+")


def _hard_slices(text: str, max_chars: int) -> list[str]:
    return [text[i:i + max_chars] for i in range(0, len(text), max_chars)]


def _atoms_for_segment(segment: str, max_chars: int) -> list[str]:
    if len(segment) <= max_chars:
        return [segment]
    atoms: list[str] = []
    for para in _split_keep(segment, _PARA_BOUNDARY):
        if len(para) <= max_chars:
            atoms.append(para)
            continue
        for sentence in _split_keep(para, _SENTENCE_BOUNDARY):
            if len(sentence) <= max_chars:
                atoms.append(sentence)
            else:
                atoms.extend(_hard_slices(sentence, max_chars))
    return atoms


def chunk_markdown(doc: TextbookDoc, max_chars: int = 2048,
                   heading_split_level: int = 2) -> list[Chunk]:
    """Segment a document into chunks of at most max_chars characters.

    Splits at heading boundaries first (headings of level <= the configured
    split level always start a new chunk), then paragraph and sentence
    boundaries; a sentence longer than max_chars is hard-sliced. The chunks
    exactly cover the text: joining them in index order reproduces it.
    """
    if max_chars < 64:
        raise ValueError("max_chars must be at least 64")
    text = doc.markdown

    # Segment at qualifying headings, tracking the heading stack for each.
    segments: list[tuple[str, tuple[str, ...]]] = []
    stack: list[tuple[int, str]] = []
    current_start = 0
    current_path: tuple[str, ...] = ()
    offset = 0
    for line in text.splitlines(keepends=True):
        match = _HEADING_RE.match(line.rstrip("\n"))
        if match:
            level, title = len(match.group(1)), match.group(2)
            if level <= heading_split_level and offset > current_start:
                segments.append((text[current_start:offset], current_path))
                current_start = offset
            stack = [(lv, t) for lv, t in stack if lv < level] + [(level, title)]
            if level <= heading_split_level:
                current_path = tuple(t for _, t in stack)
        offset += len(line)
    if offset > current_start or not segments:
        segments.append((text[current_start:], current_path))

    chunks: list[Chunk] = []
    for segment, path in segments:
        atoms = _atoms_for_segment(segment, max_chars)
        buffer = ""
        for atom in atoms:
            if buffer and len(buffer) + len(atom) > max_chars:
                chunks.append(Chunk(doc.doc_id, len(chunks), buffer, path))
                buffer = atom
            else:
                buffer += atom
        if buffer:
            chunks.append(Chunk(doc.doc_id, len(chunks), buffer, path))
    return chunks


def extract_caption_pairs(doc: TextbookDoc,
                          caption_pattern: str = DEFAULT_CAPTION_PATTERN,
                          ) -> tuple[list[CaptionPair], list[UnmatchedImage]]:
    """Pair figure blocks (runs of consecutive image references) with their
    adjacent caption line. Caption-less figures are reported, not fatal."""
    caption_re = re.compile(caption_pattern, re.IGNORECASE)
    lines = doc.markdown.splitlines(keepends=True)
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line))

    def line_images(i: int) -> list[tuple[str, int, int]]:
        return [(m.group(1), offsets[i] + m.start(), offsets[i] + m.end())
                for m in _IMAGE_RE.finditer(lines[i])]

    pairs: list[CaptionPair] = []
    unmatched: list[UnmatchedImage] = []
    i = 0
    while i < len(lines):
        images = line_images(i)
        if not images:
            i += 1
            continue
        block_start_line = i
        while i + 1 < len(lines) and line_images(i + 1):
            i += 1
            images.extend(line_images(i))
        block_span = (images[0][1], images[-1][2])

        # Prefer the caption line after the block, then the line before it.
        caption: str | None = None
        caption_end = block_span[1]
        next_i = i + 1
        j = i + 1
        while j < len(lines) and not lines[j].strip():
            j += 1
        if j < len(lines) and caption_re.match(lines[j].strip()):
            caption = caption_re.sub("", lines[j].strip(), count=1).strip()
            caption_end = offsets[j] + len(lines[j].rstrip("\n"))
            next_i = j + 1
        else:
            k = block_start_line - 1
            while k >= 0 and not lines[k].strip():
                k -= 1
            if k >= 0 and not line_images(k) and caption_re.match(lines[k].strip()):
                caption = caption_re.sub("", lines[k].strip(), count=1).strip()

        media = tuple(MediaRef(kind="image", uri=doc.image_assets.get(key, key))
                      for key, _, _ in images)
        if caption:
            pairs.append(CaptionPair(images=media, caption=caption, doc_id=doc.doc_id,
                                     locator=(block_span[0], caption_end)))
        else:
            for key, start, end in images:
                unmatched.append(UnmatchedImage(doc_id=doc.doc_id, asset_key=key,
                                                locator=(start, end), reason="no_caption"))
        i = next_i
    return pairs, unmatched


@dataclass(frozen=True)
class AdapterConfig:
    """Dataset-specific conversion settings.

    path_patterns uses keys "media" (required glob), optional
    "annotation_suffix" (default ".json") and "mask_suffix"
    (default "_mask.json") resolved against each media file's stem.
    """
    dataset_name: str
    task: TaskCategory
    anatomy: str
    label_map: dict[str, str] = field(default_factory=dict)
    path_patterns: dict[str, str] = field(default_factory=lambda: {"media": "**/*.png"})
    unit_map: dict[str, str] = field(default_factory=dict)
    license: str = "unknown"
    decimal_comma: bool = True
    label_set: tuple[str, ...] = ()

    @staticmethod
    def from_dict(obj: dict[str, Any]) -> "AdapterConfig":
        obj = dict(obj)
        obj["task"] = TaskCategory(obj["task"])
        if "label_set" in obj:
            obj["label_set"] = tuple(obj["label_set"])
        return AdapterConfig(**obj)


@dataclass(frozen=True)
class SampleError:
    source_path: str
    code: str
    message: str


_VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}

_CLASSIFICATION_TASKS = (TaskCategory.DIAGNOSTIC_CLASSIFICATION,
                         TaskCategory.STANDARD_VIEW,
                         TaskCategory.ANATOMICAL_RECOGNITION)


def parse_decimal(raw: Any, decimal_comma: bool = True) -> float:
    """Parse a number that may use a decimal comma ("5,2" -> 5.2)."""
    if isinstance(raw, bool):
        raise ValueError(f"not a number: {raw!r}")
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw).strip()
    if decimal_comma and "," in text and "." not in text:
        text = text.replace(",", ".")
    return float(text)


def _record_id(dataset_name: str, rel_path: str) -> str:
    digest = hashlib.sha256(rel_path.encode("utf-8")).hexdigest()[:10]
    return f"{dataset_name}-{digest}"


def _load_sidecar(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))


def _convert_sample(config: AdapterConfig, root: Path, media_path: Path) -> DudpRecord:
    rel = media_path.relative_to(root).as_posix()
    kind = "video" if media_path.suffix.lower() in _VIDEO_SUFFIXES else "image"

    obj: dict[str, Any] = {
        "id": _record_id(config.dataset_name, rel),
        "source": {"dataset_name": config.dataset_name, "origin_id": rel,
                   "license": config.license},
        "task": config.task.value,
        "anatomy": config.anatomy,
        "media": [{"kind": kind, "uri": rel}],
        "provenance": "public",
    }

    if config.task in _CLASSIFICATION_TASKS:
        raw_label = media_path.parent.name if media_path.parent != root else ""
        if raw_label not in config.label_map:
            raise IngestError("unmapped_label", f"no label mapping for {raw_label!r}")
        canonical = config.label_map[raw_label]
        if config.label_set and canonical not in config.label_set:
            raise IngestError("label_not_in_set",
                              f"{canonical!r} missing from the declared label set")
        key = {"diagnostic_classification": "class", "standard_view": "view",
               "anatomical_recognition": "organ"}[config.task.value]
        obj["label"] = {key: canonical}
        if config.task is TaskCategory.DIAGNOSTIC_CLASSIFICATION and config.label_set:
            obj["label"]["label_set"] = list(config.label_set)

    elif config.task is TaskCategory.BIOMETRIC_MEASUREMENT:
        suffix = config.path_patterns.get("annotation_suffix", ".json")
        ann_path = media_path.with_suffix(suffix)
        if not ann_path.exists():
            raise IngestError("missing_annotation", f"no sidecar {ann_path.name}")
        try:
            sidecar = _load_sidecar(ann_path)
            raw_measurements = sidecar["measurements"]
            measurements = []
            for m in raw_measurements:
                unit = str(m["unit"]).strip()
                unit = config.unit_map.get(unit, unit)
                measurements.append({
                    "name": str(m["name"]),
                    "value": parse_decimal(m["value"], config.decimal_comma),
                    "unit": unit,
                })
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise IngestError("bad_annotation", str(exc)) from exc
        if not measurements:
            raise IngestError("bad_annotation", "measurements list is empty")
        obj["measurements"] = measurements

    elif config.task is TaskCategory.TISSUE_SEGMENTATION:
        suffix = config.path_patterns.get("mask_suffix", "_mask.json")
        mask_path = media_path.with_name(media_path.stem + suffix)
        if not mask_path.exists():
            raise IngestError("missing_mask", f"no mask sidecar {mask_path.name}")
        try:
            sidecar = _load_sidecar(mask_path)
            fmt = sidecar.get("format", "rle")
            data = sidecar["counts"] if fmt == "rle" else sidecar["uri"]
            obj["mask"] = {"format": fmt, "width": sidecar["width"],
                           "height": sidecar["height"], "data": data}
            if isinstance(sidecar.get("structure"), str):
                obj["label"] = {"structure": sidecar["structure"]}
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise IngestError("bad_mask", str(exc)) from exc

    try:
        return record_from_dict(obj)
    except SchemaError as exc:
        raise IngestError("invalid_record", str(exc)) from exc


def ingest_dataset(config: AdapterConfig, root: str | Path,
                   errors: list[SampleError] | None = None) -> Iterator[DudpRecord]:
    """Yield validated records for every media file matching the adapter.

    Per-sample conversion failures are appended to `errors` (when given)
    rather than raised; emitted + failed always equals matched. Output order
    is sorted by source path, so runs are deterministic under any worker
    count.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError("no_samples_matched", f"root {root} does not exist")
    pattern = config.path_patterns.get("media", "**/*.png")
    mask_suffix = config.path_patterns.get("mask_suffix", "_mask.json")
    media_paths = sorted(p for p in root.glob(pattern)
                         if p.is_file() and not p.name.endswith(mask_suffix))
    if not media_paths:
        raise IngestError("no_samples_matched", f"pattern {pattern!r} matched nothing")
    for media_path in media_paths:
        try:
            yield _convert_sample(config, root, media_path)
        except IngestError as exc:
            if errors is None:
                raise
            errors.append(SampleError(source_path=str(media_path.relative_to(root)),
                                      code=exc.code, message=str(exc)))


def write_error_report(errors: list[SampleError], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for err in errors:
            handle.write(json.dumps({"source_path": err.source_path, "code": err.code,
                                     "message": err.message}, ensure_ascii=False) + "\n")

"""Burned-in text redaction driven by OCR word boxes.

OCR itself is outside the package: words arrive through a JSON sidecar next to
each image (``IMG.dcm`` -> ``IMG.ocr.json``). Words whose text trips a scrub
recognizer are painted over with a flat fill.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .dicom import DicomFile, PixelMatrix, get_pixels, put_pixels
from .scrub import Recognizer, scrub_value

log = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".ocr.json"
LINE_OVERLAP = 0.5
_FIELDS = ("text", "x0", "y0", "x1", "y1")


class MalformedSidecar(ValueError):
    pass


@dataclass(frozen=True)
class OcrWord:
    text: str
    x0: int
    y0: int
    x1: int
    y1: int
    frame: int | None = None  # None means every frame

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class RedactionBox:
    x0: int
    y0: int
    x1: int
    y1: int
    reason: str = ""
    frame: int | None = None

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


def sidecar_path(image_path: str | Path) -> Path:
    p = Path(image_path)
    return p.with_name(p.stem + SIDECAR_SUFFIX) if p.suffix else p.with_name(p.name + SIDECAR_SUFFIX)


def is_sidecar(path: str | Path) -> bool:
    return str(path).endswith(SIDECAR_SUFFIX)


def _parse_word(obj, where: str) -> OcrWord:
    if not isinstance(obj, dict) or any(k not in obj for k in _FIELDS):
        raise MalformedSidecar(f"{where}: needs fields {', '.join(_FIELDS)}")
    text = obj["text"]
    coords = [obj[k] for k in _FIELDS[1:]]
    if not isinstance(text, str) or not all(isinstance(c, int) and not isinstance(c, bool) for c in coords):
        raise MalformedSidecar(f"{where}: text must be a string and coordinates integers")
    x0, y0, x1, y1 = coords
    if x0 < 0 or y0 < 0 or x1 <= x0 or y1 <= y0:
        raise MalformedSidecar(f"{where}: degenerate box {coords}")
    frame = obj.get("frame", "*")
    if frame == "*":
        frame = None
    elif not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
        raise MalformedSidecar(f"{where}: frame must be a non-negative integer or '*'")
    return OcrWord(text, x0, y0, x1, y1, frame)


def ocr_adapter_load(path: str | Path) -> list[OcrWord]:
    """Words from a sidecar file; a missing sidecar means a text-free image."""
    path = Path(path)
    if not path.exists():
        return []
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedSidecar(f"{path}: {exc}") from None
    if not isinstance(data, list):
        raise MalformedSidecar(f"{path}: top level must be a list")
    return [_parse_word(obj, f"{path}[{i}]") for i, obj in enumerate(data)]


def save_sidecar(words: Iterable[OcrWord], path: str | Path) -> None:
    rows = [{"text": w.text, "x0": w.x0, "y0": w.y0, "x1": w.x1, "y1": w.y1,
             "frame": "*" if w.frame is None else w.frame} for w in words]
    Path(path).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")


def _same_line(a: OcrWord, b: OcrWord) -> bool:
    overlap = min(a.y1, b.y1) - max(a.y0, b.y0)
    return overlap >= LINE_OVERLAP * min(a.y1 - a.y0, b.y1 - b.y0)


def group_lines(words: Sequence[OcrWord]) -> list[list[OcrWord]]:
    """Group words into lines (same frame, vertical overlap of at least half
    the shorter word), each sorted left to right."""
    lines: list[list[OcrWord]] = []
    for w in sorted(words, key=lambda w: (w.frame is not None, w.frame or 0, w.y0, w.x0)):
        for line in lines:
            if line[0].frame == w.frame and _same_line(line[0], w):
                line.append(w)
                break
        else:
            lines.append([w])
    for line in lines:
        line.sort(key=lambda w: (w.x0, w.y0))
    return lines


def _selected(line: list[OcrWord], recognizers, context) -> list[str]:
    """Reason per word ('' when the word is not sensitive)."""
    reasons = []
    for w in line:
        spans = scrub_value(recognizers, w.text, context).spans
        reasons.append("+".join(sorted({s.recognizer for s in spans})))
    joined, starts = "", []
    for w in line:
        if joined:
            joined += " "
        starts.append(len(joined))
        joined += w.text
    for span in scrub_value(recognizers, joined, context).spans:
        for i, w in enumerate(line):
            s, e = starts[i], starts[i] + len(w.text)
            if span.start < e and s < span.end and not reasons[i]:
                reasons[i] = span.recognizer
    return reasons


def detect_sensitive_boxes(words: Sequence[OcrWord], recognizers: Sequence[Recognizer],
                           patient_context: Iterable[str] = ()) -> list[RedactionBox]:
    context = list(patient_context)
    boxes = []
    for line in group_lines(words):
        reasons = _selected(line, recognizers, context)
        run: list[int] = []
        for i in range(len(line) + 1):
            if i < len(line) and reasons[i]:
                run.append(i)
                continue
            if run:
                ws = [line[j] for j in run]
                names = sorted({n for j in run for n in reasons[j].split("+")})
                boxes.append(RedactionBox(min(w.x0 for w in ws), min(w.y0 for w in ws),
                                          max(w.x1 for w in ws), max(w.y1 for w in ws),
                                          "+".join(names), ws[0].frame))
                run = []
    return boxes


def _fill_for(matrix: PixelMatrix, fill) -> list[int]:
    spp = matrix.samples_per_pixel
    if fill is None:
        values = [0] * spp
    elif isinstance(fill, int):
        values = [fill] * spp
    else:
        values = list(fill)
        if len(values) == 1:
            values *= spp
        if len(values) != spp:
            raise ValueError(f"fill has {len(values)} samples, image has {spp}")
    top = (1 << matrix.bits_allocated) - 1
    if any(not 0 <= v <= top for v in values):
        raise ValueError(f"fill {values} outside 0..{top}")
    return values


def mask_boxes(matrix: PixelMatrix, boxes: Iterable[RedactionBox], fill=None) -> PixelMatrix:
    """Copy of ``matrix`` with every box (half-open) painted with ``fill``."""
    out = matrix.copy()
    values = _fill_for(out, fill)
    arr = out.array()
    for b in boxes:
        x0, y0 = max(b.x0, 0), max(b.y0, 0)
        x1, y1 = min(b.x1, matrix.columns), min(b.y1, matrix.rows)
        if (x0, y0, x1, y1) != b.box:
            log.warning("box %s clipped to image %dx%d", b.box, matrix.columns, matrix.rows)
        if x1 <= x0 or y1 <= y0:
            continue
        if b.frame is None:
            frames = slice(None)
        elif b.frame < matrix.number_of_frames:
            frames = slice(b.frame, b.frame + 1)
        else:
            log.warning("box %s names frame %d of a %d-frame image", b.box, b.frame,
                        matrix.number_of_frames)
            continue
        arr[frames, y0:y1, x0:x1, :] = values
    return out


def redact_file(f: DicomFile, words: Sequence[OcrWord], recognizers: Sequence[Recognizer],
                patient_context: Iterable[str] = (), fill=None) -> list[RedactionBox]:
    """Detect and paint sensitive words in place; returns the boxes applied."""
    if not words:
        return []
    matrix = get_pixels(f)
    if matrix is None:
        return []
    boxes = detect_sensitive_boxes(words, recognizers, patient_context)
    if boxes:
        put_pixels(f, mask_boxes(matrix, boxes, fill))
    return boxes

"""Two-pass corpus de-identification.

Pass 1 redacts burned-in pixel text for every file and collects patient IDs.
Once it finishes, patient surrogates and date offsets are fixed, and pass 2
rewrites metadata and writes the output tree.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from collections import Counter
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dicom import CompressedPixelData, parse_file, write_file
from .engine import ActionLog, apply_rules, patient_context, patient_id_of
from .pseudonym import (
    DateShiftTable,
    PatientIdMap,
    PseudonymContext,
    UidMap,
    build_shift_table,
    load_mapping,
    load_offsets,
    save_mapping,
    save_offsets,
)
from .redact import OcrWord, is_sidecar, ocr_adapter_load, redact_file, sidecar_path
from .ruleset import Ruleset
from .scrub import Recognizer, load_lists

log = logging.getLogger(__name__)

PATIENT_MAPPING = "patient_id_mapping.csv"
UID_MAPPING = "uid_mapping.csv"
DATE_OFFSETS = "date_offsets.csv"
ACTION_LOG = "action_log.csv"
SUMMARY = "summary.json"
# files that live next to a corpus but are never DICOM
SKIP_NAMES = frozenset({PATIENT_MAPPING, UID_MAPPING, DATE_OFFSETS, ACTION_LOG, SUMMARY,
                        "answer_key.csv", "spec.lock"})
SKIP_SUFFIXES = (".csv", ".json", ".lock", ".txt", ".md", ".toml")

OcrSource = Callable[[Path], Sequence[OcrWord]]


def sidecar_ocr(path: Path) -> list[OcrWord]:
    return ocr_adapter_load(sidecar_path(path))


@dataclass
class CorpusSummary:
    files: int = 0
    elements: int = 0
    patients: int = 0
    codes: dict[str, int] = field(default_factory=dict)
    redacted_boxes: int = 0
    diagnostics: int = 0
    failed: list[dict[str, str]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


@dataclass
class _Staged:
    rel: Path
    patient_old: str
    staged: Path | None = None  # redacted copy, when pass 1 changed pixels
    boxes: int = 0


def discover(in_dir: Path) -> list[Path]:
    """Candidate DICOM files under ``in_dir`` as sorted relative paths."""
    found = []
    for root, dirs, files in os.walk(in_dir):
        dirs.sort()
        for name in files:
            if name in SKIP_NAMES or is_sidecar(name) or name.lower().endswith(SKIP_SUFFIXES):
                continue
            found.append((Path(root) / name).relative_to(in_dir))
    return sorted(found)


def _patient_folder_id(rel: Path) -> str:
    return rel.parts[0] if len(rel.parts) > 1 else rel.stem


def output_path(rel: Path, patient_old: str, patient_new: str) -> Path:
    """Mirror ``rel``, substituting the patient ID in the top folder name."""
    if len(rel.parts) < 2:
        return rel
    top = rel.parts[0]
    top = top.replace(patient_old, patient_new) if patient_old and patient_old in top else patient_new
    return Path(top, *rel.parts[1:])


def _load_existing(mappings_dir: Path | None) -> tuple[PatientIdMap, UidMap, DateShiftTable | None]:
    if mappings_dir is None:
        return PatientIdMap(), UidMap(), None
    patients, uids, offsets = PatientIdMap(), UidMap(), None
    if (mappings_dir / PATIENT_MAPPING).exists():
        patients = load_mapping(mappings_dir / PATIENT_MAPPING, PatientIdMap)
    if (mappings_dir / UID_MAPPING).exists():
        uids = load_mapping(mappings_dir / UID_MAPPING, UidMap)
    if (mappings_dir / DATE_OFFSETS).exists():
        offsets = load_offsets(mappings_dir / DATE_OFFSETS)
    return patients, uids, offsets


def run_pipeline(in_dir: str | Path, out_dir: str | Path, ruleset: Ruleset,
                 ocr_source: OcrSource | None = None, seed: int = 0, *,
                 recognizers: Sequence[Recognizer] | None = None, workers: int | None = None,
                 strict: bool = False, fill=None, mappings_dir: str | Path | None = None,
                 uid_root: str | None = None) -> CorpusSummary:
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    ocr_source = ocr_source or sidecar_ocr
    recognizers = list(recognizers) if recognizers is not None else load_lists()
    workers = workers or os.cpu_count() or 1
    summary = CorpusSummary()
    failed: dict[Path, str] = {}
    rels = discover(in_dir)

    staging = Path(tempfile.mkdtemp(prefix="deid-pass1-"))
    try:
        def pass1(rel: Path) -> _Staged | None:
            src = in_dir / rel
            try:
                f = parse_file(src.read_bytes(), strict=strict)
                for w in f.warnings:
                    log.warning("%s: %s", rel, w)
                old = patient_id_of(f.dataset) or _patient_folder_id(rel)
                item = _Staged(rel, old)
                words = ocr_source(src)
                if words:
                    try:
                        boxes = redact_file(f, words, recognizers, patient_context(f.dataset), fill)
                    except CompressedPixelData:
                        raise CompressedPixelData("burned-in text on compressed pixel data "
                                                  "cannot be redacted") from None
                    if boxes:
                        item.boxes = len(boxes)
                        item.staged = staging / rel
                        item.staged.parent.mkdir(parents=True, exist_ok=True)
                        item.staged.write_bytes(write_file(f, strict=strict))
                return item
            except Exception as exc:  # quarantine, keep going
                log.error("%s: %s", rel, exc)
                failed[rel] = f"{type(exc).__name__}: {exc}"
                return None

        with ThreadPoolExecutor(max_workers=workers) as pool:
            staged = [s for s in pool.map(pass1, rels) if s is not None]

        # barrier: surrogate IDs and offsets are fixed before any metadata changes
        patients, uids, offsets = _load_existing(Path(mappings_dir) if mappings_dir else None)
        for old in sorted({s.patient_old for s in staged}):
            patients.assign(old)
        shift = build_shift_table([patients.get(s.patient_old) for s in staged], seed, offsets)
        ctx = PseudonymContext(patients, uids, shift, uid_root or ruleset.uid_root_template)

        def pass2(item: _Staged) -> ActionLog | None:
            try:
                src = item.staged or in_dir / item.rel
                f = parse_file(src.read_bytes(), strict=strict)
                action_log = apply_rules(f, ruleset, ctx, recognizers, file_id=item.rel.as_posix(),
                                         patient_old_id=item.patient_old)
                dest = out_dir / output_path(item.rel, item.patient_old,
                                             patients.get(item.patient_old))
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(write_file(f, strict=strict))
                return action_log
            except Exception as exc:
                log.error("%s: %s", item.rel, exc)
                failed[item.rel] = f"{type(exc).__name__}: {exc}"
                return None

        with ThreadPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(pass2, staged))
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    full = ActionLog()
    done = 0
    for item, action_log in zip(staged, logs):
        if action_log is not None:
            full.extend(action_log)
            done += 1
            summary.redacted_boxes += item.boxes

    save_mapping(patients, out_dir / PATIENT_MAPPING)
    save_mapping(uids, out_dir / UID_MAPPING)
    save_offsets(shift, out_dir / DATE_OFFSETS)
    full.write_csv(out_dir / ACTION_LOG)

    summary.files = done
    summary.elements = len(full)
    summary.patients = len({s.patient_old for s in staged})
    summary.codes = dict(sorted(Counter(e.code for e in full.entries).items()))
    summary.diagnostics = len(full.diagnostics)
    summary.failed = [{"file": rel.as_posix(), "error": err} for rel, err in sorted(failed.items())]
    (out_dir / SUMMARY).write_text(summary.to_json(), encoding="utf-8")
    return summary

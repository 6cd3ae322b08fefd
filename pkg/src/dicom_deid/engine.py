"""Apply a ruleset to one file and record what happened to every element."""

from __future__ import annotations

import csv
import hashlib
import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .dicom import DataElement, DataSet, DicomFile, Tag, format_locus, iter_elements
from .dicom.errors import DicomError
from .pseudonym import PseudonymContext, PseudonymError, hash_uid, shift_value
from .ruleset import ActionCode, Ruleset
from .scrub import Recognizer, scrub_value

log = logging.getLogger(__name__)

LOG_HEADER = ["file", "path", "tag", "code", "old_digest", "new_digest"]
PATIENT_ID = Tag(0x0010, 0x0020)
PATIENT_NAME = Tag(0x0010, 0x0010)
# identifiers of the patient that free text must not repeat
CONTEXT_TAGS = (PATIENT_ID, PATIENT_NAME, Tag(0x0010, 0x1000), Tag(0x0010, 0x1001),
                Tag(0x0010, 0x1005), Tag(0x0010, 0x1060), Tag(0x0008, 0x0050))


def digest(value: bytes) -> str:
    return hashlib.sha256(value).hexdigest()[:16]


def element_digest(el: DataElement | None) -> str:
    if el is None:
        return ""
    if el.items is not None:
        return digest(f"SQ:{len(el.items)}".encode())
    return digest(el.value)


@dataclass
class LogEntry:
    file: str
    path: str
    tag: str
    code: str
    old_digest: str
    new_digest: str
    detail: str = ""

    def row(self) -> list[str]:
        return [self.file, self.path, self.tag, self.code, self.old_digest, self.new_digest]


@dataclass
class ActionLog:
    entries: list[LogEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def extend(self, other: ActionLog) -> None:
        self.entries.extend(other.entries)

    def tallies(self) -> dict[str, int]:
        return dict(sorted(Counter(e.code for e in self.entries).items()))

    @property
    def diagnostics(self) -> list[LogEntry]:
        return [e for e in self.entries if e.detail]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_HEADER)
            writer.writerows(e.row() for e in self.entries)


def patient_id_of(ds: DataSet) -> str:
    el = ds.get(PATIENT_ID)
    return el.text.strip(" \x00") if el is not None and el.is_text else ""


def patient_context(ds: DataSet) -> list[str]:
    """Identifying values of the file's patient, for context-aware scrubbing."""
    values = []
    for tag in CONTEXT_TAGS:
        el = ds.get(tag)
        if el is not None and el.is_text and el.value:
            values += [v for v in el.text.strip(" \x00").split("\\") if v]
    return values


class _Applier:
    def __init__(self, file_id: str, ruleset: Ruleset, ctx: PseudonymContext,
                 recognizers: Sequence[Recognizer], patient_new: str | None, context: list[str]):
        self.file_id = file_id
        self.ruleset = ruleset
        self.ctx = ctx
        self.recognizers = recognizers
        self.patient_new = patient_new
        self.context = context
        self.log = ActionLog()

    def record(self, path, el: DataElement, code, old: str, detail: str = "") -> None:
        new = "" if code is ActionCode.REMOVE else element_digest(el)
        self.log.entries.append(LogEntry(self.file_id, format_locus(path, el.tag), str(el.tag),
                                         str(code), old, new, detail))

    def dropped(self, path, el: DataElement) -> None:
        """Log every descendant of a removed or zeroed sequence as removed."""
        for i, item in enumerate(el.items or ()):
            for sub_path, child, _ in iter_elements(item, path + ((el.tag, i),)):
                self.log.entries.append(LogEntry(self.file_id, format_locus(sub_path, child.tag),
                                                 str(child.tag), str(ActionCode.REMOVE),
                                                 element_digest(child), ""))

    def transform(self, el: DataElement, code: ActionCode) -> None:
        """Rewrite ``el`` in place; raises on values the action cannot handle."""
        if code is ActionCode.ZERO:
            el.value = b""
            return
        if not el.is_text:
            raise DicomError(f"{code} needs a text VR, element has {el.vr}")
        if code is ActionCode.LOOKUP_PATIENT:
            if not self.patient_new:
                raise PseudonymError("no mapped patient ID for this file")
            el.set_text(self.patient_new)
        elif code is ActionCode.HASH_UID:
            if not self.patient_new:
                raise PseudonymError("no mapped patient ID for this file")
            text = el.text.strip(" \x00")
            if text:
                el.set_text("\\".join(hash_uid(self.ctx, self.patient_new, u)
                                      for u in text.split("\\")))
        elif code is ActionCode.INCREMENT_DATE:
            if not self.patient_new:
                raise PseudonymError("no mapped patient ID for this file")
            text = el.text
            if text.strip(" \x00"):
                days = self.ctx.shift_table.offset_for(self.patient_new)
                el.set_text(shift_value(text.strip(" \x00"), days, el.vr))
        elif code is ActionCode.CLEAN_TEXT:
            text = el.text
            result = scrub_value(self.recognizers, text, self.context)
            if result.spans:
                el.set_text(result.output)

    def element(self, ds: DataSet, path, el: DataElement, code: ActionCode) -> None:
        old = element_digest(el)
        if code is ActionCode.REMOVE:
            ds.remove(el.tag)
            self.record(path, el, code, old)
            self.dropped(path, el)
            return
        if el.items is not None:
            if code is ActionCode.ZERO:
                self.record(path, el, code, old)
                self.dropped(path, el)
                el.items = []
                return
            detail = "" if code is ActionCode.KEEP else f"{code} not applicable to a sequence"
            self.record(path, el, ActionCode.KEEP, old, detail)
            for i, item in enumerate(el.items):
                self.dataset(item, path + ((el.tag, i),))
            return
        if code is ActionCode.KEEP:
            self.record(path, el, code, old)
            return
        before = el.value
        try:
            self.transform(el, code)
        except (PseudonymError, DicomError, ValueError) as exc:
            el.value = before
            log.warning("%s %s: %s kept: %s", self.file_id, el.tag, code, exc)
            self.record(path, el, ActionCode.KEEP, old, f"{code} failed: {exc}")
            return
        self.record(path, el, code, old)

    def dataset(self, ds: DataSet, path=()) -> None:
        nested = bool(path)
        for el in list(ds):
            self.element(ds, path, el, self.ruleset.action_for(el.tag, nested))

    def meta(self, meta: DataSet) -> None:
        # only UID remapping is meaningful in the file meta group
        for el in list(meta):
            code = self.ruleset.action_for(el.tag)
            if code is not ActionCode.HASH_UID:
                code = ActionCode.KEEP
            self.element(meta, (), el, code)


def apply_rules(f: DicomFile, ruleset: Ruleset, ctx: PseudonymContext,
                recognizers: Sequence[Recognizer] = (), *, file_id: str = "",
                patient_old_id: str | None = None) -> ActionLog:
    """Transform ``f`` in place per ``ruleset`` and return one log entry per element.

    The patient is identified by (0010,0020) unless ``patient_old_id`` is
    given; its surrogate ID comes from (or is added to) ``ctx.patient_map``.
    """
    old_id = patient_old_id or patient_id_of(f.dataset)
    patient_new = ctx.patient_map.assign(old_id) if old_id else None
    context = patient_context(f.dataset)
    if old_id and old_id not in context:
        context.append(old_id)
    applier = _Applier(file_id, ruleset, ctx, recognizers, patient_new, context)
    applier.meta(f.file_meta)
    applier.dataset(f.dataset)
    return applier.log

"""Consistent surrogates for patient IDs, UIDs and dates.

Patient IDs become sequential seven-digit numbers, UIDs are re-rooted under a
per-patient prefix followed by 19 digits of a SHA-256 digest, and dates move
back by a per-patient offset between 1 and 365 days.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import logging
import random
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

PLACEHOLDER = "{patient_id_new}"
DEFAULT_UID_ROOT = f"1.2.397.4.5.{PLACEHOLDER}.8.117."
PATIENT_ID_WIDTH = 7
UID_SUFFIX_DIGITS = 19
MAX_UID_LENGTH = 64
MAX_OFFSET_DAYS = 365
MAPPING_HEADER = ["id_old", "id_new"]
OFFSET_HEADER = ["id_new", "offset_days"]

_UID_RE = re.compile(r"^\d+(\.\d+)*$")
_DATE8 = re.compile(r"^\d{8}$")
_DATETIME = re.compile(r"^(\d{8})(\d{6}(?:\.\d{1,6})?(?:[+-]\d{4})?)$")
_PARTIAL_DT = re.compile(r"^(\d{8})(\d{2}|\d{4})$")


class PseudonymError(ValueError):
    pass


class MalformedCsv(PseudonymError):
    pass


class DuplicateOldId(PseudonymError):
    pass


class UidCollision(PseudonymError):
    pass


class UnparseableDate(PseudonymError):
    pass


class BadUid(PseudonymError):
    pass


class MappingTable:
    """Injective old -> new mapping with atomic get-or-create."""

    def __init__(self, entries: dict[str, str] | None = None):
        self._lock = threading.Lock()
        self.entries: dict[str, str] = {}
        self._reverse: dict[str, str] = {}
        for old, new in (entries or {}).items():
            self._insert(old, new)

    def _insert(self, old: str, new: str) -> None:
        if old in self.entries:
            raise DuplicateOldId(old)
        if new in self._reverse:
            raise MalformedCsv(f"id_new {new!r} assigned to both {self._reverse[new]!r} and {old!r}")
        self.entries[old] = new
        self._reverse[new] = old

    def __eq__(self, other) -> bool:
        if not isinstance(other, MappingTable):
            return NotImplemented
        return self.entries == other.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, old: str) -> bool:
        return old in self.entries

    def get(self, old: str) -> str | None:
        return self.entries.get(old)

    def old_for(self, new: str) -> str | None:
        return self._reverse.get(new)

    def items(self):
        return self.entries.items()


class PatientIdMap(MappingTable):
    def __init__(self, entries: dict[str, str] | None = None):
        super().__init__(entries)
        numeric = [int(v) for v in self.entries.values() if v.isdigit()]
        self.counter = max(numeric, default=0) + 1

    def assign(self, old_id: str) -> str:
        if not old_id:
            raise PseudonymError("empty patient ID")
        with self._lock:
            new = self.entries.get(old_id)
            if new is None:
                new = f"{self.counter:0{PATIENT_ID_WIDTH}d}"
                self.counter += 1
                self._insert(old_id, new)
            return new


class UidMap(MappingTable):
    def get_or_create(self, old_uid: str, make) -> str:
        with self._lock:
            new = self.entries.get(old_uid)
            if new is None:
                new = make()
                if new in self._reverse:
                    raise UidCollision(
                        f"{old_uid!r} and {self._reverse[new]!r} both hash to {new!r}"
                    )
                self._insert(old_uid, new)
            return new


@dataclass
class DateShiftTable:
    offsets: dict[str, int] = field(default_factory=dict)

    def offset_for(self, patient_new_id: str) -> int:
        try:
            return self.offsets[patient_new_id]
        except KeyError:
            raise PseudonymError(f"no date offset for patient {patient_new_id!r}") from None


@dataclass
class PseudonymContext:
    patient_map: PatientIdMap = field(default_factory=PatientIdMap)
    uid_map: UidMap = field(default_factory=UidMap)
    shift_table: DateShiftTable = field(default_factory=DateShiftTable)
    uid_root_template: str = DEFAULT_UID_ROOT

    def __post_init__(self):
        if self.uid_root_template.count(PLACEHOLDER) != 1:
            raise PseudonymError("uid root template needs exactly one {patient_id_new}")

    def uid_root(self, patient_new_id: str) -> str:
        return self.uid_root_template.replace(PLACEHOLDER, patient_new_id)


def assign_patient_id(patient_map: PatientIdMap, old_id: str) -> str:
    return patient_map.assign(old_id)


def uid_digest_digits(old_uid: str) -> str:
    """First 19 decimal digits of SHA-256(old_uid) read as a big-endian integer."""
    digest = hashlib.sha256(old_uid.encode("ascii")).digest()
    digits = str(int.from_bytes(digest, "big"))
    while len(digits) < UID_SUFFIX_DIGITS:
        digest = hashlib.sha256(digest).digest()
        digits += str(int.from_bytes(digest, "big"))
    return digits[:UID_SUFFIX_DIGITS]


def hash_uid(ctx: PseudonymContext, patient_new_id: str, old_uid: str) -> str:
    old_uid = old_uid.strip().rstrip("\x00")
    if not _UID_RE.match(old_uid):
        raise BadUid(f"not a UID: {old_uid!r}")

    def make() -> str:
        new = ctx.uid_root(patient_new_id) + uid_digest_digits(old_uid)
        if len(new) > MAX_UID_LENGTH:
            raise BadUid(f"generated UID {new!r} exceeds {MAX_UID_LENGTH} characters")
        return new

    return ctx.uid_map.get_or_create(old_uid, make)


def _shift_yyyymmdd(text: str, days: int) -> str:
    try:
        day = dt.date(int(text[:4]), int(text[4:6]), int(text[6:8]))
    except ValueError:
        raise UnparseableDate(f"invalid calendar date {text!r}") from None
    try:
        return (day - dt.timedelta(days=days)).strftime("%Y%m%d")
    except OverflowError:
        raise UnparseableDate(f"{text!r} cannot be shifted by {days} days") from None


def shift_value(value: str, days: int, vr: str = "DA") -> str:
    """Move every date in a (possibly multi-valued) DA/DT/Unix value back by ``days``."""
    return "\\".join(_shift_component(part, days, vr) for part in value.split("\\"))


def _shift_component(part: str, days: int, vr: str) -> str:
    text = part.strip()
    if not text:
        return part
    if _DATE8.match(text):
        return _shift_yyyymmdd(text, days)
    m = _DATETIME.match(text)
    if m:
        return _shift_yyyymmdd(m.group(1), days) + m.group(2)
    m = _PARTIAL_DT.match(text)
    if m and vr == "DT":
        return _shift_yyyymmdd(m.group(1), days) + m.group(2)
    # YYYY and YYYYMM are partial dates, not epoch seconds
    if text.isdigit() and len(text) not in (4, 6):
        return str(int(text) - days * 86400)
    raise UnparseableDate(f"unrecognized date format {text!r}")


def shift_date(table: DateShiftTable, patient_new_id: str, value: str, vr: str = "DA") -> str:
    return shift_value(value, table.offset_for(patient_new_id), vr)


def build_shift_table(patient_new_ids, seed: int, existing: DateShiftTable | None = None) -> DateShiftTable:
    """Assign each patient a day offset in [1, 365].

    Offsets come from a seeded shuffle of 1..365 so they are pairwise
    distinct until the pool runs out; beyond 365 patients offsets are drawn
    with replacement.
    """
    rng = random.Random(seed)
    pool = list(range(1, MAX_OFFSET_DAYS + 1))
    rng.shuffle(pool)
    offsets = dict(existing.offsets) if existing else {}
    used = set(offsets.values())
    available = (v for v in pool if v not in used)
    warned = False
    for pid in sorted(set(patient_new_ids)):
        if pid in offsets:
            continue
        value = next(available, None)
        if value is None:
            if not warned:
                log.warning("more than %d patients: date offsets can repeat", MAX_OFFSET_DAYS)
                warned = True
            value = rng.randint(1, MAX_OFFSET_DAYS)
        offsets[pid] = value
    return DateShiftTable(offsets)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_rows(path: Path, header: list[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise MalformedCsv(f"{path}: header must be {','.join(header)}")
    body = rows[1:]
    for n, row in enumerate(body, start=2):
        if len(row) != 2 or not row[0] or not row[1]:
            raise MalformedCsv(f"{path}:{n}: expected two nonempty fields, got {row}")
    return body


def save_mapping(table: MappingTable, path: str | Path) -> None:
    rows = sorted(table.items(), key=lambda kv: (kv[1], kv[0]))
    _write_rows(Path(path), MAPPING_HEADER, rows)


def load_mapping(path: str | Path, cls: type[MappingTable] = PatientIdMap) -> MappingTable:
    entries: dict[str, str] = {}
    for old, new in _read_rows(Path(path), MAPPING_HEADER):
        if old in entries:
            raise DuplicateOldId(f"{path}: id_old {old!r} appears twice")
        entries[old] = new
    return cls(entries)


def save_offsets(table: DateShiftTable, path: str | Path) -> None:
    _write_rows(Path(path), OFFSET_HEADER, sorted(table.offsets.items()))


def load_offsets(path: str | Path) -> DateShiftTable:
    offsets: dict[str, int] = {}
    for pid, days in _read_rows(Path(path), OFFSET_HEADER):
        if not days.isdigit() or not 1 <= int(days) <= MAX_OFFSET_DAYS:
            raise MalformedCsv(f"{path}: offset {days!r} outside 1..{MAX_OFFSET_DAYS}")
        if pid in offsets:
            raise DuplicateOldId(f"{path}: patient {pid!r} appears twice")
        offsets[pid] = int(days)
    return DateShiftTable(offsets)

"""Grade a de-identified corpus against an answer key.

Each key row names a file, a locus (tag path or pixel box) and one of ten
checks. Verdicts roll up into an action report, a category report and a
single scoring row. Nothing under the input directories is modified.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dicom import DataElement, DicomError, DicomFile, Tag, get_pixels, parse_file, parse_locus, resolve_locus
from .pseudonym import DEFAULT_UID_ROOT, PLACEHOLDER, DateShiftTable, MappingTable, load_mapping, load_offsets

KEY_HEADER = ["file", "locus", "check", "expected", "category", "subcategory"]
ACTIONS = ("date_shifted", "patid_consistent", "pixels_hidden", "pixels_retained",
           "tag_retained", "text_notnull", "text_removed", "text_retained",
           "uid_changed", "uid_consistent")
PASS, FAIL = "PASS", "FAIL"
PATIENT_ID = Tag(0x0010, 0x0020)
_PIXEL_LOCUS = re.compile(r"^pixel:(\*|\d+):(\d+),(\d+),(\d+),(\d+)$")
_BOX = re.compile(r"^(\*|\d+):(\d+),(\d+),(\d+),(\d+)$")


class MalformedKey(ValueError):
    pass


class MissingFile(Exception):
    pass


@dataclass(frozen=True)
class AnswerKeyEntry:
    file: str
    locus: str
    check: str
    expected: str = ""
    category: str = ""
    subcategory: str = ""

    def row(self) -> list[str]:
        return [self.file, self.locus, self.check, self.expected, self.category, self.subcategory]


@dataclass(frozen=True)
class CheckResult:
    entry: AnswerKeyEntry
    verdict: str
    detail: str = ""


@dataclass
class Mappings:
    patients: MappingTable
    uids: MappingTable
    offsets: DateShiftTable
    uid_root_template: str = DEFAULT_UID_ROOT

    @classmethod
    def load(cls, directory: str | Path, uid_root_template: str = DEFAULT_UID_ROOT) -> Mappings:
        """Absent files load as empty tables; checks needing them then FAIL with a detail."""
        d = Path(directory)

        def table(name: str) -> MappingTable:
            p = d / name
            return load_mapping(p, MappingTable) if p.exists() else MappingTable()

        offsets = load_offsets(d / "date_offsets.csv") if (d / "date_offsets.csv").exists() else DateShiftTable()
        return cls(table("patient_id_mapping.csv"), table("uid_mapping.csv"), offsets, uid_root_template)


@dataclass
class ScoreSummary:
    actions: dict[str, list[int]] = field(default_factory=dict)      # action -> [fail, pass]
    categories: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    fail: int = 0
    passed: int = 0

    @property
    def total(self) -> int:
        return self.fail + self.passed

    @property
    def score(self) -> float:
        return self.passed / self.total if self.total else 0.0

    @property
    def score_text(self) -> str:
        """Percentage rounded half-up to two decimals; empty when no checks."""
        if not self.total:
            return ""
        basis_points = (self.passed * 20000 + self.total) // (2 * self.total)
        return f"{basis_points // 100}.{basis_points % 100:02d}%"

    def add(self, result: CheckResult) -> None:
        e = result.entry
        slot = 0 if result.verdict == FAIL else 1
        self.actions.setdefault(e.check, [0, 0])[slot] += 1
        self.categories.setdefault((e.category, e.subcategory), [0, 0])[slot] += 1
        if slot:
            self.passed += 1
        else:
            self.fail += 1

    def action_rows(self, all_actions: bool = False) -> list[tuple[str, int, int, int]]:
        names = ACTIONS if all_actions else [a for a in ACTIONS if a in self.actions]
        return [(a, f, p, f + p) for a in names for f, p in [self.actions.get(a, [0, 0])]]

    def format_table(self) -> str:
        lines = [f"{'action':<20}{'Fail':>8}{'Pass':>10}{'Total':>10}"]
        for name, f, p, t in self.action_rows(all_actions=True):
            lines.append(f"{name:<20}{f:>8}{p:>10}{t:>10}")
        lines.append(f"{'Total':<20}{self.fail:>8}{self.passed:>10}{self.total:>10}")
        lines.append(f"Score {self.score_text or 'n/a'}")
        return "\n".join(lines)


def summarize(results: Iterable[CheckResult]) -> ScoreSummary:
    summary = ScoreSummary()
    for r in results:
        summary.add(r)
    return summary


def _validate(entry: AnswerKeyEntry, where: str) -> None:
    if entry.check not in ACTIONS:
        raise MalformedKey(f"{where}: unknown check {entry.check!r}")
    if not entry.file:
        raise MalformedKey(f"{where}: empty file")
    if entry.check == "pixels_hidden":
        if not _PIXEL_LOCUS.match(entry.locus):
            raise MalformedKey(f"{where}: pixel locus must be pixel:<frame|*>:x0,y0,x1,y1")
    elif entry.check == "pixels_retained":
        for box in filter(None, entry.expected.split(";")):
            if not _BOX.match(box):
                raise MalformedKey(f"{where}: bad excluded box {box!r}")
    else:
        try:
            parse_locus(entry.locus)
        except ValueError as exc:
            raise MalformedKey(f"{where}: {exc}") from None
    if entry.check in ("text_removed", "text_retained") and not entry.expected:
        raise MalformedKey(f"{where}: {entry.check} needs an expected substring")


def read_key(path: str | Path) -> list[AnswerKeyEntry]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedKey(f"{path}: {exc}") from None
    if not rows or rows[0] != KEY_HEADER:
        raise MalformedKey(f"{path}: header must be {','.join(KEY_HEADER)}")
    entries = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(KEY_HEADER):
            raise MalformedKey(f"{path}:{n}: expected {len(KEY_HEADER)} fields, got {len(row)}")
        entry = AnswerKeyEntry(*row)
        _validate(entry, f"{path}:{n}")
        entries.append(entry)
    return entries


def write_key(entries: Iterable[AnswerKeyEntry], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(KEY_HEADER)
        writer.writerows(e.row() for e in entries)


# --- value helpers -------------------------------------------------------

def _clean(el: DataElement | None) -> str:
    return el.text.strip(" \x00") if el is not None else ""


def _lookup(f: DicomFile, locus: str) -> DataElement | None:
    path, tag = parse_locus(locus)
    ds = f.file_meta if not path and tag.group == 0x0002 else f.dataset
    return resolve_locus(ds, (path, tag))


def _day(text: str) -> int:
    return dt.date(int(text[:4]), int(text[4:6]), int(text[6:8])).toordinal()


def _date_moved(before: str, after: str, offset: int) -> str | None:
    """None when ``after`` is ``before`` moved back ``offset`` days, else a reason."""
    if before.isdigit() and after.isdigit() and len(before) not in (4, 6, 8, 10, 12, 14):
        return None if int(before) - int(after) == offset * 86400 else "epoch shift mismatch"
    if len(before) < 8 or len(after) < 8:
        return f"cannot compare {before!r} and {after!r}"
    if before[8:] != after[8:]:
        return f"time part changed: {before[8:]!r} -> {after[8:]!r}"
    try:
        moved = _day(before[:8]) - _day(after[:8])
    except ValueError:
        return f"unparseable date in {before!r} or {after!r}"
    return None if moved == offset else f"shifted {moved} days, expected {offset}"


def uid_shape(template: str) -> re.Pattern:
    head, _, tail = template.partition(PLACEHOLDER)
    return re.compile(rf"^{re.escape(head)}\d+{re.escape(tail)}\d{{19}}$")


def _boxes(spec: str) -> list[tuple[int | None, int, int, int, int]]:
    out = []
    for part in filter(None, spec.split(";")):
        m = _BOX.match(part)
        frame = None if m.group(1) == "*" else int(m.group(1))
        out.append((frame, *map(int, m.groups()[1:])))
    return out


def _pixel_array(f: DicomFile) -> np.ndarray | None:
    m = get_pixels(f)
    return None if m is None else m.array()


class _Corpus:
    """Lazily parsed original/de-identified file pairs."""

    def __init__(self, original_dir: Path, deid_dir: Path, mappings: Mappings):
        self.original_dir = original_dir
        self.deid_dir = deid_dir
        self.mappings = mappings
        self._pairs: dict[str, tuple[DicomFile, DicomFile, str, str] | Exception] = {}

    def _deid_path(self, rel: Path, old: str, new: str) -> Path:
        if len(rel.parts) < 2:
            return self.deid_dir / rel
        top = rel.parts[0]
        candidates = [top.replace(old, new)] if old and old in top else []
        candidates.append(new)
        for name in candidates:
            p = self.deid_dir / name / Path(*rel.parts[1:])
            if p.exists():
                return p
        return self.deid_dir / candidates[0] / Path(*rel.parts[1:])

    def pair(self, file: str) -> tuple[DicomFile, DicomFile, str, str]:
        """(original, deid, patient old id, patient new id) or raises MissingFile."""
        if file not in self._pairs:
            try:
                self._pairs[file] = self._load(file)
            except MissingFile as exc:
                self._pairs[file] = exc
        got = self._pairs[file]
        if isinstance(got, Exception):
            raise got
        return got

    def _load(self, file: str):
        rel = Path(file)
        src = self.original_dir / rel
        if not src.is_file():
            raise MissingFile(f"original {file} not found")
        try:
            orig = parse_file(src.read_bytes())
        except Exception as exc:
            raise MissingFile(f"original {file} unreadable: {exc}") from None
        old = _clean(orig.dataset.get(PATIENT_ID)) or (rel.parts[0] if len(rel.parts) > 1 else rel.stem)
        new = self.mappings.patients.get(old)
        if new is None:
            raise MissingFile(f"patient {old!r} of {file} absent from patient mapping")
        dest = self._deid_path(rel, old, new)
        if not dest.is_file():
            raise MissingFile(f"de-identified {file} not found at {dest}")
        try:
            deid = parse_file(dest.read_bytes())
        except Exception as exc:
            raise MissingFile(f"de-identified {file} unreadable: {exc}") from None
        return orig, deid, old, new


def _check(corpus: _Corpus, e: AnswerKeyEntry) -> tuple[bool, str]:
    orig, deid, old, new = corpus.pair(e.file)
    maps = corpus.mappings
    c = e.check

    if c == "pixels_hidden":
        frame, x0, y0, x1, y1 = _PIXEL_LOCUS.match(e.locus).groups()
        arr = _pixel_array(deid)
        if arr is None:
            return False, "no pixel data"
        frames = arr if frame == "*" else arr[int(frame):int(frame) + 1]
        region = frames[:, int(y0):int(y1), int(x0):int(x1), :]
        if region.size == 0:
            return False, "box outside image"
        if e.expected:
            fill = [int(v) for v in e.expected.split(",")]
            ok = bool(np.all(region == np.array(fill, dtype=region.dtype)))
            return ok, "" if ok else f"box not filled with {e.expected}"
        ok = bool(np.all(region == region.reshape(-1, region.shape[-1])[0]))
        return ok, "" if ok else "box not uniformly filled"

    if c == "pixels_retained":
        a, b = _pixel_array(orig), _pixel_array(deid)
        if a is None or b is None:
            return (a is None and b is None), "pixel data presence differs"
        if a.shape != b.shape:
            return False, f"pixel geometry changed {a.shape} -> {b.shape}"
        keep = np.ones(a.shape[:3], dtype=bool)
        for frame, x0, y0, x1, y1 in _boxes(e.expected):
            frames = slice(None) if frame is None else slice(frame, frame + 1)
            keep[frames, y0:y1, x0:x1] = False
        diff = int(np.count_nonzero(np.any(a != b, axis=-1) & keep))
        return diff == 0, "" if diff == 0 else f"{diff} pixels outside boxes changed"

    d = _lookup(deid, e.locus)
    o = _lookup(orig, e.locus)

    if c == "text_removed":
        if d is None:
            return True, ""
        ok = e.expected.upper() not in d.text.upper()
        return ok, "" if ok else f"{e.expected!r} still present"
    if d is None:
        return False, "element missing"
    if c == "tag_retained":
        want = o.value if o is not None else None
        if e.expected.startswith("hex:"):
            want = bytes.fromhex(e.expected[4:])
        elif e.expected:
            return (_clean(d) == e.expected), f"value {_clean(d)!r}"
        if want is None:
            return False, "element absent from original"
        return d.value == want, "" if d.value == want else "bytes changed"
    if c == "text_notnull":
        ok = bool(d.value.strip(b" \x00"))
        return ok, "" if ok else "empty value"
    if c == "text_retained":
        ok = e.expected in d.text
        return ok, "" if ok else f"{e.expected!r} missing"
    if c == "patid_consistent":
        want = maps.patients.get(e.expected or old)
        ok = want is not None and _clean(d) == want
        return ok, "" if ok else f"value {_clean(d)!r}, mapped id {want!r}"
    if c == "date_shifted":
        before = e.expected or _clean(o)
        after = _clean(d)
        if not before:
            return False, "no original value"
        if after == before:
            return False, "date unchanged"
        try:
            offset = maps.offsets.offset_for(new)
        except ValueError as exc:
            return False, str(exc)
        b_parts, a_parts = before.split("\\"), after.split("\\")
        if len(b_parts) != len(a_parts):
            return False, "value multiplicity changed"
        for b, a in zip(b_parts, a_parts):
            reason = _date_moved(b.strip(), a.strip(), offset)
            if reason:
                return False, reason
        return True, ""
    if c == "uid_changed":
        before, after = _clean(o), _clean(d)
        if after == before:
            return False, "UID unchanged"
        shape = uid_shape(maps.uid_root_template)
        bad = [u for u in after.split("\\") if not shape.match(u) or len(u) > 64]
        return not bad, "" if not bad else f"bad UID shape {bad[0]!r}"
    if c == "uid_consistent":
        before = (e.expected or _clean(o)).split("\\")
        want = [maps.uids.get(u) for u in before]
        if None in want:
            return False, "original UID absent from uid mapping"
        mapped = "\\".join(want)
        ok = _clean(d) == mapped
        return ok, "" if ok else f"value {_clean(d)!r}, mapping says {mapped!r}"
    raise MalformedKey(f"unknown check {c!r}")


def verify_corpus(original_dir: str | Path, deid_dir: str | Path, key: Sequence[AnswerKeyEntry],
                  mappings: Mappings) -> tuple[list[CheckResult], ScoreSummary]:
    corpus = _Corpus(Path(original_dir), Path(deid_dir), mappings)
    results = []
    for entry in key:
        try:
            ok, detail = _check(corpus, entry)
        except MissingFile as exc:
            ok, detail = False, f"MissingFile: {exc}"
        except DicomError as exc:  # e.g. pixel data that cannot be decoded
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(entry, PASS if ok else FAIL, detail))
    return results, summarize(results)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def render_reports(results: Sequence[CheckResult], summary: ScoreSummary, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [list(r) for r in summary.action_rows()]
    rows.append(["Total", summary.fail, summary.passed, summary.total])
    _write_csv(out / "action_report.csv", ["action", "Fail", "Pass", "Total"], rows)
    rows = [[cat, sub, f, p] for (cat, sub), (f, p) in sorted(summary.categories.items())]
    rows.append(["Total", "", summary.fail, summary.passed])
    _write_csv(out / "category_report.csv", ["category", "subcategory", "Fail", "Pass"], rows)
    _write_csv(out / "scoring_report.csv", ["Category", "Fail", "Pass", "Total", "Score"],
               [["All", summary.fail, summary.passed, summary.total, summary.score_text]])
    _write_csv(out / "check_results.csv", KEY_HEADER + ["verdict", "detail"],
               [r.entry.row() + [r.verdict, r.detail] for r in results])

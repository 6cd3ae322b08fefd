"""Removal of identifying substrings from free-text values.

A battery of recognizers proposes spans; overlapping spans are merged and
deleted, and the text is re-scanned until nothing fires, so the result is a
fixpoint (scrubbing twice changes nothing).
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

PATTERN = "PATTERN"
DENY_LIST = "DENY_LIST"
PREPOSITION = "PREPOSITION"
ALLOW_LIST = "ALLOW_LIST"
KINDS = (PATTERN, DENY_LIST, PREPOSITION, ALLOW_LIST)

PATIENT_CONTEXT = "PATIENT_CONTEXT"
DEFAULT_ANCHORS = ("AT", "BY", "DR", "MR", "MRS", "MS")
RUN_WINDOW = 4
MIN_CONTEXT_LEN = 2

_TOKEN = re.compile(r"\S+")
_CAP_PREFIX = re.compile(r"[A-Z][^\s,;:()\[\]{}\"]*")
_ALNUM = re.compile(r"[A-Za-z0-9]")


class BadPattern(ValueError):
    pass


class Span(NamedTuple):
    start: int
    end: int
    recognizer: str


@dataclass
class ScrubResult:
    output: str
    spans: list[Span] = field(default_factory=list)


def _word_regex(terms: Iterable[str]) -> re.Pattern | None:
    terms = sorted({t.strip() for t in terms if t.strip()}, key=len, reverse=True)
    if not terms:
        return None
    alt = "|".join(re.escape(t) for t in terms)
    return re.compile(rf"(?<![A-Za-z0-9])(?:{alt})(?![A-Za-z0-9])", re.IGNORECASE)


@dataclass(frozen=True)
class Recognizer:
    """``pattern`` is regex source for PATTERN, a term tuple otherwise."""

    name: str
    kind: str
    pattern: str | tuple[str, ...]
    replacement: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown recognizer kind {self.kind!r}")
        if self.kind == PATTERN:
            try:
                compiled = re.compile(self.pattern)
            except re.error as exc:
                raise BadPattern(f"{self.name}: {exc}") from None
        elif self.kind == PREPOSITION:
            compiled = frozenset(t.upper().rstrip(".") for t in self.pattern)
        else:
            compiled = _word_regex(self.pattern)
        object.__setattr__(self, "_compiled", compiled)

    @property
    def compiled(self):
        return self._compiled


def _read_terms(path: Path) -> tuple[str, ...]:
    terms = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line)
    return tuple(terms)


def read_patterns(text: str, source: str = "<patterns>") -> list[Recognizer]:
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        name, sep, regex = line.partition("\t")
        if not sep or not name.strip() or not regex:
            raise BadPattern(f"{source}:{n}: expected name<TAB>regex: {line!r}")
        try:
            out.append(Recognizer(name.strip(), PATTERN, regex))
        except BadPattern as exc:
            raise BadPattern(f"{source}:{n}: {exc}") from None
    return out


def builtin_recognizers() -> list[Recognizer]:
    text = resources.files("dicom_deid").joinpath("data/patterns.txt").read_text(encoding="utf-8")
    return read_patterns(text, "builtin patterns") + [
        Recognizer("NAME_AFTER_PREPOSITION", PREPOSITION, DEFAULT_ANCHORS)
    ]


def default_list_path(name: str) -> Path:
    """Path of a list shipped with the package (``allowlist.txt`` etc.)."""
    return Path(str(resources.files("dicom_deid").joinpath(f"data/{name}")))


def load_lists(allow_path=None, deny_path=None, patterns_path=None, *,
               defaults: bool = True) -> list[Recognizer]:
    """Built-in battery plus allow/deny terms and extra patterns.

    Without an explicit ``allow_path`` the shipped allow list is used unless
    ``defaults`` is false.
    """
    recognizers = builtin_recognizers()
    if allow_path is None and defaults:
        allow_path = default_list_path("allowlist.txt")
    if patterns_path:
        p = Path(patterns_path)
        recognizers += read_patterns(p.read_text(encoding="utf-8"), str(p))
    if deny_path:
        terms = _read_terms(Path(deny_path))
        if terms:
            recognizers.append(Recognizer("DENY_LIST", DENY_LIST, terms))
    if allow_path:
        terms = _read_terms(Path(allow_path))
        if terms:
            recognizers.append(Recognizer("ALLOW_LIST", ALLOW_LIST, terms))
    return recognizers


def context_terms(identifiers: Iterable[str]) -> list[str]:
    """Split patient identifiers (IDs, ``LAST^FIRST`` names) into matchable terms."""
    terms = set()
    for ident in identifiers:
        if not ident:
            continue
        ident = ident.strip().strip("\x00")
        if len(ident) >= MIN_CONTEXT_LEN:
            terms.add(ident)
        for part in re.split(r"[\^\s,]+", ident):
            if len(part) >= MIN_CONTEXT_LEN:
                terms.add(part)
    return sorted(terms)


def _overlaps(start: int, end: int, ranges) -> bool:
    return any(s < end and start < e for s, e in ranges)


def _preposition_spans(rec: Recognizer, text: str, allowed) -> list[Span]:
    tokens = [(m.start(), m.end(), m.group()) for m in _TOKEN.finditer(text)]
    spans = []
    for i, (s, e, tok) in enumerate(tokens):
        if tok.upper().rstrip(".") not in rec.compiled or _overlaps(s, e, allowed):
            continue
        end = None
        for ts, te, word in tokens[i + 1:i + 1 + RUN_WINDOW]:
            m = _CAP_PREFIX.match(word)
            if not m or _overlaps(ts, ts + m.end(), allowed):
                break
            end = ts + m.end()
            if m.end() < len(word):
                break
        if end is not None:
            spans.append(Span(s, end, rec.name))
    return spans


def _find_spans(recognizers: Sequence[Recognizer], text: str, context) -> list[Span]:
    allowed = []
    for rec in recognizers:
        if rec.kind == ALLOW_LIST and rec.compiled is not None:
            allowed += [(m.start(), m.end()) for m in rec.compiled.finditer(text)]

    spans: list[Span] = []
    if context is not None:
        spans += [Span(m.start(), m.end(), PATIENT_CONTEXT) for m in context.finditer(text)]
    for rec in recognizers:
        if rec.kind == PATTERN:
            spans += [Span(m.start(), m.end(), rec.name)
                      for m in rec.compiled.finditer(text) if m.end() > m.start()]
        elif rec.kind == DENY_LIST and rec.compiled is not None:
            spans += [Span(m.start(), m.end(), rec.name)
                      for m in rec.compiled.finditer(text)
                      if not _overlaps(m.start(), m.end(), allowed)]
        elif rec.kind == PREPOSITION:
            spans += _preposition_spans(rec, text, allowed)
    return spans


def merge_spans(spans: Iterable[Span], text: str) -> list[Span]:
    """Merge overlapping spans and spans separated only by punctuation."""
    merged: list[Span] = []
    for span in sorted(spans):
        if merged:
            last = merged[-1]
            gap = text[last.end:span.start]
            if span.start <= last.end or (not _ALNUM.search(gap) and not gap.isspace()
                                          and " " not in gap):
                names = last.recognizer.split("+")
                if span.recognizer not in names:
                    names.append(span.recognizer)
                merged[-1] = Span(last.start, max(last.end, span.end), "+".join(names))
                continue
        merged.append(span)
    return merged


def _delete(text: str, origin: list[int], spans: list[Span]) -> tuple[str, list[int]]:
    drop = [False] * len(text)
    for s, e, _ in spans:
        for i in range(s, e):
            drop[i] = True
    chars: list[str] = []
    orig: list[int] = []
    for i, ch in enumerate(text):
        if drop[i]:
            continue
        if ch == " " and (not chars or chars[-1] == " "):
            continue
        chars.append(ch)
        orig.append(origin[i])
    while chars and chars[-1] == " ":
        chars.pop()
        orig.pop()
    return "".join(chars), orig


def scrub_value(recognizers: Sequence[Recognizer], value: str,
                patient_context: Iterable[str] = ()) -> ScrubResult:
    """Remove PHI from ``value``; spans are reported in input coordinates."""
    terms = context_terms(patient_context)
    context = _word_regex(terms) if terms else None
    text = value
    origin = list(range(len(value)))
    found: list[Span] = []
    while True:
        spans = merge_spans(_find_spans(recognizers, text, context), text)
        if not spans:
            break
        for s, e, name in spans:
            found.append(Span(origin[s], origin[e - 1] + 1, name))
        text, origin = _delete(text, origin, spans)
    if not found:
        return ScrubResult(value, [])
    return ScrubResult(text, merge_spans(found, value))


class Scrubber:
    """Recognizer battery bound to a compiled form, for repeated use."""

    def __init__(self, recognizers: Sequence[Recognizer] | None = None):
        self.recognizers = list(recognizers) if recognizers is not None else load_lists()

    def __call__(self, value: str, patient_context: Iterable[str] = ()) -> ScrubResult:
        return scrub_value(self.recognizers, value, patient_context)

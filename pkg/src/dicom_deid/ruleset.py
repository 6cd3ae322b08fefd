"""Declarative per-tag action rules.

File format, one rule per line::

    @default_public KEEP
    @default_private X
    @uid_root 1.2.397.4.5.{patient_id_new}.8.117.
    (0008,0080) X              # Institution Name
    (50xx,xxxx) X toplevel     # curve data, only outside sequences
    (0010,0020) LOOKUP(this, ptid)

Codes accept the short TCIA letters, the long names, and the function-call
spellings used in TCIA scripts (``hashuid(@UIDROOT, this)`` and so on).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .dicom import Tag
from .pseudonym import DEFAULT_UID_ROOT, PLACEHOLDER

log = logging.getLogger(__name__)


class ActionCode(str, Enum):
    REMOVE = "REMOVE"
    KEEP = "KEEP"
    ZERO = "ZERO"
    LOOKUP_PATIENT = "LOOKUP_PATIENT"
    HASH_UID = "HASH_UID"
    INCREMENT_DATE = "INCREMENT_DATE"
    CLEAN_TEXT = "CLEAN_TEXT"

    def __str__(self) -> str:
        return self.value


_ALIASES = {
    "X": ActionCode.REMOVE, "REMOVE": ActionCode.REMOVE,
    "K": ActionCode.KEEP, "KEEP": ActionCode.KEEP,
    "Z": ActionCode.ZERO, "ZERO": ActionCode.ZERO,
    "LOOKUP": ActionCode.LOOKUP_PATIENT, "LOOKUP_PATIENT": ActionCode.LOOKUP_PATIENT,
    "U": ActionCode.HASH_UID, "HASHUID": ActionCode.HASH_UID, "HASH_UID": ActionCode.HASH_UID,
    "INCREMENTDATE": ActionCode.INCREMENT_DATE, "INCDATE": ActionCode.INCREMENT_DATE,
    "INCREMENT_DATE": ActionCode.INCREMENT_DATE,
    "C": ActionCode.CLEAN_TEXT, "CLEAN": ActionCode.CLEAN_TEXT, "CLEAN_TEXT": ActionCode.CLEAN_TEXT,
    # composite profile codes collapse to their most conservative member
    "X/Z/D": ActionCode.REMOVE, "X/Z": ActionCode.REMOVE, "X/D": ActionCode.REMOVE,
    "Z/D": ActionCode.ZERO,
}

_PATTERN_RE = re.compile(r"^\(([0-9A-Fa-fxX]{4}),([0-9A-Fa-fxX]{4})\)$")
_CALL_RE = re.compile(r"^([A-Za-z_]+)\s*\(.*\)$")


class RulesetError(ValueError):
    pass


class MalformedPattern(RulesetError):
    pass


class MissingDefaults(RulesetError):
    pass


class UnknownCode(RulesetError):
    pass


def parse_code(text: str) -> ActionCode:
    word = text.strip()
    m = _CALL_RE.match(word)
    if m:
        word = m.group(1)
    try:
        return _ALIASES[word.upper()]
    except KeyError:
        raise UnknownCode(f"unknown action code {text!r}") from None


@dataclass(frozen=True)
class TagPattern:
    mask: int
    value: int
    text: str

    @classmethod
    def parse(cls, text: str) -> TagPattern:
        m = _PATTERN_RE.match(text.strip())
        if not m:
            raise MalformedPattern(f"bad tag pattern {text!r}")
        hexdigits = m.group(1) + m.group(2)
        mask = value = 0
        for ch in hexdigits:
            mask <<= 4
            value <<= 4
            if ch not in "xX":
                mask |= 0xF
                value |= int(ch, 16)
        return cls(mask, value, f"({m.group(1).upper()},{m.group(2).upper()})".replace("X", "x"))

    @property
    def is_exact(self) -> bool:
        return self.mask == 0xFFFFFFFF

    def matches(self, tag: Tag) -> bool:
        return (tag.value & self.mask) == self.value


@dataclass(frozen=True)
class ActionRule:
    pattern: TagPattern
    code: ActionCode
    applies_in_sequences: bool = True


@dataclass(frozen=True)
class Ruleset:
    rules: tuple[ActionRule, ...] = ()
    default_public: ActionCode = ActionCode.KEEP
    default_private: ActionCode = ActionCode.REMOVE
    uid_root_template: str = DEFAULT_UID_ROOT

    def __post_init__(self):
        for code in (self.default_public, self.default_private):
            if code is ActionCode.LOOKUP_PATIENT:
                raise RulesetError("LOOKUP cannot be a default action")

    def action_for(self, tag: Tag, nested: bool = False) -> ActionCode:
        """First matching rule wins; unmatched tags take the public/private default."""
        for rule in self.rules:
            if rule.pattern.matches(tag) and (rule.applies_in_sequences or not nested):
                return rule.code
        return self.default_private if tag.is_private else self.default_public


def parse_ruleset(text: str, source: str = "<ruleset>") -> Ruleset:
    rules: list[ActionRule] = []
    seen: dict[int, int] = {}
    defaults: dict[str, ActionCode] = {}
    uid_root = DEFAULT_UID_ROOT
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{n}"
        if line.startswith("@"):
            key, _, arg = line.partition(" ")
            arg = arg.strip()
            if key in ("@default_public", "@default_private"):
                try:
                    defaults[key] = parse_code(arg)
                except UnknownCode as exc:
                    raise RulesetError(f"{where}: {exc}") from None
            elif key == "@uid_root":
                if arg.count(PLACEHOLDER) != 1:
                    raise RulesetError(f"{where}: @uid_root needs one {{patient_id_new}}")
                uid_root = arg
            else:
                raise RulesetError(f"{where}: unknown directive {key}")
            continue
        pattern_text, _, rest = line.partition(" ")
        try:
            pattern = TagPattern.parse(pattern_text)
        except MalformedPattern as exc:
            raise MalformedPattern(f"{where}: {exc}") from None
        rest = rest.strip()
        toplevel = False
        if rest.lower().endswith(" toplevel"):
            rest, toplevel = rest[:-len(" toplevel")].rstrip(), True
        if not rest:
            raise RulesetError(f"{where}: missing action code")
        try:
            code = parse_code(rest)
        except UnknownCode as exc:
            raise RulesetError(f"{where}: {exc}") from None
        if pattern.is_exact:
            if pattern.value in seen:
                log.warning("%s: duplicate rule for %s ignored (first at line %d)",
                            where, pattern.text, seen[pattern.value])
                continue
            seen[pattern.value] = n
        rules.append(ActionRule(pattern, code, not toplevel))
    missing = [k for k in ("@default_public", "@default_private") if k not in defaults]
    if missing:
        raise MissingDefaults(f"{source}: missing {', '.join(missing)}")
    try:
        return Ruleset(tuple(rules), defaults["@default_public"], defaults["@default_private"],
                       uid_root)
    except RulesetError as exc:
        raise RulesetError(f"{source}: {exc}") from None


def load_ruleset(path: str | Path | None = None) -> Ruleset:
    """Parse a ruleset file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("dicom_deid").joinpath("data/default.ruleset").read_text(encoding="utf-8")
        return parse_ruleset(text, "default.ruleset")
    path = Path(path)
    return parse_ruleset(path.read_text(encoding="utf-8"), str(path))

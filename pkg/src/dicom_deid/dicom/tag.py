"""Tags, value representations and the data dictionary lookup."""

from __future__ import annotations

import re
from functools import lru_cache
from typing import NamedTuple

from pydicom.datadict import dictionary_VR

_TAG_RE = re.compile(r"^\(?\s*([0-9A-Fa-f]{4})\s*,\s*([0-9A-Fa-f]{4})\s*\)?$")


class Tag(NamedTuple):
    group: int
    element: int

    def __str__(self) -> str:
        return f"({self.group:04X},{self.element:04X})"

    @property
    def is_private(self) -> bool:
        return bool(self.group & 1)

    @property
    def is_group_length(self) -> bool:
        return self.element == 0

    @property
    def value(self) -> int:
        return (self.group << 16) | self.element

    @classmethod
    def parse(cls, text: str) -> Tag:
        """Parse ``(GGGG,EEEE)`` (parentheses optional)."""
        m = _TAG_RE.match(text.strip())
        if not m:
            raise ValueError(f"not a tag: {text!r}")
        return cls(int(m.group(1), 16), int(m.group(2), 16))


ITEM = Tag(0xFFFE, 0xE000)
ITEM_DELIMITER = Tag(0xFFFE, 0xE00D)
SEQUENCE_DELIMITER = Tag(0xFFFE, 0xE0DD)
PIXEL_DATA = Tag(0x7FE0, 0x0010)
TRANSFER_SYNTAX = Tag(0x0002, 0x0010)

# Explicit-VR encodings with a 2-byte reserved gap and 32-bit length.
LONG_VRS = frozenset(
    {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"}
)
TEXT_VRS = frozenset(
    {"AE", "AS", "CS", "DA", "DS", "DT", "IS", "LO", "LT", "PN", "SH", "ST",
     "TM", "UC", "UI", "UR", "UT"}
)
BINARY_VRS = frozenset(
    {"AT", "FD", "FL", "OB", "OD", "OF", "OL", "OV", "OW", "SL", "SS", "SV",
     "UL", "UN", "US", "UV"}
)
ALL_VRS = TEXT_VRS | BINARY_VRS | {"SQ"}


def is_text_vr(vr: str) -> bool:
    return vr in TEXT_VRS


def pad_byte(vr: str) -> bytes:
    if vr == "UI":
        return b"\x00"
    if vr in TEXT_VRS:
        return b" "
    return b"\x00"


@lru_cache(maxsize=4096)
def dictionary_vr(tag: Tag) -> str:
    """VR for ``tag`` from the standard dictionary; ``UN`` if unknown.

    Ambiguous dictionary entries (``US or SS``) resolve to the first choice,
    except pixel data which is ``OW``.
    """
    if tag.is_group_length:
        return "UL"
    if tag.is_private:
        # private creator reservations
        if 0x0010 <= tag.element <= 0x00FF:
            return "LO"
        return "UN"
    try:
        vr = dictionary_VR(tag.value)
    except KeyError:
        return "UN"
    if " or " in vr:
        return "OW" if tag == PIXEL_DATA else vr.split(" or ")[0]
    return vr

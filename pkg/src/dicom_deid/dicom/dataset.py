"""Editable DICOM tag-value tree."""

from __future__ import annotations

import re
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from typing import Union

from .errors import VrMismatch
from .tag import TEXT_VRS, Tag, dictionary_vr, pad_byte

TagLike = Union[Tag, tuple, str, int]

# (sequence tag, item index) pairs from the root down to an element's parent
Path = tuple[tuple[Tag, int], ...]


def as_tag(tag: TagLike) -> Tag:
    if isinstance(tag, Tag):
        return tag
    if isinstance(tag, str):
        return Tag.parse(tag)
    if isinstance(tag, int):
        return Tag(tag >> 16, tag & 0xFFFF)
    return Tag(*tag)


def encode_text(text: str, vr: str) -> bytes:
    try:
        raw = text.encode("ascii", "surrogateescape")
    except UnicodeEncodeError:
        raw = text.encode("utf-8")
    if len(raw) % 2:
        raw += pad_byte(vr)
    return raw


@dataclass
class DataElement:
    """One tag/value pair.

    ``value`` holds the raw payload in file byte order. Sequences keep their
    children in ``items`` and an empty ``value``. ``undefined_length`` records
    how a sequence (or encapsulated pixel data) was delimited in the source.
    """

    tag: Tag
    vr: str
    value: bytes = b""
    items: list[SequenceItem] | None = None
    undefined_length: bool = False

    @property
    def is_sequence(self) -> bool:
        return self.items is not None

    @property
    def is_text(self) -> bool:
        return self.vr in TEXT_VRS

    @property
    def text(self) -> str:
        """Decoded view with a single trailing pad byte dropped.

        Re-encoding the view with :meth:`set_text` reproduces ``value``
        byte for byte whenever ``value`` has even length.
        """
        raw = self.value
        if raw and len(raw) % 2 == 0 and raw[-1:] in (b" ", b"\x00"):
            raw = raw[:-1]
        return raw.decode("ascii", "surrogateescape")

    def set_text(self, text: str) -> None:
        if not self.is_text:
            raise VrMismatch(f"{self.tag} has binary VR {self.vr}")
        self.value = encode_text(text, self.vr)

    def __repr__(self) -> str:
        if self.items is not None:
            return f"DataElement({self.tag} SQ, {len(self.items)} items)"
        shown = self.text if self.is_text else f"<{len(self.value)} bytes>"
        return f"DataElement({self.tag} {self.vr} {shown!r})"


class DataSet:
    """Tag-keyed collection of elements, iterated in stored order.

    Elements inserted through :meth:`add` keep the set sorted. The parser
    appends in file order so that an out-of-order source can be detected
    (and fixed) at write time.
    """

    def __init__(self, elements=()):
        self._elements: dict[Tag, DataElement] = {}
        for el in elements:
            self.add(el)

    def __len__(self) -> int:
        return len(self._elements)

    def __iter__(self) -> Iterator[DataElement]:
        return iter(list(self._elements.values()))

    def __contains__(self, tag: TagLike) -> bool:
        return as_tag(tag) in self._elements

    def __getitem__(self, tag: TagLike) -> DataElement:
        return self._elements[as_tag(tag)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataSet):
            return NotImplemented
        return self.sorted_elements() == other.sorted_elements()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({len(self)} elements)"

    def get(self, tag: TagLike) -> DataElement | None:
        return self._elements.get(as_tag(tag))

    def tags(self) -> list[Tag]:
        return list(self._elements)

    def add(self, element: DataElement) -> None:
        last = next(reversed(self._elements), None) if self._elements else None
        self._elements[element.tag] = element
        if last is not None and element.tag < last:
            self._elements = dict(sorted(self._elements.items()))

    def append_raw(self, element: DataElement) -> None:
        """Append without reordering (parser use)."""
        self._elements[element.tag] = element

    def remove(self, tag: TagLike) -> bool:
        return self._elements.pop(as_tag(tag), None) is not None

    def is_sorted(self) -> bool:
        tags = list(self._elements)
        return all(a < b for a, b in zip(tags, tags[1:]))

    def sort(self) -> None:
        self._elements = dict(sorted(self._elements.items()))

    def sorted_elements(self) -> list[DataElement]:
        return [self._elements[t] for t in sorted(self._elements)]


class SequenceItem(DataSet):
    """A dataset nested inside a sequence element."""

    def __init__(self, elements=(), undefined_length: bool = False):
        super().__init__(elements)
        self.undefined_length = undefined_length

    def __eq__(self, other) -> bool:
        if not isinstance(other, SequenceItem):
            return NotImplemented
        return (
            self.undefined_length == other.undefined_length
            and super().__eq__(other)
        )


@dataclass
class DicomFile:
    preamble: bytes | None
    file_meta: DataSet
    dataset: DataSet
    warnings: list[str] = field(default_factory=list, compare=False)

    @property
    def transfer_syntax(self) -> str:
        el = self.file_meta.get(Tag(0x0002, 0x0010))
        return el.text.rstrip("\x00 ") if el is not None else ""

    @property
    def is_little_endian(self) -> bool:
        return self.transfer_syntax != "1.2.840.10008.1.2.2"

    @property
    def is_implicit_vr(self) -> bool:
        return self.transfer_syntax == "1.2.840.10008.1.2"


def get_element(ds: DataSet, tag: TagLike) -> DataElement | None:
    return ds.get(tag)


def set_value(ds: DataSet, tag: TagLike, text: str) -> DataElement:
    """Set the text value of ``tag``, inserting it with its dictionary VR if missing."""
    tag = as_tag(tag)
    el = ds.get(tag)
    if el is None:
        el = DataElement(tag, dictionary_vr(tag))
        el.set_text(text)
        ds.add(el)
    else:
        el.set_text(text)
    return el


def remove_element(ds: DataSet, tag: TagLike) -> bool:
    return ds.remove(tag)


def iter_elements(ds: DataSet, path: Path = ()) -> Iterator[tuple[Path, DataElement, DataSet]]:
    """Depth-first, pre-order: ``(path, element, containing dataset)``."""
    for el in ds:
        yield path, el, ds
        if el.items is not None:
            for i, item in enumerate(el.items):
                yield from iter_elements(item, path + ((el.tag, i),))


def walk(ds: DataSet, visitor: Callable[[DataElement, Path], None]) -> None:
    """Call ``visitor(element, path)`` once for every element at every depth."""
    for path, el, _ in iter_elements(ds):
        visitor(el, path)


def format_locus(path: Path, tag: Tag) -> str:
    """``(0008,1140)[0]/(0008,1155)`` style address of an element."""
    parts = [f"{t}[{i}]" for t, i in path]
    parts.append(str(tag))
    return "/".join(parts)


_STEP_RE = re.compile(r"^(\([0-9A-Fa-f]{4},[0-9A-Fa-f]{4}\))\[(\d+)\]$")


def parse_locus(text: str) -> tuple[Path, Tag]:
    steps = text.strip().split("/")
    path = []
    for step in steps[:-1]:
        m = _STEP_RE.match(step)
        if not m:
            raise ValueError(f"bad locus step {step!r} in {text!r}")
        path.append((Tag.parse(m.group(1)), int(m.group(2))))
    return tuple(path), Tag.parse(steps[-1])


def resolve_locus(ds: DataSet, locus: str | tuple[Path, Tag]) -> DataElement | None:
    path, tag = parse_locus(locus) if isinstance(locus, str) else locus
    current = ds
    for seq_tag, index in path:
        el = current.get(seq_tag)
        if el is None or el.items is None or index >= len(el.items):
            return None
        current = el.items[index]
    return current.get(tag)

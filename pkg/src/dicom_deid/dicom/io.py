"""Part-10 reader and writer for the three uncompressed transfer syntaxes."""

from __future__ import annotations

import logging
import struct
from pathlib import Path

from .dataset import DataElement, DataSet, DicomFile, SequenceItem
from .errors import (
    BadMagic,
    DicomError,
    OddTagOrder,
    TruncatedFile,
    UnsupportedTransferSyntax,
)
from .tag import (
    ALL_VRS,
    ITEM,
    ITEM_DELIMITER,
    LONG_VRS,
    PIXEL_DATA,
    SEQUENCE_DELIMITER,
    Tag,
    dictionary_vr,
    pad_byte,
)

log = logging.getLogger(__name__)

IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
EXPLICIT_VR_BE = "1.2.840.10008.1.2.2"

# uid -> (implicit VR, little endian)
SUPPORTED_SYNTAXES = {
    IMPLICIT_VR_LE: (True, True),
    EXPLICIT_VR_LE: (False, True),
    EXPLICIT_VR_BE: (False, False),
}

UNDEFINED = 0xFFFFFFFF
PREAMBLE_LEN = 128
MAGIC = b"DICM"


class _Reader:
    def __init__(self, buf: bytes, implicit: bool, little: bool, strict: bool, warnings: list[str]):
        self.buf = buf
        self.implicit = implicit
        self.endian = "<" if little else ">"
        self.strict = strict
        self.warnings = warnings

    def _unpack(self, fmt: str, pos: int, size: int):
        if pos + size > len(self.buf):
            raise TruncatedFile(f"need {size} bytes at offset {pos}, stream has {len(self.buf)}")
        return struct.unpack_from(self.endian + fmt, self.buf, pos)

    def _warn(self, msg: str) -> None:
        self.warnings.append(msg)
        log.warning(msg)

    def read_tag(self, pos: int) -> Tag:
        return Tag(*self._unpack("HH", pos, 4))

    def read_dataset(self, pos: int, end: int | None, into: DataSet,
                     stop=None) -> int:
        """Read elements into ``into`` until ``end`` or an item delimiter.

        ``stop(tag)`` ends the loop before consuming an element (meta group).
        Returns the offset after the last consumed byte.
        """
        limit = len(self.buf) if end is None else end
        prev: Tag | None = None
        while pos < limit:
            tag = self.read_tag(pos)
            if tag == ITEM_DELIMITER:
                if end is not None:
                    raise DicomError(f"item delimiter inside defined-length item at {pos}")
                self._unpack("I", pos + 4, 4)
                return pos + 8
            if stop is not None and stop(tag):
                return pos
            el, pos = self.read_element(pos, tag)
            if el.tag in into:
                msg = f"duplicate tag {el.tag}; keeping first occurrence"
                if self.strict:
                    raise DicomError(msg)
                self._warn(msg)
                continue
            if prev is not None and el.tag < prev:
                self._warn(f"tag {el.tag} follows {prev}: out of order")
            prev = el.tag
            into.append_raw(el)
        if end is None and stop is None and isinstance(into, SequenceItem):
            raise TruncatedFile("stream ended inside undefined-length item")
        if pos > limit:
            raise TruncatedFile(f"element overruns its container ending at {limit}")
        return pos

    def read_element(self, pos: int, tag: Tag) -> tuple[DataElement, int]:
        if self.implicit:
            (length,) = self._unpack("I", pos + 4, 4)
            vr = dictionary_vr(tag)
            pos += 8
        else:
            if pos + 6 > len(self.buf):
                raise TruncatedFile(f"element header cut at offset {pos}")
            raw_vr = self.buf[pos + 4:pos + 6]
            vr = raw_vr.decode("latin-1")
            if not (vr.isalpha() and vr.isupper()):
                raise DicomError(f"invalid VR {raw_vr!r} for {tag} at offset {pos}")
            if vr in LONG_VRS or vr not in ALL_VRS:
                (length,) = self._unpack("I", pos + 8, 4)
                pos += 12
            else:
                (length,) = self._unpack("H", pos + 6, 2)
                pos += 8

        if vr == "SQ" or (length == UNDEFINED and self.implicit and vr == "UN"):
            items, pos = self.read_sequence(pos, length)
            return DataElement(tag, "SQ", b"", items, length == UNDEFINED), pos

        if length == UNDEFINED:
            if tag == PIXEL_DATA:
                start = pos
                pos = self.skip_fragments(pos)
                return DataElement(tag, vr, bytes(self.buf[start:pos]), None, True), pos
            raise DicomError(f"undefined length on non-sequence {tag} ({vr})")

        if pos + length > len(self.buf):
            raise TruncatedFile(f"value of {tag} needs {length} bytes at offset {pos}")
        value = bytes(self.buf[pos:pos + length])
        return DataElement(tag, vr, value), pos + length

    def read_sequence(self, pos: int, length: int) -> tuple[list[SequenceItem], int]:
        items: list[SequenceItem] = []
        end = None if length == UNDEFINED else pos + length
        while True:
            if end is not None and pos >= end:
                break
            tag = self.read_tag(pos)
            (ilen,) = self._unpack("I", pos + 4, 4)
            pos += 8
            if tag == SEQUENCE_DELIMITER:
                if end is not None:
                    raise DicomError("sequence delimiter inside defined-length sequence")
                return items, pos
            if tag != ITEM:
                raise DicomError(f"expected item tag, found {tag} at offset {pos - 8}")
            if ilen == UNDEFINED:
                item = SequenceItem(undefined_length=True)
                pos = self.read_dataset(pos, None, item)
            else:
                item = SequenceItem()
                if pos + ilen > len(self.buf):
                    raise TruncatedFile(f"item of {ilen} bytes at offset {pos} overruns stream")
                pos = self.read_dataset(pos, pos + ilen, item)
            items.append(item)
        if end is not None and pos != end:
            raise DicomError("sequence items overran the sequence length")
        return items, pos

    def skip_fragments(self, pos: int) -> int:
        while True:
            tag = self.read_tag(pos)
            (flen,) = self._unpack("I", pos + 4, 4)
            pos += 8
            if tag == SEQUENCE_DELIMITER:
                return pos
            if tag != ITEM or flen == UNDEFINED:
                raise DicomError(f"bad encapsulated fragment at offset {pos - 8}")
            if pos + flen > len(self.buf):
                raise TruncatedFile("pixel fragment overruns stream")
            pos += flen


def parse_file(data: bytes, *, strict: bool = False) -> DicomFile:
    """Parse a Part-10 byte stream.

    In lenient mode a stream without preamble is accepted when it starts
    directly with a group-0002 element.
    """
    data = bytes(data)
    warnings: list[str] = []
    if len(data) >= PREAMBLE_LEN + 4 and data[PREAMBLE_LEN:PREAMBLE_LEN + 4] == MAGIC:
        preamble: bytes | None = data[:PREAMBLE_LEN]
        pos = PREAMBLE_LEN + 4
    elif len(data) >= 2 and data[:2] == b"\x02\x00":
        if strict:
            raise BadMagic("stream has no preamble/DICM marker")
        preamble = None
        pos = 0
    elif len(data) < PREAMBLE_LEN + 4:
        raise TruncatedFile(f"only {len(data)} bytes; no room for preamble and magic")
    else:
        raise BadMagic("no DICM marker at offset 128")

    meta = DataSet()
    meta_reader = _Reader(data, implicit=False, little=True, strict=strict, warnings=warnings)
    pos = meta_reader.read_dataset(pos, None, meta, stop=lambda t: t.group != 0x0002)

    ts_el = meta.get(Tag(0x0002, 0x0010))
    if ts_el is None:
        raise DicomError("file meta has no Transfer Syntax UID (0002,0010)")
    ts = ts_el.text.rstrip("\x00 ")
    if ts not in SUPPORTED_SYNTAXES:
        raise UnsupportedTransferSyntax(ts)
    implicit, little = SUPPORTED_SYNTAXES[ts]

    ds = DataSet()
    reader = _Reader(data, implicit=implicit, little=little, strict=strict, warnings=warnings)
    reader.read_dataset(pos, None, ds)
    return DicomFile(preamble, meta, ds, warnings)


def read_file(path: str | Path, *, strict: bool = False) -> DicomFile:
    return parse_file(Path(path).read_bytes(), strict=strict)


class _Writer:
    def __init__(self, implicit: bool, little: bool, strict: bool, normalize: bool, warnings: list[str]):
        self.implicit = implicit
        self.endian = "<" if little else ">"
        self.strict = strict
        self.normalize = normalize
        self.warnings = warnings

    def pack(self, fmt: str, *values) -> bytes:
        return struct.pack(self.endian + fmt, *values)

    def header(self, tag: Tag, vr: str, length: int) -> bytes:
        head = self.pack("HH", tag.group, tag.element)
        if self.implicit:
            return head + self.pack("I", length)
        if vr in LONG_VRS or vr not in ALL_VRS:
            return head + vr.encode("ascii") + b"\x00\x00" + self.pack("I", length)
        if length > 0xFFFF:
            raise DicomError(f"{tag} value of {length} bytes too long for VR {vr}")
        return head + vr.encode("ascii") + self.pack("H", length)

    def dataset(self, ds: DataSet) -> bytes:
        if not ds.is_sorted():
            msg = "elements out of tag order; sorting on write"
            if self.strict:
                raise OddTagOrder(msg)
            self.warnings.append(msg)
            log.warning(msg)
        elements = ds.sorted_elements()
        out = bytearray()
        i = 0
        while i < len(elements):
            group = elements[i].tag.group
            j = i
            while j < len(elements) and elements[j].tag.group == group:
                j += 1
            members = elements[i:j]
            length_el = members[0] if members[0].tag.element == 0 else None
            body = b"".join(self.element(el) for el in members if el is not length_el)
            if length_el is not None:
                length_el.value = self.pack("I", len(body))
                out += self.element(length_el)
            out += body
            i = j
        return bytes(out)

    def element(self, el: DataElement) -> bytes:
        if el.items is not None:
            body = b"".join(self.item(item) for item in el.items)
            if el.undefined_length and not self.normalize:
                end = self.pack("HHI", SEQUENCE_DELIMITER.group, SEQUENCE_DELIMITER.element, 0)
                return self.header(el.tag, "SQ", UNDEFINED) + body + end
            return self.header(el.tag, "SQ", len(body)) + body
        if el.undefined_length:
            return self.header(el.tag, el.vr, UNDEFINED) + el.value
        value = el.value
        if self.normalize and len(value) % 2:
            value += pad_byte(el.vr)
        return self.header(el.tag, el.vr, len(value)) + value

    def item(self, item: SequenceItem) -> bytes:
        body = self.dataset(item)
        if item.undefined_length and not self.normalize:
            end = self.pack("HHI", ITEM_DELIMITER.group, ITEM_DELIMITER.element, 0)
            return self.pack("HHI", ITEM.group, ITEM.element, UNDEFINED) + body + end
        return self.pack("HHI", ITEM.group, ITEM.element, len(body)) + body


def write_file(f: DicomFile, *, strict: bool = False, normalize: bool = False) -> bytes:
    """Serialize ``f`` in its declared transfer syntax.

    Lengths and group lengths are recomputed. With ``normalize`` odd values
    are padded and undefined-length sequences/items are written with
    explicit lengths; by default the source encoding is reproduced.
    """
    ts = f.transfer_syntax
    if ts not in SUPPORTED_SYNTAXES:
        raise UnsupportedTransferSyntax(ts)
    implicit, little = SUPPORTED_SYNTAXES[ts]
    meta_writer = _Writer(False, True, strict, normalize, f.warnings)
    ds_writer = _Writer(implicit, little, strict, normalize, f.warnings)
    preamble = f.preamble if f.preamble is not None else b"\x00" * PREAMBLE_LEN
    return preamble + MAGIC + meta_writer.dataset(f.file_meta) + ds_writer.dataset(f.dataset)


def save_file(f: DicomFile, path: str | Path, **kwargs) -> None:
    Path(path).write_bytes(write_file(f, **kwargs))

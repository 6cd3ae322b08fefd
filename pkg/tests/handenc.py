"""Independent byte-level DICOM encoder used as a test oracle.

Deliberately shares nothing with the package's writer.
"""

import struct

LONG = {"OB", "OD", "OF", "OL", "OW", "SQ", "UC", "UN", "UR", "UT"}


def el(group, elem, vr, value: bytes, *, implicit=False, little=True, undefined=False):
    e = "<" if little else ">"
    length = 0xFFFFFFFF if undefined else len(value)
    head = struct.pack(e + "HH", group, elem)
    if implicit:
        return head + struct.pack(e + "I", length) + value
    if vr in LONG:
        return head + vr.encode() + b"\0\0" + struct.pack(e + "I", length) + value
    return head + vr.encode() + struct.pack(e + "H", length) + value


def item(body: bytes, *, little=True, undefined=False):
    e = "<" if little else ">"
    if undefined:
        return (struct.pack(e + "HHI", 0xFFFE, 0xE000, 0xFFFFFFFF) + body
                + struct.pack(e + "HHI", 0xFFFE, 0xE00D, 0))
    return struct.pack(e + "HHI", 0xFFFE, 0xE000, len(body)) + body


def seq_delim(little=True):
    return struct.pack(("<" if little else ">") + "HHI", 0xFFFE, 0xE0DD, 0)


def text(s: str, pad=b" ") -> bytes:
    b = s.encode("ascii")
    return b + pad if len(b) % 2 else b


def part10(dataset: bytes, ts="1.2.840.10008.1.2.1", sop_class="1.2.840.10008.5.1.4.1.1.7",
           sop_inst="1.2.3.4"):
    meta_body = (
        el(2, 1, "OB", b"\x00\x01")
        + el(2, 2, "UI", text(sop_class, b"\0"))
        + el(2, 3, "UI", text(sop_inst, b"\0"))
        + el(2, 0x10, "UI", text(ts, b"\0"))
    )
    meta = el(2, 0, "UL", struct.pack("<I", len(meta_body))) + meta_body
    return b"\0" * 128 + b"DICM" + meta + dataset

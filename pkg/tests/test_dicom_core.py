import io
import struct

import pydicom
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicom_deid.dicom import (
    BadMagic,
    DataElement,
    DataSet,
    DimensionMismatch,
    OddTagOrder,
    Tag,
    TruncatedFile,
    UnsupportedTransferSyntax,
    VrMismatch,
    dictionary_vr,
    get_element,
    get_pixels,
    parse_file,
    put_pixels,
    remove_element,
    set_value,
    walk,
    write_file,
)
from dicom_deid.dicom.io import EXPLICIT_VR_BE, IMPLICIT_VR_LE

from handenc import el, item, part10, seq_delim, text

SYNTAXES = [
    ("1.2.840.10008.1.2.1", False, True),
    (IMPLICIT_VR_LE, True, True),
    (EXPLICIT_VR_BE, False, False),
]


def _seq_fixture(ts, implicit, little, undefined):
    kw = dict(implicit=implicit, little=little)
    inner1 = el(0x0008, 0x1155, "UI", text("1.2.3.1", b"\0"), **kw)
    inner2 = el(0x0008, 0x1155, "UI", text("1.2.3.22", b"\0"), **kw)
    items = item(inner1, little=little, undefined=undefined) + item(inner2, little=little, undefined=undefined)
    if undefined:
        sq = el(0x0008, 0x1140, "SQ", items + seq_delim(little), undefined=True, **kw)
    else:
        sq = el(0x0008, 0x1140, "SQ", items, **kw)
    ds = sq + el(0x0010, 0x0020, "LO", text("DOE^JOHN"), **kw)
    return part10(ds, ts=ts)


class TestTag:
    def test_canonical_text(self):
        assert str(Tag(0x8, 0x80)) == "(0008,0080)"
        assert str(Tag(0x7FE0, 0x10)) == "(7FE0,0010)"
        assert Tag.parse("(0008,000d)") == Tag(8, 0xD)

    def test_private_iff_odd_group(self):
        assert Tag(0x0009, 0x1001).is_private
        assert not Tag(0x0010, 0x0010).is_private


class TestParse:
    def test_single_element(self):
        data = part10(el(0x0010, 0x0020, "PN", text("DOE^JOHN")))
        f = parse_file(data)
        assert len(f.dataset) == 1
        assert f.dataset[Tag(0x10, 0x20)].text == "DOE^JOHN"
        assert f.warnings == []

    def test_empty_dataset(self):
        f = parse_file(part10(b""))
        assert len(f.dataset) == 0

    @pytest.mark.parametrize("ts,implicit,little", SYNTAXES)
    @pytest.mark.parametrize("undefined", [False, True])
    def test_sequence_two_items(self, ts, implicit, little, undefined):
        data = _seq_fixture(ts, implicit, little, undefined)
        f = parse_file(data)
        sq = f.dataset[Tag(0x0008, 0x1140)]
        assert sq.is_sequence and len(sq.items) == 2
        assert [len(i) for i in sq.items] == [1, 1]
        assert sq.items[1][Tag(0x0008, 0x1155)].text == "1.2.3.22"
        assert sq.undefined_length == undefined
        assert write_file(f) == data

    @pytest.mark.parametrize("ts,implicit,little", SYNTAXES)
    def test_agrees_with_pydicom(self, ts, implicit, little):
        data = _seq_fixture(ts, implicit, little, False)
        ours = parse_file(data)
        theirs = pydicom.dcmread(io.BytesIO(data))
        assert theirs.PatientID == ours.dataset[Tag(0x10, 0x20)].text
        refs = [i.ReferencedSOPInstanceUID for i in theirs.ReferencedImageSequence]
        assert refs == [i[Tag(8, 0x1155)].text.rstrip("\0") for i in ours.dataset[Tag(8, 0x1140)].items]

    def test_truncated(self):
        data = part10(el(0x0010, 0x0020, "LO", text("ABCDEFGH")))
        with pytest.raises(TruncatedFile):
            parse_file(data[:-3])

    def test_bad_magic(self):
        data = bytearray(part10(b""))
        data[128:132] = b"XXXX"
        with pytest.raises(BadMagic):
            parse_file(bytes(data))

    def test_lenient_without_preamble(self):
        data = part10(el(0x0010, 0x0020, "LO", text("X1")))[132:]
        f = parse_file(data)
        assert f.preamble is None
        assert f.dataset[Tag(0x10, 0x20)].text == "X1"
        with pytest.raises(BadMagic):
            parse_file(data, strict=True)

    def test_unsupported_syntax(self):
        with pytest.raises(UnsupportedTransferSyntax):
            parse_file(part10(b"", ts="1.2.840.10008.1.2.4.50"))

    def test_out_of_order_warns_and_sorts(self):
        ds = el(0x0010, 0x0020, "LO", text("B1")) + el(0x0008, 0x0060, "CS", text("CT"))
        f = parse_file(part10(ds))
        assert f.warnings
        out = write_file(f)
        assert [e.tag for e in parse_file(out).dataset] == [Tag(8, 0x60), Tag(0x10, 0x20)]
        with pytest.raises(OddTagOrder):
            write_file(parse_file(part10(ds)), strict=True)


class TestWrite:
    def test_even_value_not_padded(self):
        f = parse_file(part10(b""))
        set_value(f.dataset, Tag(0x0008, 0x0060), "AB")
        assert f.dataset[Tag(8, 0x60)].value == b"AB"

    def test_odd_ui_nul_padded(self):
        f = parse_file(part10(b""))
        set_value(f.dataset, Tag(0x0008, 0x0018), "1.2.3")
        assert f.dataset[Tag(8, 0x18)].value == b"1.2.3\x00"
        again = parse_file(write_file(f))
        assert again.dataset[Tag(8, 0x18)].text == "1.2.3"

    def test_group_length_recomputed(self):
        f = parse_file(part10(b""))
        set_value(f.file_meta, Tag(2, 3), "1.2.3.4.5.6.7.8.9")
        out = write_file(f)
        assert pydicom.dcmread(io.BytesIO(out)).file_meta.MediaStorageSOPInstanceUID == "1.2.3.4.5.6.7.8.9"
        glen = struct.unpack_from("<I", out, 132 + 8)[0]
        assert glen == len(write_file(f)) - 132 - 12

    def test_normalize_pads_and_defines_lengths(self):
        data = part10(el(0x0010, 0x0020, "LO", b"ABC") + b"")
        f = parse_file(data)
        assert write_file(f) == data
        assert parse_file(write_file(f, normalize=True)).dataset[Tag(0x10, 0x20)].value == b"ABC "
        sq = parse_file(_seq_fixture("1.2.840.10008.1.2.1", False, True, True))
        norm = parse_file(write_file(sq, normalize=True))
        assert not norm.dataset[Tag(8, 0x1140)].undefined_length
        assert [i[Tag(8, 0x1155)].text for i in norm.dataset[Tag(8, 0x1140)].items] == ["1.2.3.1", "1.2.3.22"]


class TestAccessors:
    def test_remove_absent(self):
        assert remove_element(DataSet(), Tag(0x10, 0x10)) is False

    def test_set_then_get_lookup_value(self):
        ds = DataSet()
        set_value(ds, Tag(0x0010, 0x0010), "0000001")
        assert get_element(ds, Tag(0x10, 0x10)).text == "0000001"
        assert ds[Tag(0x10, 0x10)].vr == "PN"

    def test_set_then_remove(self):
        ds = DataSet()
        set_value(ds, "(0010,0020)", "X")
        assert remove_element(ds, "(0010,0020)")
        assert get_element(ds, "(0010,0020)") is None

    def test_unknown_tag_gets_un_and_rejects_text(self):
        ds = DataSet()
        with pytest.raises(VrMismatch):
            set_value(ds, Tag(0x0009, 0x1001), "x")

    def test_binary_vr_mismatch(self):
        ds = DataSet([DataElement(Tag(0x28, 0x10), "US", b"\x04\x00")])
        with pytest.raises(VrMismatch):
            set_value(ds, Tag(0x28, 0x10), "4")

    def test_inserted_tags_stay_sorted(self):
        ds = DataSet()
        for t in [(0x10, 0x20), (0x8, 0x60), (0x10, 0x10)]:
            set_value(ds, Tag(*t), "A")
        assert ds.is_sorted()


class TestWalk:
    def _count(self, ds):
        seen = []
        walk(ds, lambda e, p: seen.append((e.tag, p)))
        return seen

    def test_flat(self):
        ds = DataSet([DataElement(Tag(8, i), "CS", b"AB") for i in (1, 2, 3)])
        assert len(self._count(ds)) == 3

    def test_sequence_2x2(self):
        from dicom_deid.dicom import SequenceItem
        items = [SequenceItem([DataElement(Tag(8, 0x1150), "UI", b"1\0"),
                               DataElement(Tag(8, 0x1155), "UI", b"2\0")]) for _ in range(2)]
        ds = DataSet([DataElement(Tag(8, 0x1140), "SQ", items=items)])
        seen = self._count(ds)
        assert len(seen) == 5
        assert seen[-1][1] == ((Tag(8, 0x1140), 1),)

    def test_empty(self):
        assert self._count(DataSet()) == []


class TestPixels:
    def _image(self, rows=4, cols=4, ts="1.2.840.10008.1.2.1", little=True, bits=8):
        kw = dict(little=little)
        e = "<" if little else ">"
        n = rows * cols * bits // 8
        ds = (el(0x28, 0x02, "US", struct.pack(e + "H", 1), **kw)
              + el(0x28, 0x10, "US", struct.pack(e + "H", rows), **kw)
              + el(0x28, 0x11, "US", struct.pack(e + "H", cols), **kw)
              + el(0x28, 0x100, "US", struct.pack(e + "H", bits), **kw)
              + el(0x7FE0, 0x10, "OW", bytes(range(1, n + 1)), **kw))
        return parse_file(part10(ds, ts=ts))

    def test_get_4x4(self):
        m = get_pixels(self._image())
        assert len(m.data) == 16 and m.array().shape == (1, 4, 4, 1)

    def test_put_wrong_length(self):
        f = self._image()
        m = get_pixels(f)
        m.data = bytearray(15)
        with pytest.raises(DimensionMismatch):
            put_pixels(f, m)

    def test_absent(self):
        assert get_pixels(parse_file(part10(b""))) is None

    def test_big_endian_16bit_view(self):
        f = self._image(ts=EXPLICIT_VR_BE, little=False, bits=16)
        arr = get_pixels(f).array()
        assert arr[0, 0, 0, 0] == 0x0102


_text_vr = st.sampled_from(["LO", "SH", "CS", "UI", "PN", "DA"])


def _seen_vr(g, e, vr, implicit):
    # implicit VR files carry no VR; a reader falls back to the dictionary
    return dictionary_vr(Tag(g, e)) if implicit else vr


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0x0004, 0x0020).map(lambda g: g * 2),
                          st.integers(1, 0x2000), _text_vr,
                          st.text(st.characters(min_codepoint=33, max_codepoint=126), max_size=12)),
                unique_by=lambda t: (t[0], t[1]), max_size=12)
       .filter(lambda els: all(dictionary_vr(Tag(g, e)) != "SQ" for g, e, _, _ in els)),
       st.sampled_from(SYNTAXES))
def test_roundtrip_property(elements, syntax):
    ts, implicit, little = syntax
    elements = sorted(elements)
    body = b"".join(
        el(g, e, vr, text(v, b"\0" if _seen_vr(g, e, vr, implicit) == "UI" else b" "),
           implicit=implicit, little=little)
        for g, e, vr, v in elements
    )
    data = part10(body, ts=ts)
    f = parse_file(data)
    assert write_file(f) == data
    assert parse_file(write_file(f)) == f
    # independent flat count of element headers matches walk
    assert len(list(iter(f.dataset))) == len(elements)
    for e in f.dataset:
        assert len(e.value) % 2 == 0
        if e.is_text:
            before = e.value
            e.set_text(e.text)
            assert e.value == before

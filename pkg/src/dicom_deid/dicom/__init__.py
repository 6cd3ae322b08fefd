"""Minimal DICOM Part-10 codec: parse, edit, re-serialize."""

from .dataset import (
    DataElement,
    DataSet,
    DicomFile,
    SequenceItem,
    as_tag,
    format_locus,
    get_element,
    iter_elements,
    parse_locus,
    remove_element,
    resolve_locus,
    set_value,
    walk,
)
from .errors import (
    BadMagic,
    CompressedPixelData,
    DicomError,
    DimensionMismatch,
    OddTagOrder,
    TruncatedFile,
    UnsupportedTransferSyntax,
    VrMismatch,
)
from .io import (
    EXPLICIT_VR_BE,
    EXPLICIT_VR_LE,
    IMPLICIT_VR_LE,
    parse_file,
    read_file,
    save_file,
    write_file,
)
from .pixels import PixelMatrix, get_pixels, put_pixels, read_int
from .tag import PIXEL_DATA, Tag, dictionary_vr

__all__ = [
    "BadMagic", "CompressedPixelData", "DataElement", "DataSet", "DicomError",
    "DicomFile", "DimensionMismatch", "EXPLICIT_VR_BE", "EXPLICIT_VR_LE",
    "IMPLICIT_VR_LE", "OddTagOrder", "PIXEL_DATA", "PixelMatrix", "SequenceItem",
    "Tag", "TruncatedFile", "UnsupportedTransferSyntax", "VrMismatch", "as_tag",
    "dictionary_vr", "format_locus", "get_element", "get_pixels", "iter_elements",
    "parse_file", "parse_locus", "put_pixels", "read_file", "read_int",
    "remove_element", "resolve_locus", "save_file", "set_value", "walk",
    "write_file",
]

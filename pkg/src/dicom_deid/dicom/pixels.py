"""Access to native (uncompressed) pixel data."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import DataSet, DicomFile
from .errors import CompressedPixelData, DicomError, DimensionMismatch
from .tag import PIXEL_DATA, Tag

ROWS = Tag(0x0028, 0x0010)
COLUMNS = Tag(0x0028, 0x0011)
SAMPLES_PER_PIXEL = Tag(0x0028, 0x0002)
PLANAR_CONFIGURATION = Tag(0x0028, 0x0006)
NUMBER_OF_FRAMES = Tag(0x0028, 0x0008)
BITS_ALLOCATED = Tag(0x0028, 0x0100)


@dataclass
class PixelMatrix:
    rows: int
    columns: int
    samples_per_pixel: int
    bits_allocated: int
    number_of_frames: int
    data: bytearray
    planar_configuration: int = 0
    little_endian: bool = True

    def __post_init__(self):
        if self.bits_allocated % 8:
            raise DicomError(f"bit-packed pixel data ({self.bits_allocated} bits) unsupported")
        if len(self.data) != self.expected_length:
            raise DimensionMismatch(
                f"buffer has {len(self.data)} bytes, geometry needs {self.expected_length}"
            )

    @property
    def expected_length(self) -> int:
        return (self.rows * self.columns * self.samples_per_pixel
                * (self.bits_allocated // 8) * self.number_of_frames)

    @property
    def dtype(self) -> np.dtype:
        order = "<" if self.little_endian else ">"
        return np.dtype(f"{order}u{self.bits_allocated // 8}")

    def array(self) -> np.ndarray:
        """Writable view shaped ``(frames, rows, columns, samples)``."""
        flat = np.frombuffer(self.data, dtype=self.dtype)
        if self.planar_configuration == 1 and self.samples_per_pixel > 1:
            planes = flat.reshape(self.number_of_frames, self.samples_per_pixel,
                                  self.rows, self.columns)
            return planes.transpose(0, 2, 3, 1)
        return flat.reshape(self.number_of_frames, self.rows, self.columns,
                            self.samples_per_pixel)

    def copy(self) -> PixelMatrix:
        return PixelMatrix(self.rows, self.columns, self.samples_per_pixel,
                           self.bits_allocated, self.number_of_frames,
                           bytearray(self.data), self.planar_configuration,
                           self.little_endian)


def read_int(ds: DataSet, tag: Tag, little_endian: bool, default: int | None = None) -> int | None:
    """Integer value of a US/UL/SS/SL/IS element, or ``default``."""
    el = ds.get(tag)
    if el is None or not el.value:
        return default
    order = "<" if little_endian else ">"
    if el.vr == "US":
        return struct.unpack_from(order + "H", el.value)[0]
    if el.vr == "UL":
        return struct.unpack_from(order + "I", el.value)[0]
    if el.vr == "SS":
        return struct.unpack_from(order + "h", el.value)[0]
    if el.vr == "SL":
        return struct.unpack_from(order + "i", el.value)[0]
    if el.vr in ("IS", "DS"):
        return int(float(el.text.strip().split("\\")[0]))
    if el.vr in ("UN", "OB", "OW") and len(el.value) == 2:
        return struct.unpack_from(order + "H", el.value)[0]
    raise DicomError(f"{tag} has non-integer VR {el.vr}")


def _geometry(f: DicomFile) -> dict:
    ds, little = f.dataset, f.is_little_endian
    rows = read_int(ds, ROWS, little)
    cols = read_int(ds, COLUMNS, little)
    bits = read_int(ds, BITS_ALLOCATED, little)
    if rows is None or cols is None or bits is None:
        raise DicomError("pixel data present but Rows/Columns/BitsAllocated missing")
    return dict(
        rows=rows,
        columns=cols,
        samples_per_pixel=read_int(ds, SAMPLES_PER_PIXEL, little, 1),
        bits_allocated=bits,
        number_of_frames=read_int(ds, NUMBER_OF_FRAMES, little, 1),
        planar_configuration=read_int(ds, PLANAR_CONFIGURATION, little, 0),
        little_endian=little,
    )


def _frame_bytes(geo: dict) -> int:
    return (geo["rows"] * geo["columns"] * geo["samples_per_pixel"]
            * (geo["bits_allocated"] // 8) * geo["number_of_frames"])


def get_pixels(f: DicomFile) -> PixelMatrix | None:
    el = f.dataset.get(PIXEL_DATA)
    if el is None:
        return None
    if el.undefined_length:
        raise CompressedPixelData("pixel data is encapsulated")
    geo = _geometry(f)
    need = _frame_bytes(geo)
    if len(el.value) < need:
        raise DimensionMismatch(f"pixel data has {len(el.value)} bytes, geometry needs {need}")
    return PixelMatrix(**geo, data=bytearray(el.value[:need]))


def put_pixels(f: DicomFile, matrix: PixelMatrix) -> None:
    """Replace the pixel buffer, keeping any trailing pad byte of the original."""
    el = f.dataset.get(PIXEL_DATA)
    if el is None:
        raise DicomError("file has no pixel data element")
    if el.undefined_length:
        raise CompressedPixelData("pixel data is encapsulated")
    need = _frame_bytes(_geometry(f))
    if len(matrix.data) != need:
        raise DimensionMismatch(f"matrix has {len(matrix.data)} bytes, file geometry needs {need}")
    el.value = bytes(matrix.data) + el.value[need:]

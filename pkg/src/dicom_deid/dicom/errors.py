"""Exceptions raised by the DICOM codec."""


class DicomError(Exception):
    """Base class for all codec errors."""


class TruncatedFile(DicomError):
    """The stream ended in the middle of an element."""


class BadMagic(DicomError):
    """No ``DICM`` marker after the preamble (strict mode)."""


class UnsupportedTransferSyntax(DicomError):
    """Dataset is encoded in a transfer syntax this codec does not handle."""


class OddTagOrder(DicomError):
    """Elements are not in ascending tag order (strict mode only)."""


class VrMismatch(DicomError):
    """Text value assigned to an element whose VR is binary."""


class CompressedPixelData(DicomError):
    """Pixel data is encapsulated; it cannot be read or redacted here."""


class DimensionMismatch(DicomError):
    """Pixel buffer size does not agree with the image geometry."""

"""De-identification of DICOM files: metadata rules, pseudonyms, pixel redaction."""

__version__ = "0.1.0"

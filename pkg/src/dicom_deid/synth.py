"""Synthetic DICOM corpus with planted PHI and a matching answer key.

Every identifier comes from bundled made-up vocabularies (syllable names,
invented clinics, 555 phone numbers), so the generator cannot emit a real
person's data. Output layout is ``<patient>/<study>/<series>/IMGnnnn.dcm``
plus ``.ocr.json`` sidecars for images with burned-in text,
``answer_key.csv`` and ``spec.lock``.
"""

from __future__ import annotations

import datetime as dt
import json
import random
import struct
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dicom import (
    EXPLICIT_VR_BE,
    EXPLICIT_VR_LE,
    IMPLICIT_VR_LE,
    DataElement,
    DataSet,
    DicomFile,
    SequenceItem,
    Tag,
    write_file,
)
from .dicom.dataset import encode_text
from .pseudonym import PATIENT_ID_WIDTH
from .redact import OcrWord, save_sidecar, sidecar_path
from .verify import AnswerKeyEntry, write_key

KEY_NAME = "answer_key.csv"
LOCK_NAME = "spec.lock"
UID_PREFIX = "1.2.826.0.1.3680043.10.543."
SYNTAXES = (IMPLICIT_VR_LE, EXPLICIT_VR_LE, EXPLICIT_VR_BE)
SOP_CLASSES = {"CT": "1.2.840.10008.5.1.4.1.1.2", "MR": "1.2.840.10008.5.1.4.1.1.4",
               "XR": "1.2.840.10008.5.1.4.1.1.7", "PET": "1.2.840.10008.5.1.4.1.1.128"}
MODALITY = {"CT": "CT", "MR": "MR", "XR": "DX", "PET": "PT"}
GLYPH_W, GLYPH_H, LINE_STEP = 4, 7, 10
FIRST_DATE, LAST_DATE = dt.date(2018, 1, 1), dt.date(2024, 12, 31)


class NonEmptyOutputDir(Exception):
    pass


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_patients: int = 3
    studies_per_patient: tuple[int, int] = (1, 2)
    series_per_study: tuple[int, int] = (1, 2)
    instances_per_series: tuple[int, int] = (1, 3)
    phi_density: float = 0.6
    burn_in_fraction: float = 0.3

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be at least 1")
        for name in ("studies_per_patient", "series_per_study", "instances_per_series"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must be a nonempty range of positive counts")
        for name in ("phi_density", "burn_in_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class GeneratedCorpus:
    root: Path
    files: list[Path] = field(default_factory=list)
    key: list[AnswerKeyEntry] = field(default_factory=list)
    # old patient ID -> surrogate expected from a fresh run (assigned in sorted order)
    patient_hints: dict[str, str] = field(default_factory=dict)


def _vocab() -> dict:
    text = resources.files("dicom_deid").joinpath("data/synth_vocab.json").read_text(encoding="utf-8")
    return json.loads(text)


def _txt(tag: Tag, vr: str, value: str) -> DataElement:
    return DataElement(tag, vr, encode_text(value, vr))


def _us(tag: Tag, value: int, little: bool) -> DataElement:
    return DataElement(tag, "US", struct.pack("<H" if little else ">H", value))


def T(group: int, element: int) -> Tag:
    return Tag(group, element)


class _Generator:
    def __init__(self, spec: SynthSpec, root: Path):
        self.spec = spec
        self.root = root
        self.rng = random.Random(spec.seed)
        self.np_rng = np.random.default_rng(self.rng.getrandbits(64))
        self.vocab = _vocab()
        self.corpus = GeneratedCorpus(root)
        self._uid_counter = 0
        self._used_names: set[str] = set()

    # --- vocabulary draws ---------------------------------------------------

    def uid(self) -> str:
        self._uid_counter += 1
        return f"{UID_PREFIX}{self.rng.randrange(10**8, 10**9)}.{self._uid_counter}"

    def word(self) -> str:
        syl = self.vocab["name_syllables"]
        # three syllables once two-syllable names start running out
        parts = 2 if len(self._used_names) < len(syl) ** 2 // 2 else 3
        while True:
            w = "".join(self.rng.choice(syl) for _ in range(parts))
            if w not in self._used_names:
                self._used_names.add(w)
                return w

    def phone(self) -> str:
        return f"555-{self.rng.randrange(200, 999)}-01{self.rng.randrange(0, 100):02d}"

    def date(self, lo=FIRST_DATE, hi=LAST_DATE) -> dt.date:
        return lo + dt.timedelta(days=self.rng.randrange((hi - lo).days + 1))

    def chance(self, p: float) -> bool:
        return self.rng.random() < p

    # --- key bookkeeping ----------------------------------------------------

    def check(self, rel: str, locus: str, check: str, expected: str, category: str, sub: str) -> None:
        self.corpus.key.append(AnswerKeyEntry(rel, locus, check, expected, category, sub))

    # --- corpus -------------------------------------------------------------

    def run(self) -> GeneratedCorpus:
        old_ids = set()
        while len(old_ids) < self.spec.n_patients:
            old_ids.add(str(self.rng.randrange(10**8, 10**10)))
        ordered = sorted(old_ids)
        self.corpus.patient_hints = {old: f"{i:0{PATIENT_ID_WIDTH}d}"
                                     for i, old in enumerate(ordered, start=1)}
        # draw order is independent of the sorted hint order
        for old in sorted(old_ids, key=lambda _: self.rng.random()):
            self.patient(old)
        self.corpus.files.sort()
        self.corpus.key.sort(key=lambda e: e.file)
        return self.corpus

    def patient(self, old_id: str) -> None:
        p = dict(
            id=old_id,
            last=self.word(), first=self.word(),
            birth=self.date(dt.date(1935, 1, 1), dt.date(2000, 12, 31)),
            sex=self.rng.choice("FMO"),
            creator_uid=self.uid(),
            address=f"{self.rng.randrange(10, 9999)} {self.rng.choice(self.vocab['streets'])} STREET",
            phone=self.phone(),
            other_id=f"OID{self.rng.randrange(10**5, 10**6)}",
        )
        for s in range(1, self.rng.randint(*self.spec.studies_per_patient) + 1):
            self.study(p, s)

    def study(self, p: dict, n: int) -> None:
        desc = self.rng.choice(self.vocab["study_descriptions"])
        kind = desc.split()[0]
        st = dict(
            n=n, uid=self.uid(), date=self.date(), desc=desc, kind=kind,
            accession=f"ACC{self.rng.randrange(10**5, 10**6)}",
            study_id=f"S{self.rng.randrange(1000, 9999)}",
            institution=f"{self.rng.choice(self.vocab['clinic_stems'])} CLINIC",
            referring=f"{self.word()}^{self.word()}",
            desc_phi=self.phi_suffix(p),
        )
        for s in range(1, self.rng.randint(*self.spec.series_per_study) + 1):
            self.series(p, st, s)

    def phi_suffix(self, p: dict) -> tuple[str, str] | None:
        """(text appended to a free-text value, token that must disappear)."""
        if not self.chance(self.spec.phi_density):
            return None
        kind = self.rng.randrange(6)
        if kind == 0:
            phone = self.phone()
            return phone, phone
        if kind == 1:
            doc = self.word()
            return f"DR {doc}", doc
        if kind == 2:
            return p["last"], p["last"]
        if kind == 3:
            d = self.date()
            text = f"{d.month:02d}/{d.day:02d}/{d.year}"
            return text, text
        if kind == 4:
            stem = self.rng.choice(self.vocab["clinic_stems"])
            return f"{stem} CLINIC", stem
        mail = f"{p['first'].lower()}@example.org"
        return mail, mail

    def series(self, p: dict, st: dict, n: int) -> None:
        little_syntax = self.rng.choice(SYNTAXES)
        multi = self.chance(0.25)
        se = dict(
            n=n, uid=self.uid(), frame_uid=self.uid(), syntax=little_syntax,
            desc=self.rng.choice(self.vocab["series_descriptions"]),
            desc_phi=self.phi_suffix(p),
            bits=self.rng.choice((8, 16)),
            frames=2 if multi else 1,
            rows=64, cols=self.rng.choice((96, 128)),
            manufacturer=self.rng.choice(self.vocab["manufacturers"]),
            body_part=self.rng.choice(self.vocab["body_parts"]),
            protocol=self.rng.choice(self.vocab["protocols"]),
        )
        previous_sop = None
        for i in range(1, self.rng.randint(*self.spec.instances_per_series) + 1):
            previous_sop = self.instance(p, st, se, i, previous_sop)

    def instance(self, p: dict, st: dict, se: dict, i: int, previous_sop: str | None) -> str:
        rel = f"{p['id']}/study{st['n']}/series{se['n']}/IMG{i:04d}.dcm"
        (self.root / rel).parent.mkdir(parents=True, exist_ok=True)
        syntax = se["syntax"]
        little = syntax != EXPLICIT_VR_BE
        sop_class = SOP_CLASSES[st["kind"]]
        sop = self.uid()
        phi = self.spec.phi_density
        ds = DataSet()
        chk = lambda locus, check, expected="", cat="dicom", sub="DICOM-IOD-1": self.check(  # noqa: E731
            rel, locus, check, expected, cat, sub)

        def add(tag: Tag, vr: str, value: str) -> None:
            ds.add(_txt(tag, vr, value))

        study_date = st["date"].strftime("%Y%m%d")
        add(T(0x0008, 0x0005), "CS", "ISO_IR 100")
        add(T(0x0008, 0x0008), "CS", "ORIGINAL\\PRIMARY\\AXIAL")
        chk("(0008,0008)", "text_retained", "ORIGINAL")
        add(T(0x0008, 0x0012), "DA", study_date)
        chk("(0008,0012)", "date_shifted", "", "hipaa", "HIPAA-C")
        add(T(0x0008, 0x0013), "TM", "101500")
        chk("(0008,0013)", "tag_retained", "", "tcia", "TCIA-REV")
        add(T(0x0008, 0x0014), "UI", p["creator_uid"])
        chk("(0008,0014)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
        chk("(0008,0014)", "uid_consistent", p["creator_uid"], "hipaa", "HIPAA-R")
        add(T(0x0008, 0x0016), "UI", sop_class)
        chk("(0008,0016)", "tag_retained")
        add(T(0x0008, 0x0018), "UI", sop)
        chk("(0008,0018)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
        chk("(0008,0018)", "uid_consistent", sop, "hipaa", "HIPAA-R")
        chk("(0002,0003)", "uid_consistent", sop, "hipaa", "HIPAA-R")
        add(T(0x0008, 0x0020), "DA", study_date)
        chk("(0008,0020)", "date_shifted", "", "hipaa", "HIPAA-C")
        add(T(0x0008, 0x0021), "DA", study_date)
        chk("(0008,0021)", "date_shifted", "", "hipaa", "HIPAA-C")
        add(T(0x0008, 0x0023), "DA", study_date)
        chk("(0008,0023)", "date_shifted", "", "hipaa", "HIPAA-C")
        stamp = f"{study_date}{self.rng.randrange(7, 19):02d}{self.rng.randrange(60):02d}00.{self.rng.randrange(10**6):06d}"
        add(T(0x0008, 0x002A), "DT", stamp)
        chk("(0008,002A)", "date_shifted", "", "hipaa", "HIPAA-C")
        add(T(0x0008, 0x0030), "TM", "101500")
        if self.chance(phi):
            add(T(0x0008, 0x0050), "SH", st["accession"])
            chk("(0008,0050)", "text_removed", st["accession"], "tcia", "TCIA-P15-BASIC-Z")
        add(T(0x0008, 0x0060), "CS", MODALITY[st["kind"]])
        chk("(0008,0060)", "text_notnull")
        add(T(0x0008, 0x0070), "LO", se["manufacturer"])
        chk("(0008,0070)", "tag_retained", "", "tcia", "TCIA-P15-DEV-K")
        if self.chance(phi):
            add(T(0x0008, 0x0080), "LO", st["institution"])
            chk("(0008,0080)", "text_removed", st["institution"].split()[0], "tcia", "TCIA-P15-BASIC-X")
        if self.chance(phi):
            addr = f"{p['address']}, {self.rng.choice(self.vocab['clinic_stems'])}"
            add(T(0x0008, 0x0081), "ST", addr)
            chk("(0008,0081)", "text_removed", p["address"], "hipaa", "HIPAA-B")
        if self.chance(phi):
            add(T(0x0008, 0x0090), "PN", st["referring"])
            chk("(0008,0090)", "text_removed", st["referring"].split("^")[0], "tcia", "TCIA-P15-BASIC-Z")
        if self.chance(phi):
            phone = self.phone()
            add(T(0x0008, 0x0094), "SH", phone)
            chk("(0008,0094)", "text_removed", phone, "hipaa", "HIPAA-D")
        if self.chance(phi):
            station = f"STN{self.rng.randrange(100, 999)}"
            add(T(0x0008, 0x1010), "SH", station)
            chk("(0008,1010)", "text_removed", station, "tcia", "TCIA-P15-BASIC-X/Z/D")
        self.free_text(ds, chk, T(0x0008, 0x1030), "LO", st["desc"], st["desc_phi"], "(0008,1030)")
        self.free_text(ds, chk, T(0x0008, 0x103E), "LO", se["desc"], se["desc_phi"], "(0008,103E)")
        if self.chance(phi):
            op = f"{self.word()}^{self.word()}"
            add(T(0x0008, 0x1070), "PN", op)
            chk("(0008,1070)", "text_removed", op.split("^")[0], "tcia", "TCIA-P15-BASIC-X")
        if previous_sop is not None:
            item = SequenceItem([_txt(T(0x0008, 0x1150), "UI", sop_class),
                                 _txt(T(0x0008, 0x1155), "UI", previous_sop)],
                                undefined_length=self.chance(0.5))
            ds.add(DataElement(T(0x0008, 0x1140), "SQ", b"", [item], undefined_length=self.chance(0.5)))
            chk("(0008,1140)[0]/(0008,1150)", "tag_retained")
            chk("(0008,1140)[0]/(0008,1155)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
            chk("(0008,1140)[0]/(0008,1155)", "uid_consistent", previous_sop, "hipaa", "HIPAA-R")
        if self.chance(phi):
            add(T(0x0009, 0x0010), "LO", "SYNTHCO")
            add(T(0x0009, 0x1001), "LO", f"{p['last']}^{p['first']}")
            chk("(0009,1001)", "text_removed", p["last"], "tcia", "TCIA-PTKB-X")
        name = f"{p['last']}^{p['first']}"
        add(T(0x0010, 0x0010), "PN", name)
        chk("(0010,0010)", "patid_consistent", p["id"], "dicom", "DICOM-P15-BASIC-C")
        add(T(0x0010, 0x0020), "LO", p["id"])
        chk("(0010,0020)", "patid_consistent", p["id"], "dicom", "DICOM-P15-BASIC-C")
        add(T(0x0010, 0x0030), "DA", p["birth"].strftime("%Y%m%d"))
        chk("(0010,0030)", "date_shifted", "", "hipaa", "HIPAA-C")
        add(T(0x0010, 0x0040), "CS", p["sex"])
        chk("(0010,0040)", "tag_retained", "", "tcia", "TCIA-P15-PAT-K")
        if self.chance(phi):
            add(T(0x0010, 0x1000), "LO", p["other_id"])
            chk("(0010,1000)", "text_removed", p["other_id"], "tcia", "TCIA-P15-BASIC-X/Z/D")
        age = min(89, (st["date"] - p["birth"]).days // 365)
        add(T(0x0010, 0x1010), "AS", f"{age:03d}Y")
        chk("(0010,1010)", "tag_retained", "", "tcia", "TCIA-P15-PAT-K")
        if self.chance(phi):
            add(T(0x0010, 0x1040), "LO", p["address"])
            chk("(0010,1040)", "text_removed", p["address"], "hipaa", "HIPAA-B")
        if self.chance(phi):
            add(T(0x0010, 0x2154), "SH", p["phone"])
            chk("(0010,2154)", "text_removed", p["phone"], "hipaa", "HIPAA-D")
        add(T(0x0018, 0x0015), "CS", se["body_part"])
        chk("(0018,0015)", "text_retained", se["body_part"], "tcia", "TCIA-P15-MOD-C")
        add(T(0x0018, 0x0050), "DS", "1.25")
        chk("(0018,0050)", "tag_retained", "", "dicom", "DICOM-IOD-2")
        if self.chance(phi):
            serial = f"SN{self.rng.randrange(10**5, 10**6)}"
            add(T(0x0018, 0x1000), "LO", serial)
            chk("(0018,1000)", "text_removed", serial, "tcia", "TCIA-P15-BASIC-X")
        self.free_text(ds, chk, T(0x0018, 0x1030), "LO", se["protocol"], None, "(0018,1030)",
                       sub="TCIA-P15-MOD-C")
        add(T(0x0020, 0x000D), "UI", st["uid"])
        chk("(0020,000D)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
        chk("(0020,000D)", "uid_consistent", st["uid"], "hipaa", "HIPAA-R")
        chk("(0020,000D)", "text_notnull")
        add(T(0x0020, 0x000E), "UI", se["uid"])
        chk("(0020,000E)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
        chk("(0020,000E)", "uid_consistent", se["uid"], "hipaa", "HIPAA-R")
        if self.chance(phi):
            add(T(0x0020, 0x0010), "SH", st["study_id"])
            chk("(0020,0010)", "text_removed", st["study_id"], "tcia", "TCIA-P15-BASIC-Z")
        add(T(0x0020, 0x0011), "IS", str(se["n"]))
        add(T(0x0020, 0x0013), "IS", str(i))
        chk("(0020,0013)", "tag_retained")
        add(T(0x0020, 0x0052), "UI", se["frame_uid"])
        chk("(0020,0052)", "uid_changed", "", "dicom", "DICOM-P15-BASIC-U")
        chk("(0020,0052)", "uid_consistent", se["frame_uid"], "hipaa", "HIPAA-R")
        comment = self.rng.choice(self.vocab["comments"])
        self.free_text(ds, chk, T(0x0020, 0x4000), "LT", comment, self.phi_suffix(p), "(0020,4000)")

        self.pixels(ds, chk, rel, p, st, se, little)
        meta = DataSet([
            DataElement(T(0x0002, 0x0000), "UL", b"\x00\x00\x00\x00"),
            DataElement(T(0x0002, 0x0001), "OB", b"\x00\x01"),
            _txt(T(0x0002, 0x0002), "UI", sop_class),
            _txt(T(0x0002, 0x0003), "UI", sop),
            _txt(T(0x0002, 0x0010), "UI", syntax),
            _txt(T(0x0002, 0x0012), "UI", UID_PREFIX + "1"),
            _txt(T(0x0002, 0x0013), "SH", f"DICOM_DEID_{__version__}".replace(".", "")[:16]),
        ])
        (self.root / rel).write_bytes(write_file(DicomFile(None, meta, ds)))
        self.corpus.files.append(Path(rel))
        return sop

    def free_text(self, ds, chk, tag, vr, clinical, phi, locus, sub="TCIA-P15-DESC-C") -> None:
        value = clinical if phi is None else f"{clinical} - {phi[0]}"
        ds.add(_txt(tag, vr, value))
        chk(locus, "text_retained", clinical, "tcia", sub)
        if phi is not None:
            chk(locus, "text_removed", phi[1], "tcia", sub)

    def pixels(self, ds, chk, rel, p, st, se, little) -> None:
        rows, cols, frames, bits = se["rows"], se["cols"], se["frames"], se["bits"]
        top = 255 if bits == 8 else 4095
        add_us = lambda g, e, v: ds.add(_us(T(g, e), v, little))  # noqa: E731
        add_us(0x0028, 0x0002, 1)
        ds.add(_txt(T(0x0028, 0x0004), "CS", "MONOCHROME2"))
        if frames > 1:
            ds.add(_txt(T(0x0028, 0x0008), "IS", str(frames)))
        add_us(0x0028, 0x0010, rows)
        chk("(0028,0010)", "tag_retained", "", "dicom", "DICOM-IOD-2")
        add_us(0x0028, 0x0011, cols)
        chk("(0028,0011)", "tag_retained", "", "dicom", "DICOM-IOD-2")
        add_us(0x0028, 0x0100, bits)
        add_us(0x0028, 0x0101, 8 if bits == 8 else 12)
        add_us(0x0028, 0x0102, 7 if bits == 8 else 11)
        add_us(0x0028, 0x0103, 0)

        arr = self.np_rng.integers(1, top, size=(frames, rows, cols, 1), endpoint=False)
        phi_boxes: list[tuple[str, tuple[int, int, int, int]]] = []
        if self.chance(self.spec.burn_in_fraction):
            words = self.burn_in(arr, p, st, top, frames, phi_boxes)
            save_sidecar(words, sidecar_path(self.root / rel))
        for frame, box in phi_boxes:
            chk("pixel:{}:{},{},{},{}".format(frame, *box), "pixels_hidden", "", "hipaa", "HIPAA-A")
        excluded = ";".join("{}:{},{},{},{}".format(frame, *box) for frame, box in phi_boxes)
        chk("pixels", "pixels_retained", excluded, "tcia", "TCIA-P15-PIX-K")
        dtype = np.dtype(("<" if little else ">") + ("u1" if bits == 8 else "u2"))
        ds.add(DataElement(T(0x7FE0, 0x0010), "OB" if bits == 8 else "OW",
                           arr.astype(dtype).tobytes()))

    def burn_in(self, arr, p, st, top, frames, phi_boxes) -> list[OcrWord]:
        phi_tokens = [f"{p['last']}^{p['first']}", p["id"],
                      st["date"].strftime("%Y-%m-%d"), p["phone"]]
        _, rows, cols, _ = arr.shape
        phi_tokens = [t for t in phi_tokens if GLYPH_W * len(t) + 6 < cols]
        chosen = self.rng.sample(phi_tokens, self.rng.randint(1, 2))
        plain = self.rng.sample(self.vocab["burned_words"], self.rng.randint(0, 2))
        lines = [(t, True) for t in chosen] + [(t, False) for t in plain]
        self.rng.shuffle(lines)
        words = []
        for n, (text, is_phi) in enumerate(lines):
            width = GLYPH_W * len(text) + 2
            x0 = self.rng.randrange(2, cols - width - 1)
            y0 = 2 + n * LINE_STEP
            box = (x0, y0, x0 + width, y0 + GLYPH_H)
            frame = None if frames == 1 or self.chance(0.5) else self.rng.randrange(frames)
            target = arr if frame is None else arr[frame:frame + 1]
            # glyph-like strokes: bright columns with a background gap every fourth column
            for x in range(box[0] + 1, box[2] - 1):
                if (x - box[0]) % GLYPH_W != 0:
                    target[:, box[1] + 1:box[3] - 1, x, :] = top
            words.append(OcrWord(text, *box, frame))
            if is_phi:
                phi_boxes.append(("*" if frame is None else str(frame), box))
        return words


def generate(spec: SynthSpec, out_dir: str | Path) -> GeneratedCorpus:
    """Write a corpus for ``spec`` into ``out_dir``, which must be empty or absent."""
    root = Path(out_dir)
    if root.exists() and any(root.iterdir()):
        raise NonEmptyOutputDir(f"{root} is not empty")
    root.mkdir(parents=True, exist_ok=True)
    corpus = _Generator(spec, root).run()
    write_key(corpus.key, root / KEY_NAME)
    lock = {"generator": f"dicom_deid {__version__}", "spec": asdict(spec),
            "patient_hints": corpus.patient_hints}
    (root / LOCK_NAME).write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return corpus


def load_lock(path: str | Path) -> SynthSpec:
    data = json.loads(Path(path).read_text(encoding="utf-8"))["spec"]
    for name in ("studies_per_patient", "series_per_study", "instances_per_series"):
        data[name] = tuple(data[name])
    return SynthSpec(**data)

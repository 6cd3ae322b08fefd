import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicom_deid.scrub import (
    PATIENT_CONTEXT,
    BadPattern,
    Recognizer,
    Span,
    builtin_recognizers,
    load_lists,
    scrub_value,
)


@pytest.fixture(scope="module")
def builtin():
    return load_lists()


@pytest.fixture
def lists(tmp_path):
    def make(allow=(), deny=(), patterns=None):
        a, d = tmp_path / "allow.txt", tmp_path / "deny.txt"
        a.write_text("# allow\n" + "\n".join(allow) + "\n")
        d.write_text("\n".join(deny) + "\n")
        p = None
        if patterns is not None:
            p = tmp_path / "patterns.txt"
            p.write_text(patterns)
        return load_lists(a, d, p)
    return make


def test_battery_size():
    pats = [r for r in builtin_recognizers() if r.kind == "PATTERN"]
    assert len(pats) >= 20


def test_read_by_doctor_with_phone(builtin):
    res = scrub_value(builtin, "READ BY DR SMITH 555-867-5309")
    assert res.output == "READ"
    # hand-resolved: "BY DR SMITH" = [5,16), phone = [17,29)
    assert [(s.start, s.end) for s in res.spans] == [(5, 16), (17, 29)]
    assert res.spans[1].recognizer == "PHONE"


def test_empty(builtin):
    assert scrub_value(builtin, "") .output == ""
    assert scrub_value(builtin, "").spans == []


def test_nothing_fires(builtin):
    res = scrub_value(builtin, "CHEST PA AND LATERAL")
    assert res.output == "CHEST PA AND LATERAL" and res.spans == []


def test_deny_list_term(lists):
    recs = lists(deny=["ST. MARY"])
    res = scrub_value(recs, "SEEN AT ST. MARY CLINIC")
    assert "MARY" not in res.output
    assert any("DENY_LIST" in s.recognizer for s in res.spans)


def test_allow_list_keeps_honorific_lookalike(lists):
    assert scrub_value(lists(allow=["MR"]), "MR BRAIN W/O CONTRAST").output == "MR BRAIN W/O CONTRAST"


def test_allow_list_beats_deny(lists):
    assert scrub_value(lists(allow=["LATERAL"], deny=["LATERAL"]), "CHEST PA AND LATERAL").spans == []


def test_allow_list_does_not_stop_patterns(lists):
    recs = lists(allow=["555-867-5309"])
    assert scrub_value(recs, "CALL 555-867-5309").output == "CALL"


def test_patient_context(builtin):
    res = scrub_value(builtin, "COMPARISON FOR QUILLON PT", ["QUILLON^ARVEN", "X12"])
    assert res.output == "COMPARISON FOR PT"
    assert res.spans[0].recognizer == PATIENT_CONTEXT


def test_patient_id_inside_text(builtin):
    res = scrub_value(builtin, "ID AB1234 FOLLOWUP", ["AB1234"])
    assert res.output == "ID FOLLOWUP"


def test_pn_form_merges_across_caret(builtin):
    res = scrub_value(builtin, "PT ZORVEX^LIRA^^^ CT", ["ZORVEX^LIRA"])
    assert res.output == "PT CT"


def test_custom_pattern_file(lists):
    recs = lists(patterns="# site ids\nSITE\tSITE-\\d{3}\n")
    assert scrub_value(recs, "SCANNED SITE-042").output == "SCANNED"


def test_bad_pattern_names_line(lists):
    with pytest.raises(BadPattern, match=":2:"):
        lists(patterns="OK\tA\nBROKEN\t(unclosed\n")
    with pytest.raises(BadPattern):
        lists(patterns="no tab here\n")


@pytest.mark.parametrize("text,gone", [
    ("CALL (555) 867-5309", "867"),
    ("SSN 123-45-6789", "6789"),
    ("MRN: A778812", "A778812"),
    ("ACCT# 99817", "99817"),
    ("SEE http://clinic.example.org/p/1", "example"),
    ("HOST 10.2.3.4", "10.2.3.4"),
    ("12 ELM STREET", "ELM"),
    ("SPRINGFIELD, IL 62704", "62704"),
    ("DOB 1960-04-02", "1960"),
    ("SCAN MARCH 3, 2021", "2021"),
    ("AGE 93 YO", "93"),
    ("SEEN AT GREENFIELD CLINIC", "GREENFIELD"),
    ("OUTSIDE FILM FROM BRAMBLE HOSPITAL", "BRAMBLE"),
])
def test_builtin_classes(builtin, text, gone):
    assert gone not in scrub_value(builtin, text).output


def _delete_and_collapse(value, spans):
    keep = [True] * len(value)
    for s in spans:
        for i in range(s.start, s.end):
            keep[i] = False
    text = "".join(c for c, k in zip(value, keep) if k)
    return re.sub(" +", " ", text).strip(" ")


alphabet = st.sampled_from(list("ABCDEFGHIJKLMNOPQRSTUVWXYZabcxyz0123456789 ^/-.():,#@") +
                           [" AT ", " BY ", " DR ", " MR ", "555-", "2021", " CLINIC", "^"])


@settings(max_examples=400, deadline=None)
@given(st.lists(alphabet, max_size=40).map("".join), st.lists(st.sampled_from(["ABC", "X9", "DOE^JO"]), max_size=2))
def test_idempotent_and_consistent(value, context):
    recs = _BUILTIN
    first = scrub_value(recs, value, context)
    assert scrub_value(recs, first.output, context).output == first.output
    if first.spans:
        assert _delete_and_collapse(value, first.spans) == first.output
        for a, b in zip(first.spans, first.spans[1:]):
            assert a.end <= b.start


_BUILTIN = load_lists()


def test_recognizer_kind_validated():
    with pytest.raises(ValueError):
        Recognizer("x", "REGEX", "a")
    assert isinstance(Span(0, 1, "x"), tuple)


def test_shipped_allow_list_is_default():
    assert scrub_value(load_lists(), "MR BRAIN W/O CONTRAST").output == "MR BRAIN W/O CONTRAST"
    assert scrub_value(load_lists(defaults=False), "MR BRAIN W/O CONTRAST").output == ""

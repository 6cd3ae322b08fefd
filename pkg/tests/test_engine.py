import logging
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicom_deid.dicom import Tag, iter_elements, parse_file, resolve_locus, write_file
from dicom_deid.engine import apply_rules, element_digest
from dicom_deid.pseudonym import DateShiftTable, PatientIdMap, PseudonymContext
from dicom_deid.ruleset import (
    ActionCode,
    MalformedPattern,
    MissingDefaults,
    RulesetError,
    TagPattern,
    load_ruleset,
    parse_code,
    parse_ruleset,
)
from dicom_deid.scrub import load_lists

from handenc import el, item, part10, text

HEAD = "@default_public KEEP\n@default_private X\n"
RECS = load_lists()
_t = Tag
SOP = "1.2.826.0.1.3680043.2.1125.1.11"
STUDY = "1.2.826.0.1.3680043.2.1125.1.22"


def sample_bytes(bad_date=False):
    ref = item(el(0x0008, 0x1150, "UI", text("1.2.840.10008.5.1.4.1.1.7", b"\0"))
               + el(0x0008, 0x1155, "UI", text(STUDY + ".9", b"\0")))
    body = (
        el(0x0008, 0x0018, "UI", text(SOP, b"\0"))
        + el(0x0008, 0x0021, "DA", text("20240102"))
        + el(0x0008, 0x0022, "DA", text("20241301" if bad_date else "20240103"))
        + el(0x0008, 0x0080, "LO", text("GENERAL HOSPITAL"))
        + el(0x0008, 0x1030, "LO", text("CT CHEST DOE 555-867-5309"))
        + el(0x0008, 0x1140, "SQ", ref)
        + el(0x0009, 0x0010, "LO", text("ACME"))
        + el(0x0009, 0x1001, "LO", text("SECRET"))
        + el(0x0010, 0x0010, "PN", text("DOE^JANE"))
        + el(0x0010, 0x0020, "LO", text("1059030585"))
        + el(0x0020, 0x000D, "UI", text(STUDY, b"\0"))
    )
    return part10(body, sop_inst=SOP)


def context(offset=1):
    pm = PatientIdMap()
    pm.assign("1059030585")
    return PseudonymContext(pm, shift_table=DateShiftTable({"0000001": offset}))


class TestRuleset:
    def test_remove_line(self):
        rs = parse_ruleset(HEAD + "(0008,0080) X\n")
        assert rs.action_for(_t(0x0008, 0x0080)) is ActionCode.REMOVE

    def test_lookup_line(self):
        assert parse_ruleset(HEAD + "(0010,0020) LOOKUP\n").action_for(_t(0x10, 0x20)) is ActionCode.LOOKUP_PATIENT

    def test_defaults_only(self):
        rs = parse_ruleset(HEAD)
        assert rs.action_for(_t(0x0008, 0x0060)) is ActionCode.KEEP
        assert rs.action_for(_t(0x0009, 0x1001)) is ActionCode.REMOVE

    @pytest.mark.parametrize("code,want", [
        ("X/Z/D", ActionCode.REMOVE), ("Z/D", ActionCode.ZERO), ("K", ActionCode.KEEP),
        ("hashuid(@UIDROOT, this)", ActionCode.HASH_UID), ("C", ActionCode.CLEAN_TEXT),
        ("incrementdate(this, @DATEINC)", ActionCode.INCREMENT_DATE), ("U", ActionCode.HASH_UID),
    ])
    def test_codes(self, code, want):
        assert parse_code(code) is want

    def test_pattern_text(self):
        assert TagPattern.parse("(50xx,XXXX)").text == "(50xx,xxxx)"

    def test_wildcard(self):
        rs = parse_ruleset(HEAD + "(50xx,xxxx) X\n")
        assert rs.action_for(_t(0x5012, 0x3000)) is ActionCode.REMOVE
        assert rs.action_for(_t(0x6012, 0x3000)) is ActionCode.KEEP

    def test_first_match_wins(self):
        rs = parse_ruleset(HEAD + "(0008,0080) K\n(0008,00xx) X\n")
        assert rs.action_for(_t(0x0008, 0x0080)) is ActionCode.KEEP
        assert rs.action_for(_t(0x0008, 0x0081)) is ActionCode.REMOVE

    def test_toplevel_only(self):
        rs = parse_ruleset(HEAD + "(0008,1155) X toplevel\n")
        assert rs.action_for(_t(0x0008, 0x1155)) is ActionCode.REMOVE
        assert rs.action_for(_t(0x0008, 0x1155), nested=True) is ActionCode.KEEP

    def test_duplicate_warns_first_wins(self, caplog):
        with caplog.at_level(logging.WARNING):
            rs = parse_ruleset(HEAD + "(0008,0080) X\n(0008,0080) K\n")
        assert "duplicate" in caplog.text
        assert rs.action_for(_t(0x0008, 0x0080)) is ActionCode.REMOVE

    @pytest.mark.parametrize("bad", ["(0008,008) X", "(0008,00G0) X", "0008,0080 X"])
    def test_malformed_pattern(self, bad):
        with pytest.raises(MalformedPattern):
            parse_ruleset(HEAD + bad + "\n")

    def test_missing_defaults(self):
        with pytest.raises(MissingDefaults):
            parse_ruleset("@default_public KEEP\n(0008,0080) X\n")

    def test_lookup_default_rejected(self):
        with pytest.raises(RulesetError):
            parse_ruleset("@default_public LOOKUP\n@default_private X\n")

    def test_uid_root_directive(self):
        rs = parse_ruleset(HEAD + "@uid_root 2.25.{patient_id_new}.\n")
        assert rs.uid_root_template == "2.25.{patient_id_new}."
        with pytest.raises(RulesetError):
            parse_ruleset(HEAD + "@uid_root 2.25.\n")

    def test_bundled_default(self):
        rs = load_ruleset()
        for tag in [(0x0008, 0x0080), (0x0008, 0x0081), (0x0008, 0x0094), (0x0008, 0x0201)]:
            assert rs.action_for(_t(*tag)) is ActionCode.REMOVE
        for tag in [(0x0008, 0x0014), (0x0008, 0x0018), (0x0008, 0x1155), (0x0008, 0x3010),
                    (0x0020, 0x000D)]:
            assert rs.action_for(_t(*tag)) is ActionCode.HASH_UID
        for tag in [(0x0008, 0x0012), (0x0008, 0x0020), (0x0008, 0x0021), (0x0008, 0x0022),
                    (0x0008, 0x0023)]:
            assert rs.action_for(_t(*tag)) is ActionCode.INCREMENT_DATE
        assert rs.action_for(_t(0x0010, 0x0010)) is ActionCode.LOOKUP_PATIENT
        assert rs.action_for(_t(0x0010, 0x0020)) is ActionCode.LOOKUP_PATIENT
        assert rs.action_for(_t(0x0008, 0x0016)) is ActionCode.KEEP


class TestApply:
    def run(self, rules_text=None, bad_date=False, ctx=None):
        f = parse_file(sample_bytes(bad_date))
        rs = load_ruleset() if rules_text is None else parse_ruleset(rules_text)
        ctx = ctx or context()
        return f, apply_rules(f, rs, ctx, RECS, file_id="p/s/x/1.dcm"), ctx

    def test_examples(self):
        f, _, ctx = self.run()
        ds = f.dataset
        assert ds.get(_t(0x0008, 0x0080)) is None
        assert ds[_t(0x0010, 0x0020)].text == "0000001"
        assert ds[_t(0x0010, 0x0010)].text == "0000001"
        assert ds[_t(0x0008, 0x0021)].text == "20240101"
        assert ds.get(_t(0x0009, 0x1001)) is None and ds.get(_t(0x0009, 0x0010)) is None
        assert ds[_t(0x0008, 0x1030)].text == "CT CHEST"

    def test_uids_consistent_with_meta(self):
        f, _, ctx = self.run()
        new_sop = f.dataset[_t(0x0008, 0x0018)].text.rstrip("\0")
        assert new_sop == ctx.uid_map.get(SOP)
        assert f.file_meta[_t(0x0002, 0x0003)].text.rstrip("\0") == new_sop
        nested = resolve_locus(f.dataset, "(0008,1140)[0]/(0008,1155)")
        assert re.match(r"^1\.2\.397\.4\.5\.0000001\.8\.117\.\d{19}$", nested.text.rstrip("\0"))
        # transfer syntax and class UIDs untouched
        assert f.file_meta[_t(0x0002, 0x0010)].text.rstrip("\0") == "1.2.840.10008.1.2.1"
        assert resolve_locus(f.dataset, "(0008,1140)[0]/(0008,1150)").text.rstrip("\0") \
            == "1.2.840.10008.5.1.4.1.1.7"

    def test_no_element_escapes(self):
        f = parse_file(sample_bytes())
        visits = len(list(iter_elements(f.file_meta))) + len(list(iter_elements(f.dataset)))
        log = apply_rules(f, load_ruleset(), context(), RECS)
        assert len(log) == visits

    def test_remove_sequence_logs_descendants(self):
        f = parse_file(sample_bytes())
        log = apply_rules(f, parse_ruleset(HEAD + "(0008,1140) X\n"), context(), RECS)
        removed = [e.path for e in log.entries if e.code == "REMOVE"]
        assert "(0008,1140)[0]/(0008,1155)" in removed
        assert len(log) == len(list(iter_elements(parse_file(sample_bytes()).file_meta))) + 13

    def test_keep_preserves_bytes(self):
        f, log, _ = self.run(HEAD)
        for e in log.entries:
            if e.code == "KEEP":
                assert e.old_digest == e.new_digest
        g = parse_file(sample_bytes())
        g.dataset.remove(_t(0x0009, 0x0010))
        g.dataset.remove(_t(0x0009, 0x1001))
        assert write_file(f) == write_file(g)

    def test_keep_everything_byte_identical(self):
        f, _, _ = self.run("@default_public K\n@default_private K\n")
        assert write_file(f) == sample_bytes()

    def test_bad_date_kept_and_logged(self):
        f, log, _ = self.run(bad_date=True)
        assert f.dataset[_t(0x0008, 0x0022)].text == "20241301"
        bad = [e for e in log.entries if e.tag == "(0008,0022)"][0]
        assert bad.code == "KEEP" and "INCREMENT_DATE" in bad.detail
        assert f.dataset[_t(0x0008, 0x0021)].text == "20240101"

    def test_zero(self):
        f, _, _ = self.run(HEAD + "(0008,0080) Z\n")
        assert f.dataset[_t(0x0008, 0x0080)].value == b""

    def test_deterministic_rerun(self):
        ctx = context()
        outs = []
        for _ in range(2):
            f = parse_file(sample_bytes())
            apply_rules(f, load_ruleset(), ctx, RECS)
            outs.append(write_file(f))
        assert outs[0] == outs[1]

    def test_digest_absent(self):
        assert element_digest(None) == ""


RULE_POOL = ["(0008,0080) X", "(0008,0021) INCDATE", "(0010,0020) LOOKUP", "(0008,1030) C",
             "(0020,000D) U", "(0008,0018) U", "(0008,1155) U", "(0010,0010) Z"]


@settings(max_examples=30, deadline=None)
@given(st.permutations(RULE_POOL))
def test_rule_order_stable(order):
    def out(lines):
        f = parse_file(sample_bytes())
        apply_rules(f, parse_ruleset(HEAD + "\n".join(lines) + "\n"), context(), RECS)
        return write_file(f)
    assert out(order) == out(RULE_POOL)

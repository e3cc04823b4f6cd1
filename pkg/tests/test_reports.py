"""Report records: canonical serialization, hashing, persistence, merging."""

import json
import math

import pytest

from bergman_lab.reports import (
    CheckRecord,
    RunReport,
    canonical_json,
    config_hash,
    exit_code,
    load_summary,
    margins_csv,
    merge_reports,
    write_report,
)


def make_record(name="certify", verdict="pass", margin=0.5):
    return CheckRecord(name=name, verdict=verdict, margins={"m": margin}, timing_s=1.23)


def make_report(records=None, seed=0):
    return RunReport(
        scenario_id="demo",
        config_hash=config_hash({"a": 1}),
        records=tuple(records if records is not None else [make_record()]),
        seed=seed,
    )


class TestCanonicalJson:
    def test_key_order_invariance(self):
        assert canonical_json({"b": 1, "a": 2}) == canonical_json({"a": 2, "b": 1})

    def test_no_whitespace(self):
        assert " " not in canonical_json({"a": [1, 2], "b": {"c": 3}})

    def test_specials_become_strings(self):
        s = canonical_json({"x": math.nan, "y": math.inf, "z": -math.inf})
        assert '"nan"' in s and '"inf"' in s and '"-inf"' in s

    def test_complex_becomes_re_im(self):
        payload = json.loads(canonical_json({"k": 1 + 2j}))
        assert payload["k"] == {"im": 2.0, "re": 1.0}

    def test_config_hash_stable(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestCheckRecord:
    def test_rejects_unknown_verdict(self):
        with pytest.raises(ValueError, match="verdict"):
            CheckRecord(name="x", verdict="maybe")

    def test_payload_drops_timing(self):
        rec = make_record()
        assert "timing_s" in rec.as_dict()
        assert "timing_s" not in rec.payload()

    def test_exit_code_precedence(self):
        ok = make_record()
        bad = make_record(verdict="fail")
        slow = make_record(verdict="unconverged")
        assert exit_code([]) == 0
        assert exit_code([ok]) == 0
        assert exit_code([ok, slow]) == 3
        assert exit_code([ok, slow, bad]) == 2


class TestRunReport:
    def test_hash_ignores_timing(self):
        a = make_report([CheckRecord(name="c", verdict="pass", timing_s=1.0)])
        b = make_report([CheckRecord(name="c", verdict="pass", timing_s=9.0)])
        assert a.report_hash == b.report_hash

    def test_hash_sees_verdicts_and_seed(self):
        base = make_report()
        assert base.report_hash != make_report([make_record(verdict="fail")]).report_hash
        assert base.report_hash != make_report(seed=1).report_hash

    def test_as_dict_roundtrips_through_json(self):
        d = json.loads(json.dumps(make_report().as_dict()))
        assert d["scenario_id"] == "demo"
        assert d["records"][0]["name"] == "certify"
        assert d["exit_code"] == 0

    def test_margins_csv_shape(self):
        text = margins_csv(make_report())
        lines = text.strip().splitlines()
        assert lines[0] == "scenario,check,verdict,margin,value"
        assert lines[1].startswith("demo,certify,pass,m,")


class TestPersistence:
    def test_write_and_load_roundtrip(self, tmp_path):
        report = make_report()
        paths = write_report(report, tmp_path)
        summary = load_summary(tmp_path / f"summary-{report.scenario_id}.json")
        assert summary["report_hash"] == report.report_hash
        assert [p.name for p in paths] == ["records.jsonl", "summary-demo.json"]

    def test_records_append_across_runs(self, tmp_path):
        write_report(make_report(), tmp_path)
        write_report(make_report([make_record(name="hormander")]), tmp_path)
        lines = (tmp_path / "records.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        assert {json.loads(ln)["name"] for ln in lines} == {"certify", "hormander"}

    def test_append_refuses_foreign_config(self, tmp_path):
        write_report(make_report(), tmp_path)
        foreign = RunReport(
            scenario_id="demo", config_hash=config_hash({"a": 2}), records=(make_record(),)
        )
        with pytest.raises(ValueError, match="config hash"):
            write_report(foreign, tmp_path)

    def test_csv_format_adds_margin_file(self, tmp_path):
        write_report(make_report(), tmp_path, format="csv")
        assert (tmp_path / "margins-demo.csv").exists()

    def test_merge_requires_matching_config(self, tmp_path):
        write_report(make_report(), tmp_path)
        s1 = load_summary(tmp_path / "summary-demo.json")
        s2 = dict(s1, config_hash="0" * 64)
        with pytest.raises(ValueError, match="config hash"):
            merge_reports([s1, s2])

    def test_merge_combines_exit_codes(self, tmp_path):
        a = make_report()
        b = RunReport(
            scenario_id="demo2",
            config_hash=a.config_hash,
            records=(make_record(verdict="unconverged"),),
        )
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        write_report(a, d1)
        write_report(b, d2)
        merged = merge_reports(
            [load_summary(d1 / "summary-demo.json"), load_summary(d2 / "summary-demo2.json")]
        )
        assert merged["exit_code"] == 3
        assert merged["scenario_ids"] == ["demo", "demo2"]
        assert len(merged["records"]) == 2

import json
import math
import os
from pathlib import Path

import pytest

import convplan

SOURCE = Path(os.environ.get("CONVPLAN_SOURCE_DIR", Path(__file__).resolve().parents[2]))
FIXTURE = SOURCE / "tests" / "fixtures" / "e2e" / "config.json"

DIAMOND = {"nodes": [{"id": i, "name": f"s{i}"} for i in range(1, 5)],
           "edges": [[1, 2], [1, 3], [2, 4], [3, 4]]}
CHAIN = {"nodes": [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}], "edges": [[1, 2]]}


def test_split_and_length():
    assert convplan.split_counts(150) == [90, 15, 45] or tuple(convplan.split_counts(150)) == (90, 15, 45)
    assert convplan.classify_length(5) == "short"
    assert convplan.classify_length(11) == "long"
    ids = [f"c{i}" for i in range(20)]
    assignment = convplan.split_dataset(ids, seed=3)
    assert sorted(assignment) == sorted(ids)


def test_ged_and_plan():
    assert convplan.ged(CHAIN, DIAMOND)["cost"] == 5.0
    parsed = convplan.parse_plan("Plan:\n" + json.dumps(CHAIN))
    assert parsed["valid"] is True
    assert convplan.validate_dag({"nodes": [{"id": 1, "name": "x"}], "edges": [[1, 1]]}) == ["cycle"]


def test_bertscore_table():
    table = {"kind": "synthetic", "dimension": 32}
    s = convplan.bertscore("book hotel", "book hotel", table)
    assert math.isclose(s["f1"], 1.0, abs_tol=1e-12)


def test_records_and_ranks():
    def rec(x, y, winner):
        p = convplan.make_presentation("c", x, y, 1)
        verdict = "TIE" if winner is None else ("A" if p["slot_a"] == winner else "B")
        return convplan.make_record(p, verdict)

    records = [rec("a", "c", "a"), rec("b", "c", "b"), rec("a", "b", None)]
    ranks = convplan.rank_rewriters(records)["rewriters"]
    assert [ranks[r]["rank"] for r in ("a", "b", "c")] == [1, 1, 3]
    rows = convplan.aggregate_wtl(records)
    for row in rows:
        assert math.isclose(row["win_pct"] + row["tie_pct"] + row["loss_pct"], 100.0)


def test_errors_surface_as_convplan_error():
    with pytest.raises(convplan.ConvplanError, match="SameRewriter"):
        convplan.make_presentation("c", "x", "x", 0)


def test_redaction():
    text, count = convplan.redact_text("mail a@b.com")
    assert count == 1 and "[REDACTED_EMAIL]" in text


def test_pipeline_offline(tmp_path):
    first = convplan.run_all(str(FIXTURE), str(tmp_path))
    assert [o["command"] for o in first][0] == "forge"
    again = convplan.run_all(str(FIXTURE), str(tmp_path))
    assert all(o["cached"] for o in again)
    assert (tmp_path / "report" / "summary.json").exists()

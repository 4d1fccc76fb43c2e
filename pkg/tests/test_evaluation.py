"""Change matrix, cost model, report serialization, run scoring."""

from __future__ import annotations

import json

import pytest

from multipath.correction import CORRECTED, INITIAL, Attempt
from multipath.evaluation import (
    CSV_COLUMNS,
    ChangeMatrix,
    CostModel,
    RunReport,
    breakeven_regen_fraction,
    cost_estimate,
    reports_to_csv,
    score_run,
)
from multipath.tasks import Dataset, Task


def attempt(task_id, text, stage=INITIAL, tokens=2, steps=2, strategy="none"):
    return Attempt(
        task_id=task_id,
        stage=stage,
        strategy=strategy,
        decoder_input="p",
        text=text,
        answer=None,
        tokens_generated=tokens,
        steps=steps,
    )


def math_dataset(answers):
    tasks = tuple(
        Task(id=f"t{i}", prompt="q", domain="math", answer=ans)
        for i, ans in enumerate(answers)
    )
    return Dataset(name="toy", tasks=tasks)


# ---------------------------------------------------------------------------
# ChangeMatrix


def test_matrix_from_verdicts():
    matrix = ChangeMatrix.from_verdicts(
        [True, True, False, False, True],
        [True, False, True, False, True],
    )
    assert (matrix.cc, matrix.ci, matrix.ic, matrix.ii) == (2, 1, 1, 1)
    assert matrix.total == 5
    assert matrix.accuracy_before() == pytest.approx(3 / 5)
    assert matrix.accuracy_after() == pytest.approx(3 / 5)
    assert sum(matrix.percentages().values()) == pytest.approx(1.0)


def test_matrix_rejects_mismatched_lengths():
    with pytest.raises(ValueError, match="2 initial verdicts but 1"):
        ChangeMatrix.from_verdicts([True, False], [True])


def test_matrix_rejects_negative_counts():
    with pytest.raises(ValueError, match=">= 0"):
        ChangeMatrix(cc=-1, ci=0, ic=0, ii=0)


# ---------------------------------------------------------------------------
# cost model


def test_cost_model_validation():
    with pytest.raises(ValueError, match="samples"):
        CostModel(samples=0, unit_time=1.0, regen_fraction=0.5, mean_width=2.0)
    with pytest.raises(ValueError, match="unit_time"):
        CostModel(samples=1, unit_time=0.0, regen_fraction=0.5, mean_width=2.0)
    with pytest.raises(ValueError, match="regen_fraction"):
        CostModel(samples=1, unit_time=1.0, regen_fraction=1.5, mean_width=2.0)
    with pytest.raises(ValueError, match="mean_width"):
        CostModel(samples=1, unit_time=1.0, regen_fraction=0.5, mean_width=0.5)


def test_cost_estimate_closed_forms():
    cost = CostModel(samples=100, unit_time=3.0, regen_fraction=0.25, mean_width=2.0)
    base = 300.0
    assert cost_estimate(cost, "none") == base
    for kind in ("feedback_as_prompt", "critic_prompt", "ioe_prompt"):
        assert cost_estimate(cost, kind) == 2.0 * base
    assert cost_estimate(cost, "ftr_indicator") == base * 1.5


def test_cost_estimate_no_regeneration_is_single_pass():
    cost = CostModel(samples=10, unit_time=2.0, regen_fraction=0.0, mean_width=5.0)
    assert cost_estimate(cost, "ftr_indicator") == cost_estimate(cost, "none")


def test_cost_estimate_breakeven_equals_two_pass():
    # p * n = 1 exactly: regenerating costs the same as a full second pass
    cost = CostModel(samples=10, unit_time=2.0, regen_fraction=0.5, mean_width=2.0)
    assert cost_estimate(cost, "ftr_indicator") == cost_estimate(cost, "critic_prompt")


def test_cost_estimate_monotone_in_regen_fraction():
    costs = [
        cost_estimate(
            CostModel(samples=10, unit_time=1.0, regen_fraction=p, mean_width=3.0),
            "ftr_indicator",
        )
        for p in (0.0, 0.2, 0.4, 0.8, 1.0)
    ]
    assert costs == sorted(costs)


def test_cost_estimate_rejects_unknown_strategy():
    cost = CostModel(samples=1, unit_time=1.0, regen_fraction=0.0, mean_width=1.0)
    with pytest.raises(ValueError, match="unknown strategy"):
        cost_estimate(cost, "other")


def test_breakeven_fraction():
    assert breakeven_regen_fraction(2.0) == 0.5
    assert breakeven_regen_fraction(1.0) == 1.0
    with pytest.raises(ValueError, match="mean_width"):
        breakeven_regen_fraction(0.9)


# ---------------------------------------------------------------------------
# RunReport serialization


def sample_report():
    return RunReport(
        strategy="ftr_indicator",
        dataset="toy",
        size=4,
        accuracy=0.75,
        matrix=ChangeMatrix(cc=2, ci=0, ic=1, ii=1),
        tokens_stage1=8,
        tokens_stage2=10,
        regenerated=2,
        unit_tokens=2.0,
        regen_fraction=0.5,
        mean_width=2.5,
        est_cost_ratio=2.25,
        measured_cost_ratio=2.25,
    )


def test_report_json_round_trip():
    report = sample_report()
    assert RunReport.from_json(report.to_json()) == report
    assert report.to_json().endswith("\n")
    # canonical bytes: sorted keys, no whitespace
    body = report.to_json().rstrip("\n")
    assert body == json.dumps(json.loads(body), sort_keys=True, separators=(",", ":"))


def test_csv_row_formats_floats_by_repr():
    row = sample_report().csv_row()
    assert row == "ftr_indicator,toy,4,0.75,2,0,1,1,8,10,2.25,2.25"


def test_reports_to_csv_has_header():
    text = reports_to_csv([sample_report()])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[0] == (
        "strategy,dataset,N,acc,cc,ci,ic,ii,"
        "tokens_stage1,tokens_stage2,est_cost_ratio,measured_cost_ratio"
    )
    assert len(lines) == 2
    assert text.endswith("\n")


# ---------------------------------------------------------------------------
# score_run


def test_score_run_counts_and_costs():
    dataset = math_dataset([1, 2, 3])
    pairs = [
        # t0: correct, untouched (identity final)
        (attempt("t0", "[1]"), attempt("t0", "[1]")),
        # t1: wrong then regenerated right, 5 tokens over 2 steps
        (attempt("t1", "[9]"), attempt("t1", "[2]", stage=CORRECTED, tokens=5, steps=2)),
        # t2: wrong, regenerated still wrong
        (attempt("t2", "[9]"), attempt("t2", "[8]", stage=CORRECTED, tokens=5, steps=2)),
    ]
    report = score_run(pairs, dataset, "ftr_indicator")
    assert (report.matrix.cc, report.matrix.ci, report.matrix.ic, report.matrix.ii) == (1, 0, 1, 1)
    assert report.size == 3
    assert report.accuracy == pytest.approx(2 / 3)
    assert report.tokens_stage1 == 6
    assert report.tokens_stage2 == 10
    assert report.regenerated == 2
    assert report.unit_tokens == pytest.approx(2.0)
    assert report.regen_fraction == pytest.approx(2 / 3)
    assert report.mean_width == pytest.approx(2.5)
    # est = 1 + p*n = 1 + (2/3)*2.5; measured = 16/6: identical here
    assert report.est_cost_ratio == pytest.approx(1 + (2 / 3) * 2.5)
    assert report.measured_cost_ratio == pytest.approx(16 / 6)
    assert report.est_cost_ratio == pytest.approx(report.measured_cost_ratio)


def test_score_run_none_strategy_is_unit_cost():
    dataset = math_dataset([1])
    pairs = [(attempt("t0", "[1]"), attempt("t0", "[1]"))]
    report = score_run(pairs, dataset, "none")
    assert report.est_cost_ratio == 1.0
    assert report.measured_cost_ratio == 1.0
    assert report.regenerated == 0
    assert report.mean_width == 1.0


def test_score_run_identity_final_reuses_initial_verdict():
    # the final attempt still carries stage "initial": no second verification
    dataset = math_dataset([1])
    pairs = [(attempt("t0", "[1]"), attempt("t0", "[1]"))]
    report = score_run(pairs, dataset, "none")
    assert report.matrix.cc == 1


def test_score_run_requires_full_coverage():
    dataset = math_dataset([1, 2])
    pairs = [(attempt("t0", "[1]"), attempt("t0", "[1]"))]
    with pytest.raises(ValueError, match=r"no attempt pair for tasks: \['t1'\]"):
        score_run(pairs, dataset, "none")


def test_score_run_rejects_unknown_and_mismatched_pairs():
    dataset = math_dataset([1])
    stray = [(attempt("tX", "[1]"), attempt("tX", "[1]"))]
    with pytest.raises(ValueError, match="unknown task 'tX'"):
        score_run(stray, dataset, "none")
    crossed = [(attempt("t0", "[1]"), attempt("t1", "[1]"))]
    with pytest.raises(ValueError, match="mismatched pair"):
        score_run(crossed, dataset, "none")


def test_score_run_parallel_verification_matches_serial():
    dataset = math_dataset(list(range(8)))
    pairs = [
        (attempt(f"t{i}", f"[{i}]"), attempt(f"t{i}", f"[{i + i % 2}]", stage=CORRECTED, tokens=4, steps=2))
        for i in range(8)
    ]
    serial = score_run(pairs, dataset, "ftr_indicator", workers=1)
    parallel = score_run(pairs, dataset, "ftr_indicator", workers=4)
    assert serial == parallel

import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomeval.core import PointCloud
from geomeval.errors import LengthMismatch, SceneSetMismatch, ToleranceMismatch
from geomeval.geomio import read_ply_pointcloud
from geomeval.metrics import MetricsResult, ToleranceMetrics, evaluate_pair, f1_score
from geomeval.report import (BenchmarkRun, ErrorColormap, aggregate_runs, columns_for, export_error_cloud,
                             fmt2, render_csv, render_markdown, write_csv, write_markdown)

HEADER = "method,cd_p2g_mm,std2_mm,std5_mm,cd_g2p_mm,prec2,rec2,f1_2,prec5,rec5,f1_5"


def result(cd_pg, std2, std5, cd_gp, p2=1.0, r2=1.0, p5=1.0, r5=1.0, f2=None, f5=None):
    f2 = f1_score(p2, r2) if f2 is None else f2
    f5 = f1_score(p5, r5) if f5 is None else f5
    return MetricsResult(cd_pg, cd_gp, (ToleranceMetrics(2.0, std2, p2, r2, f2),
                                        ToleranceMetrics(5.0, std5, p5, r5, f5)), 1000, 1000)


def parse(text):
    return list(csv.reader(io.StringIO(text)))


def test_header_and_columns():
    assert ",".join(["method"] + columns_for((2.0, 5.0))) == HEADER
    assert columns_for((0.5,)) == ["cd_p2g_mm", "std0.5_mm", "cd_g2p_mm", "prec0.5", "rec0.5", "f1_0.5"]


def test_single_scene_row_equals_result(rng):
    res = evaluate_pair(PointCloud(rng.random((200, 3)) * 0.01), PointCloud(rng.random((300, 3)) * 0.01))
    table = aggregate_runs([BenchmarkRun("m", {"s": res})])
    (_, row), = table.rows
    assert row["cd_p2g_mm"] == res.cd_p_to_g_mm and row["cd_g2p_mm"] == res.cd_g_to_p_mm
    for m in res.per_tau:
        lab = f"{m.tau_mm:g}"
        assert row[f"std{lab}_mm"] == m.std_mm
        assert (row[f"prec{lab}"], row[f"rec{lab}"], row[f"f1_{lab}"]) == (m.precision, m.recall, m.f1)


def test_2dgs_row_renders_exactly():
    res = result(3.15, 0.54, 1.28, 4.92, p2=0.46, r2=0.28, f2=0.33, p5=0.82, r5=0.71, f5=0.74)
    text = render_csv(aggregate_runs([BenchmarkRun("2DGS", {"scene": res})]))
    assert text == HEADER + "\n2DGS,3.15,0.54,1.28,4.92,0.46,0.28,0.33,0.82,0.71,0.74\n"


def test_table_rows_serialize_cd():
    runs = [BenchmarkRun(name, {"s": result(cd, 0.5, 1.0, 4.0)})
            for name, cd in (("2DGS", 3.15), ("SVRaster", 3.18), ("Nerfacto", 3.78))]
    rows = parse(render_csv(aggregate_runs(runs)))
    assert [(r[0], r[1]) for r in rows[1:]] == [("2DGS", "3.15"), ("SVRaster", "3.18"), ("Nerfacto", "3.78")]


def test_dominating_method_is_best_everywhere():
    good = result(1.0, 0.1, 0.2, 1.0, 0.9, 0.9, 0.95, 0.95)
    bad = result(2.0, 0.3, 0.4, 2.0, 0.5, 0.5, 0.6, 0.6)
    table = aggregate_runs([BenchmarkRun("bad", {"s": bad}), BenchmarkRun("good", {"s": good})])
    assert all(table.best[c] == {"good"} for c in table.columns)
    md = render_markdown(table)
    good_line = next(l for l in md.splitlines() if l.startswith("| good"))
    assert good_line.count("**") == 2 * len(table.columns)


def test_ties_flag_every_method():
    a, b = result(1.0, 0.1, 0.2, 1.0), result(1.0, 0.2, 0.3, 2.0)
    table = aggregate_runs([BenchmarkRun("a", {"s": a}), BenchmarkRun("b", {"s": b})])
    assert table.best["cd_p2g_mm"] == {"a", "b"}
    assert table.best["cd_g2p_mm"] == {"a"}


def test_empty_method_list_gives_header_only(tmp_path):
    table = aggregate_runs([])
    write_csv(table, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == HEADER + "\n"


def test_csv_reparse_round_trips(rng):
    runs = [BenchmarkRun(f"m{k}", {"s": result(*rng.uniform(0, 10, 4), *rng.random(4))}) for k in range(5)]
    table = aggregate_runs(runs)
    rows = parse(render_csv(table))
    for (method, vals), parsed in zip(table.rows, rows[1:]):
        assert parsed[0] == method
        for c, cell in zip(table.columns, parsed[1:]):
            assert cell == fmt2(vals[c])
            assert fmt2(float(cell)) == cell


def test_undefined_std_rendering(tmp_path):
    table = aggregate_runs([BenchmarkRun("m", {"s": result(1.0, None, 0.5, 1.0)})])
    assert parse(render_csv(table))[1][2] == ""
    write_markdown(table, tmp_path / "t.md")
    line = (tmp_path / "t.md").read_text().splitlines()[2]
    assert "| — |" in line


def test_undefined_std_excluded_from_mean():
    run = BenchmarkRun("m", {"a": result(1.0, None, 0.5, 1.0), "b": result(1.0, 0.4, 0.7, 1.0)})
    assert run.aggregate["std2_mm"] == 0.4
    assert run.std_excluded == {"std2_mm": 1, "std5_mm": 0}
    assert run.aggregate["std5_mm"] == pytest.approx(0.6)


def test_half_even_rounding():
    assert fmt2(0.125) == "0.12"
    assert fmt2(0.375) == "0.38"
    assert fmt2(2.5) == "2.50"
    # 2.675 is stored slightly below the tie, so it rounds down
    assert fmt2(2.675) == "2.67"


def test_f1_is_mean_of_scene_values():
    # per-scene F1 averaged: 0.575..., while the harmonic mean of mean P and R is 0.5918
    a = result(3.0, 0.5, 1.0, 4.0, p2=0.77, r2=0.43)
    b = result(3.0, 0.5, 1.0, 4.0, p2=0.57, r2=0.63)
    row = aggregate_runs([BenchmarkRun("SVRaster", {"a": a, "b": b})]).rows[0][1]
    assert (fmt2(row["prec2"]), fmt2(row["rec2"]), fmt2(row["f1_2"])) == ("0.67", "0.53", "0.58")
    assert fmt2(f1_score(row["prec2"], row["rec2"])) == "0.59"


def test_scene_set_mismatch():
    with pytest.raises(SceneSetMismatch):
        aggregate_runs([BenchmarkRun("a", {"s1": result(1, 1, 1, 1)}),
                        BenchmarkRun("b", {"s2": result(1, 1, 1, 1)})])


def test_tolerance_mismatch():
    other = MetricsResult(1.0, 1.0, (ToleranceMetrics(1.0, None, 1.0, 1.0, 1.0),), 1, 1)
    with pytest.raises(ToleranceMismatch):
        aggregate_runs([BenchmarkRun("a", {"s": result(1, 1, 1, 1)}), BenchmarkRun("b", {"s": other})])
    with pytest.raises(ToleranceMismatch):
        BenchmarkRun("a", {"s": result(1, 1, 1, 1), "t": other})


@given(st.integers(0, 2**32 - 1))
def test_aggregation_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    scenes = {f"s{k}": result(*rng.uniform(0, 10, 4), *rng.random(4)) for k in range(6)}
    methods = {f"m{k}": dict(scenes) for k in range(3)}
    base = aggregate_runs([BenchmarkRun(m, s) for m, s in methods.items()])
    order = rng.permutation(6)
    keys = list(scenes)
    shuffled_scenes = {keys[i]: scenes[keys[i]] for i in order}
    mnames = list(methods)[::-1]
    other = aggregate_runs([BenchmarkRun(m, shuffled_scenes) for m in mnames])
    base_rows = dict(base.rows)
    for m, vals in other.rows:
        for c in base.columns:
            assert fmt2(vals[c]) == fmt2(base_rows[m][c])
    assert other.best.keys() == base.best.keys()


@given(st.floats(0, 1e3, allow_nan=False))
def test_report_equals_stored_value_rounded(v):
    table = aggregate_runs([BenchmarkRun("m", {"s": result(v, v, v, v)})])
    assert parse(render_csv(table))[1][1] == f"{v:.2f}"


def test_colormap_anchors():
    cmap = ErrorColormap()
    np.testing.assert_array_equal(cmap(np.array([0.0])), [[0, 0, 255]])
    np.testing.assert_array_equal(cmap(np.array([5.0, 7.5, 100.0])), [[255, 0, 0]] * 3)
    np.testing.assert_array_equal(cmap(np.array([2.5])), [[0, 255, 0]])


def test_colormap_monotone_per_segment():
    cmap = ErrorColormap()
    first = cmap(np.linspace(0, 2.5, 500)).astype(int)
    second = cmap(np.linspace(2.5, 5.0, 500)).astype(int)
    assert (np.diff(first[:, 2]) <= 0).all() and (np.diff(first[:, 1]) >= 0).all()
    assert (np.diff(second[:, 1]) <= 0).all() and (np.diff(second[:, 0]) >= 0).all()


def test_colormap_validation():
    with pytest.raises(ValueError):
        ErrorColormap(cap_mm=0)


def test_export_error_cloud(tmp_path, rng):
    p = PointCloud(rng.random((100, 3)))
    d = np.r_[np.zeros(50), np.full(50, 0.01)]
    export_error_cloud(p, d, ErrorColormap(), tmp_path / "e.ply")
    back = read_ply_pointcloud(tmp_path / "e.ply")
    np.testing.assert_array_equal(back.points, p.points)
    np.testing.assert_array_equal(back.colors[:50], [[0, 0, 255]] * 50)
    np.testing.assert_array_equal(back.colors[50:], [[255, 0, 0]] * 50)
    with pytest.raises(LengthMismatch):
        export_error_cloud(p, d[:10], ErrorColormap(), tmp_path / "x.ply")

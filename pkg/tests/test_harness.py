import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mime_rl import harness
from mime_rl.config import ConfigError, from_dict
from mime_rl.harness import (
    RunMetrics,
    VisitationGrid,
    aggregate_seeds,
    boundary_occupancy,
    compare_methods,
    emit_heatmap,
    heatmap_levels,
    median_steps,
    read_pgm,
    record_visitation,
    replay,
    run_experiment,
    run_seed,
)
from mime_rl.ndmath import NumericError


def tiny(env="plane", kind="mime", budget=2000, **extra):
    d = {"env": {"name": env}, "method": {"kind": kind}, "budget": budget, "seeds": [0, 1],
         "policy": {"num_envs": 2, "horizon": 100}}
    for key, value in extra.items():
        d[key] = value
    return from_dict(d)


# --- visitation -----------------------------------------------------------------


def test_repeated_point_fills_one_bin():
    g = VisitationGrid.covering((-2, -2), (2, 2), 0.02)
    record_visitation(g, np.tile([0.3, -0.7], (100, 1)))
    assert g.total == 100 and g.counts.max() == 100 and np.count_nonzero(g.counts) == 1


def test_empty_trajectory_leaves_grid():
    g = VisitationGrid.covering((0, 0), (1, 1), 0.1)
    record_visitation(g, np.zeros((0, 2)))
    assert g.total == 0 and g.counts.shape == (10, 10)


def test_uniform_sweep_is_flat():
    w = 0.02
    centers = -2 + w * (np.arange(200) + 0.5)
    xx, yy = np.meshgrid(centers, centers)
    g = VisitationGrid.covering((-2, -2), (2, 2), w)
    record_visitation(g, np.column_stack([xx.ravel(), yy.ravel()]))
    assert g.counts.min() > 0 and g.counts.max() / g.counts.min() < 2


def test_out_of_extent_points_grow_grid():
    g = VisitationGrid.covering((0, 0), (1, 1), 0.5)
    record_visitation(g, [[-0.2, 0.1], [1.7, 2.2], [0.1, 0.1]])
    assert g.total == 3
    x0, x1, y0, y1 = g.extent()
    assert x0 <= -0.2 and x1 > 1.7 and y0 <= 0 and y1 > 2.2
    ix, iy = g.indices(np.array([[-0.2, 0.1]]))
    assert g.counts[iy[0], ix[0]] == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), max_size=60))
def test_grid_conserves_counts(points):
    g = VisitationGrid.covering((-1, -1), (1, 1), 0.1)
    record_visitation(g, np.array(points, dtype=float).reshape(-1, 2))
    assert g.total == len(points)


# --- boundary occupancy -----------------------------------------------------------


def test_boundary_occupancy_examples():
    assert boundary_occupancy(np.zeros((20, 2))) == 0.0
    ang = np.linspace(0, 2 * np.pi, 50)
    assert boundary_occupancy(0.5 * np.column_stack([np.cos(ang), np.sin(ang)])) == 1.0
    traj = np.zeros((10, 3))
    traj[:3, 0] = [0.46, 0.5, 0.54]
    traj[3:, 0] = [0.0, 0.1, 0.3, 0.44, 0.56, 1.0, 1.5]
    assert boundary_occupancy(traj) == pytest.approx(0.3)


def test_boundary_occupancy_rejects_empty():
    with pytest.raises(ValueError):
        boundary_occupancy(np.zeros((0, 2)))


# --- aggregation ------------------------------------------------------------------


def test_single_run_has_zero_std():
    agg = aggregate_seeds([RunMetrics(seed=0, steps=10, steps_to_first_reward=7, episodic_return=[1.0, 2.0])])
    assert agg["steps_to_first_reward"]["std"] == 0.0
    assert agg["episodic_return"]["std"] == [0.0, 0.0]


def test_aggregate_mean_and_sample_std():
    runs = [RunMetrics(seed=i, steps_to_first_reward=v) for i, v in enumerate([20000, 22000, 24000])]
    agg = aggregate_seeds(runs)["steps_to_first_reward"]
    assert agg["mean"] == 22000 and agg["std"] == pytest.approx(2000)


def test_censored_runs_excluded_and_counted():
    runs = [RunMetrics(seed=0, steps_to_first_reward=100), RunMetrics(seed=1, steps_to_first_reward=None)]
    agg = aggregate_seeds(runs)["steps_to_first_reward"]
    assert agg == {"count": 1, "missing": 1, "mean": 100.0, "std": 0.0}
    assert aggregate_seeds([RunMetrics(seed=0)])["boundary_occupancy"]["mean"] is None


def test_series_truncated_to_shortest():
    a = RunMetrics(seed=0, intrinsic_mean=[1.0, 2.0, 3.0])
    b = RunMetrics(seed=1, intrinsic_mean=[3.0, 4.0])
    agg = aggregate_seeds([a, b])["intrinsic_mean"]
    assert agg["mean"] == [2.0, 3.0] and agg["length"] == 2


def test_aggregate_needs_a_run():
    with pytest.raises(ValueError):
        aggregate_seeds([])


def test_median_ranks_censored_last():
    runs = [RunMetrics(seed=i, steps_to_first_reward=v) for i, v in enumerate([30, None, 10])]
    assert median_steps(runs) == 30
    runs[0].steps_to_first_reward = None
    assert math.isinf(median_steps(runs))


# --- heatmaps ---------------------------------------------------------------------


def test_heatmap_text_matrix(tmp_path):
    g = VisitationGrid(1.0, (0.0, 0.0), np.array([[1, 0], [0, 1]]))
    csv_path, pgm_path = emit_heatmap(g, tmp_path / "h")
    assert csv_path.read_text() == "1,0\n0,1\n"
    np.testing.assert_array_equal(read_pgm(pgm_path), [[255, 0], [0, 255]])


def test_zero_grid_is_black_image(tmp_path):
    g = VisitationGrid.covering((0, 0), (3, 2), 1.0)
    _, pgm = emit_heatmap(g, tmp_path / "z")
    img = read_pgm(pgm)
    assert img.shape == (2, 3) and not img.any()
    assert pgm.read_bytes().startswith(b"P5\n3 2\n255\n")


def test_log_scale_separates_1_and_10():
    levels = heatmap_levels(np.array([[0, 1, 10, 1000]]))
    assert levels[0, 0] == 0 and 0 < levels[0, 1] < levels[0, 2] < levels[0, 3] == 255
    # log10(2) / log10(1001) * 255 and log10(11) / log10(1001) * 255
    assert levels[0, 1] == round(255 * math.log10(2) / math.log10(1001))
    assert levels[0, 2] == round(255 * math.log10(11) / math.log10(1001))


def test_heatmap_bytes_deterministic(tmp_path):
    g = VisitationGrid(0.5, (0.0, 0.0), np.random.default_rng(0).integers(0, 50, size=(6, 4)))
    a = [p.read_bytes() for p in emit_heatmap(g, tmp_path / "a")]
    b = [p.read_bytes() for p in emit_heatmap(g, tmp_path / "b")]
    assert a == b


def test_heatmap_unwritable_path(tmp_path):
    g = VisitationGrid(1.0, (0.0, 0.0), np.ones((2, 2), dtype=int))
    with pytest.raises(OSError):
        emit_heatmap(g, tmp_path / "missing-dir" / "h")


# --- runs -------------------------------------------------------------------------


def test_run_dir_contents(tmp_path):
    cfg = tiny(emit={"heatmap": True, "trajectory": True, "checkpoints": True})
    result = run_experiment(cfg, tmp_path / "run", serial=True)
    d = result.run_dir
    for name in ("config.yaml", "metrics.json", "metrics.csv", "seeds.json", "version.json"):
        assert (d / name).is_file(), name
    for s in (0, 1):
        sd = d / f"seed_{s}"
        for name in ("heatmap.csv", "heatmap.pgm", "trajectory.csv", "checkpoint.bin", "series.csv", "metrics.json"):
            assert (sd / name).is_file(), name
        counts = np.loadtxt(sd / "heatmap.csv", delimiter=",")
        assert counts.sum() == result.runs[s].steps == 2000
    assert json.loads((d / "seeds.json").read_text())["seeds"] == [0, 1]


def test_serial_runs_are_reproducible(tmp_path):
    cfg = tiny()
    a = run_experiment(cfg, tmp_path / "a", serial=True)
    b = run_experiment(cfg, tmp_path / "b", serial=True)
    assert a.digests() == b.digests()
    assert a.digests()[0] != a.digests()[1]
    heat = [(tmp_path / x / "seed_0" / "heatmap.pgm").read_bytes() for x in "ab"]
    assert heat[0] == heat[1]


def test_worker_processes_match_serial(tmp_path):
    cfg = tiny(workers=2)
    assert run_experiment(cfg, tmp_path / "p").digests() == run_experiment(cfg, tmp_path / "s", serial=True).digests()


def test_first_reward_counts_all_copies():
    # goal disc covers every position reachable in one step, so copy-steps 1..n all hit at t = 0
    cfg = tiny(kind="none", env="plane").replace(**{"env.params": {"goal": [0.0, 0.0], "goal_radius": 0.5}})
    m = run_seed(cfg, 0)
    assert m.steps_to_first_reward == cfg.policy.num_envs
    assert m.steps == m.steps_to_first_reward


def test_budget_mode_keeps_going_after_reward():
    cfg = tiny(kind="none").replace(**{"env.params": {"goal": [0.0, 0.0], "goal_radius": 0.5}, "mode": "budget"})
    m = run_seed(cfg, 0)
    assert m.steps_to_first_reward == 2 and m.steps == cfg.budget


def test_budget_never_exceeded():
    # the last batch is shortened; with 2 copies an odd budget leaves one step unused
    m = run_seed(tiny(budget=1235), 0)
    assert m.steps == 1234 and m.iteration_steps[-2:] == [1200, 1234]


def test_no_intrinsic_agent_misses_goal_in_short_budget():
    cfg = from_dict({"env": {"name": "plane"}, "method": {"kind": "none"}, "budget": 10_000})
    assert all(run_seed(cfg, s).steps_to_first_reward is None for s in (0, 1, 2))


def test_wormhole_reports_boundary_occupancy():
    m = run_seed(tiny(env="wormhole", kind="surprisal"), 0)
    assert 0.0 <= m.boundary_occupancy <= 1.0 and m.tv_occupancy is None


def test_rooms_reports_tv_occupancy():
    cfg = from_dict({"env": {"name": "rooms"}, "method": {"kind": "rnd"}, "budget": 2048, "seeds": [0]})
    m = run_seed(cfg, 0)
    assert 0.0 <= m.tv_occupancy <= 1.0 and m.boundary_occupancy is None


def test_numeric_failure_keeps_partial_artifacts(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = harness.ppo_update

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericError("non-finite loss")
        return real(*args, **kw)

    monkeypatch.setattr(harness, "ppo_update", flaky)
    result = run_experiment(tiny(seeds=[0]), tmp_path / "r", serial=True)
    m = result.runs[0]
    assert result.errored and "non-finite" in m.error
    assert m.steps == 3 * 200
    sd = tmp_path / "r" / "seed_0"
    assert (sd / "error.txt").is_file() and (sd / "heatmap.csv").is_file()
    assert json.loads((tmp_path / "r" / "metrics.json").read_text())["runs"][0]["error"]


def test_replay_detects_tampering(tmp_path):
    d = tmp_path / "run"
    run_experiment(tiny(budget=600), d, serial=True)
    assert replay(d).ok
    payload = json.loads((d / "metrics.json").read_text())
    payload["runs"][1]["steps"] += 1
    (d / "metrics.json").write_text(json.dumps(payload))
    report = replay(d)
    assert report.matches == {0: True, 1: False} and not report.ok


def test_compare_structure_and_files(tmp_path):
    comp = compare_methods(tiny(budget=1000), ["none", "surprisal", "mime"], tmp_path / "c", serial=True)
    assert [r["method"] for r in comp.rows] == ["none", "surprisal", "mime"]
    assert all(r["seeds"] == 2 for r in comp.rows)
    assert {c.name for c in comp.checks} == {"surprisal median below none", "mime median below none"}
    assert json.loads((tmp_path / "c" / "comparison.json").read_text())["env"] == "plane"
    assert "| mime |" in (tmp_path / "c" / "comparison.md").read_text()


def test_compare_rejects_single_method():
    with pytest.raises(ValueError):
        compare_methods(tiny(), ["mime"])


def test_occupancy_checks_on_synthetic_runs():
    runs = {"surprisal": [RunMetrics(seed=0, boundary_occupancy=0.3)],
            "mime": [RunMetrics(seed=0, boundary_occupancy=0.1)]}
    (check,) = harness.comparison_checks("wormhole", runs)
    assert check.passed
    runs["mime"][0].boundary_occupancy = 0.4
    assert not harness.comparison_checks("wormhole", runs)[0].passed


def test_plane_check_requires_finite_median():
    runs = {"none": [RunMetrics(seed=0)], "mime": [RunMetrics(seed=0)]}
    (check,) = harness.comparison_checks("plane", runs)
    assert not check.passed
    runs["mime"][0].steps_to_first_reward = 5000
    assert harness.comparison_checks("plane", runs)[0].passed


def test_metrics_digest_ignores_wall_clock():
    a = RunMetrics(seed=1, steps=5, wall_clock=1.0)
    b = RunMetrics(seed=1, steps=5, wall_clock=99.0)
    assert a.digest() == b.digest()
    assert RunMetrics.from_dict(a.to_dict()) == a


def test_invalid_run_config_reports_path():
    with pytest.raises(ConfigError) as err:
        tiny().replace(**{"policy.horizon": 0})
    assert err.value.path == "policy.horizon"

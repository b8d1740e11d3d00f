import json

import numpy as np
import pytest

from roughscl.harness import (
    BENCHMARKS,
    ExperimentConfig,
    ExperimentResult,
    PipelineError,
    burgers_riemann_exact,
    default_config,
    expansion_shock_residual,
    initial_data,
    make_driver,
    oracle_burgers_shock,
    oracle_constant_shift,
    oracle_zero_noise,
    run_pipeline,
    run_rate_experiment,
    run_wong_zakai,
    transform_round_trip,
    twin_flux_audit,
)


def small_b1(**kw):
    cfg = default_config("B1")
    kw.setdefault("grid", {"h": 1 / 100})
    return cfg.replace(n_snapshots=5, **kw)


def test_config_round_trip(tmp_path):
    for name in BENCHMARKS:
        cfg = default_config(name)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.load(path) == cfg


def test_config_validation():
    data = default_config("B1").to_dict()
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**data, "p": 3.0})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**data, "driver": {"levels": [5, 3]}})


def test_replace_merges_dicts():
    cfg = default_config("B3").replace(grid={"h": 0.1})
    assert cfg.grid["h"] == 0.1 and cfg.grid["lower"] == [-1.0, -1.0]


def test_initial_data_shapes():
    x = np.array([[-0.1], [0.1]])
    assert list(initial_data({"name": "riemann", "left": 1, "right": 0})(x)) == [1, 0]
    assert initial_data({"name": "interval", "a": 0, "b": 1})(x).tolist() == [0, 1]
    with pytest.raises(ValueError):
        initial_data({"name": "nope"})


def test_drivers():
    cfg = default_config("B3")
    z = make_driver(cfg, 4)
    assert z.dim == 3 and z.n_segments == 16
    lin = cfg.replace(driver={"kind": "linear", "slope": 2.0})
    assert np.allclose(make_driver(lin).values[-1], 2.0 * cfg.T)
    none = cfg.replace(coefficients={"H": [], "nu": [], "g": []})
    assert make_driver(none).dim == 0


def test_riemann_exact():
    x = np.array([-1.0, 0.2, 0.6, 2.0])
    assert burgers_riemann_exact(x, 1.0, 1.0, 0.0).tolist() == [1, 1, 0, 0]
    assert np.allclose(burgers_riemann_exact(x, 1.0, 0.0, 1.0), [0, 0.2, 0.6, 1])


def test_shock_oracle():
    assert oracle_burgers_shock(1 / 200)["pass"]


def test_constant_shift_oracle():
    out = oracle_constant_shift(small_b1(), 1 / 200)
    assert out["pass"], out


def test_zero_noise_oracle():
    assert oracle_zero_noise(small_b1())["gap"] == 0.0


def test_pipeline_errors_are_tagged():
    cfg = small_b1(grid={"h": 1 / 100, "lower": [-1.0], "upper": [1.0]}, ball={"R": 0.9, "x0": [0.0]})
    with pytest.raises(PipelineError) as info:
        run_pipeline(cfg, make_driver(cfg, 3), level=3)
    assert "[level 3]" in str(info.value)


def test_wong_zakai_constant_field_matches_shift():
    cfg = small_b1(driver={"levels": [2, 3, 4]})
    res = run_wong_zakai(cfg, h=1 / 100)
    assert res.passed
    # D_n against the exact-shift discrepancy of the noise-free solution
    grid = cfg.make_grid(1 / 100)
    y = grid.centers()[grid.ball_mask(1.5, [0.0])][:, 0]
    zmax = make_driver(cfg, 4)
    for row in res.rows[:-1]:
        zn = make_driver(cfg, row["level"])
        gap = max(np.sum(np.abs(burgers_riemann_exact(y + zn(t)[0], t, 1.0, 0.0)
                                - burgers_riemann_exact(y + zmax(t)[0], t, 1.0, 0.0))) / 100
                  for t in cfg.snapshot_times()[1:])
        assert row["D"] == pytest.approx(gap, abs=10 / 100)


def test_wong_zakai_zero_noise():
    cfg = small_b1(coefficients={"H": [], "nu": [], "g": []}, driver={"levels": [2, 3]})
    assert run_wong_zakai(cfg, h=1 / 100).summary["D"] == [0.0]


def test_rate_experiment_small():
    res = run_rate_experiment(small_b1(), [0.0, 0.05, 0.1], h=1 / 100)
    assert res.rows[0]["gap"] == 0.0
    assert res.summary["contraction_sup_gap"] <= res.summary["contraction_data_gap"] + 1e-12


def test_rate_experiment_rejects_affine_noise():
    with pytest.raises(ValueError):
        run_rate_experiment(default_config("B2"), [0.1], h=1 / 50)


def test_twin_flux_sensitivity():
    ok = twin_flux_audit(0.1, 1 / 200)
    bad = twin_flux_audit(0.1, 1 / 200, sign=-1.0)
    assert ok["pass"] and not bad["pass"]


def test_expansion_shock_is_flagged():
    assert expansion_shock_residual(1 / 100) < -0.1


def test_round_trip_shrinks():
    a, b = transform_round_trip(1 / 32), transform_round_trip(1 / 64)
    assert b < 0.6 * a


def test_result_write_is_deterministic(tmp_path):
    res = ExperimentResult("demo", {"a": 1}, [{"x": 0.1, "y": 2}], [{"pass": True}], {"v": np.float64(1.5)}, 3.2)
    res.write(tmp_path / "one")
    res.wall_clock = 9.9
    res.write(tmp_path / "two")
    for name in ("demo.csv", "demo.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

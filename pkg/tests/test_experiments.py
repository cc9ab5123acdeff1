import csv
import json
import math

import numpy as np
import pytest

from cosharp import ConfigError, random_phantom
from cosharp.experiments import (ExperimentConfig, add_noise, build_problem, judge_success,
                                 relative_error, run_reference_case, run_sweep, trial_seed)
from cosharp.io import read_pgm, read_vector_csv, write_pgm, write_vector_csv

TINY = {
    "name": "tiny",
    "grid": {"n_x": 16, "n_y": 16},
    "geometry": {"n_detectors": 64, "angle": math.pi / 6},
    "shapes": [{"kind": "disc", "pixels": 5}],
    "K": 2,
    "trials": 3,
    "sweep": {"variable": "K", "values": [1, 2]},
    "max_iter": 5000,
}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestNoise:
    def test_zero_level(self):
        y = np.arange(5.0)
        np.testing.assert_array_equal(add_noise(y, 0, rng_seed=1), y)

    @pytest.mark.parametrize("level", [0.1, 1.0, 10.0, 250.0])
    def test_relative_norm(self, level):
        y = np.random.default_rng(0).random(300)
        out = add_noise(y, level, rng_seed=7)
        assert abs(np.linalg.norm(out - y) / np.linalg.norm(y) - level / 100) <= 1e-12

    def test_seeds_differ_norms_match(self):
        y = np.ones(50)
        a, b = add_noise(y, 1.0, rng_seed=1), add_noise(y, 1.0, rng_seed=2)
        assert not np.allclose(a, b)
        assert np.linalg.norm(a - y) == pytest.approx(np.linalg.norm(b - y), rel=1e-12)
        np.testing.assert_array_equal(add_noise(y, 1.0, rng_seed=1), a)

    def test_negative_level(self):
        with pytest.raises(ValueError):
            add_noise(np.ones(3), -1.0)


class TestJudge:
    def test_exact(self):
        x = np.random.default_rng(0).random(10)
        assert judge_success(x, x, tolerance=0.0)

    def test_zero_estimate(self):
        assert not judge_success(np.zeros(4), np.ones(4))

    def test_zero_truth(self):
        assert judge_success(np.zeros(3), np.zeros(3))
        assert not judge_success(np.ones(3), np.zeros(3))

    def test_one_wrong_pixel(self, small_problem):
        _, _, _, D = small_problem
        ph = random_phantom(D, 3, rng_seed=0)
        bad = ph.x.copy()
        bad[np.flatnonzero(ph.x == 0)[0]] = 1.0
        # symmetric difference of one pixel against a binary support
        expected = 1.0 / math.sqrt(np.count_nonzero(ph.x))
        assert relative_error(bad, ph.x) == pytest.approx(expected, rel=1e-14)
        assert not judge_success(bad, ph.x, 1e-3)


class TestConfig:
    def test_zero_trials_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**TINY, "trials": 0})

    @pytest.mark.parametrize("bad", [{"noise": -1}, {"K": 0}, {"mode": "tv"}, {"bogus": 1},
                                     {"sweep": {"variable": "zoom", "values": [1]}},
                                     {"sweep": {"variable": "K", "values": []}},
                                     {"rotations": []}, {"counts": [1, 2]}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**TINY, **bad})

    def test_json_roundtrip(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(path) == cfg

    def test_sweep_points(self):
        cfg = ExperimentConfig.from_dict({**TINY, "sweep": {"variable": "rotations",
                                                            "values": [1, 5]}})
        assert cfg.at(5).rotations == {"count": 5, "period": math.pi}
        px = ExperimentConfig.from_dict({**TINY, "sweep": {"variable": "disc_pixels",
                                                           "values": [9]}}).at(9)
        assert px.shapes[0]["pixels"] == 9 and px.sweep is None

    def test_trial_seed(self):
        assert trial_seed(5, 3) == 6
        assert len({trial_seed(1234, t) for t in range(100)}) == 100


class TestRunSweep:
    def test_report_and_files(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        report = run_sweep(cfg, tmp_path)
        assert report.variable == "K" and [r.value for r in report.rows] == [1, 2]
        for r in report.rows:
            assert 0 <= r.successes <= r.trials == 3
            assert 0.0 <= r.success_rate <= 1.0
        summary = _rows(tmp_path / "summary.csv")
        assert summary[0] == ["sweep_value", "successes", "trials", "success_rate", "mean_residual"]
        assert len(_rows(tmp_path / "trials.csv")) == 1 + 6
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["trial_seeds"] == [0, 1, 2]
        assert man["problems"][0]["undersampling"] == pytest.approx(256 / 64)
        img = read_pgm(tmp_path / "images" / "00_K_1_phantom.pgm")
        assert img.shape == (16, 16)

    def test_bit_identical_rerun(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        run_sweep(cfg, tmp_path / "a")
        run_sweep(cfg, tmp_path / "b")
        for name in ("summary.csv", "trials.csv", "images/01_K_2_profile.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_infeasible_trials_are_recorded(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**TINY, "sweep": None, "K": 400, "trials": 2})
        report = run_sweep(cfg, tmp_path)
        assert report.rows[0].successes == 0
        rows = _rows(tmp_path / "trials.csv")
        assert all(r[-1] == "PlacementInfeasible" for r in rows[1:])

    def test_trials_are_order_independent(self):
        from cosharp.experiments import run_trial
        cfg = ExperimentConfig.from_dict({**TINY, "sweep": None})
        problem = build_problem(cfg)
        late = run_trial(problem, cfg, 2)
        early = [run_trial(problem, cfg, t) for t in range(3)][2]
        assert late.phantom.columns == early.phantom.columns
        assert late.solver.trace.tobytes() == early.solver.trace.tobytes()


class TestReference:
    def test_full_budget_on_disjoint_dictionary(self, tmp_path):
        base = {**TINY, "sweep": None, "lattice_stride": 4, "max_iter": 10}
        p = build_problem(ExperimentConfig.from_dict(base)).dictionary.p
        cfg = ExperimentConfig.from_dict({**base, "K": p})
        bundle = run_reference_case(cfg, tmp_path)
        D = bundle.problem.dictionary
        np.testing.assert_array_equal(bundle.solutions["cosharp"].z, np.ones(p))
        np.testing.assert_array_equal(bundle.formations["cosharp"].image, D.apply(np.ones(p)))
        assert bundle.rel_error("cosharp") == 0.0

    def test_outputs(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**TINY, "sweep": None, "K": 3})
        bundle = run_reference_case(cfg, tmp_path)
        coef = _rows(tmp_path / "coefficients.csv")
        assert coef[0] == ["index", "shape", "truth", "cosharp", "ssc"]
        assert len(coef) == 1 + bundle.problem.dictionary.p
        np.testing.assert_array_equal(read_vector_csv(tmp_path / "coefficients.csv", "truth"),
                                      bundle.phantom.z)
        for name in ("cosharp_raw.pgm", "ssc_formed.pgm", "phantom.pgm", "errors.csv",
                     "cosharp_trace.csv", "manifest.json", "measurements.csv"):
            assert (tmp_path / name).is_file()


def test_vector_csv_roundtrip(tmp_path):
    v = np.random.default_rng(0).standard_normal(17)
    write_vector_csv(tmp_path / "v.csv", v, "z")
    assert read_vector_csv(tmp_path / "v.csv").tobytes() == v.tobytes()
    (tmp_path / "bare.csv").write_text("1.5\n-2\n")
    np.testing.assert_array_equal(read_vector_csv(tmp_path / "bare.csv"), [1.5, -2.0])


def test_pgm_roundtrip(tmp_path):
    img = np.zeros((3, 4))
    img[0, 1] = 2.0
    img[2, 3] = 1.0
    write_pgm(tmp_path / "i.pgm", img)
    back = read_pgm(tmp_path / "i.pgm")
    assert back[0, 1] == 255 and back[2, 3] == 128 and back.sum() == 383

import numpy as np
import pytest

from sgdinfer.core import RngStream
from sgdinfer.inference import (
    DivergenceError,
    InferenceSamples,
    SegmentRun,
    SgdConfig,
    confidence_intervals,
    inference_covariance,
    prediction_interval,
    rescale_samples,
    run_sgd_segments,
    segment_autocorrelation,
    write_iterate_trace,
)
from sgdinfer.models import BatchSpec, Dataset, Family, ModelSpec, PsiMode


def _linear_data(n=30, p=2, seed=5):
    gen = RngStream(seed, (3,)).generator()
    x = gen.standard_normal((n, p))
    y = x @ np.ones(p) + gen.standard_normal(n)
    return Dataset(x, y)


def _run_of(samples_2d):
    arr = np.asarray(samples_2d, dtype=float)
    return SegmentRun(arr, arr.mean(axis=0), 0)


def _samples_of(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return InferenceSamples(arr, arr.mean(axis=0), 1.0, 1, 1)


class TestChainAgainstRecursion:
    def test_mean_single_point_is_exponential_smoothing(self):
        # n=1 removes sampling noise: theta_{k+1} = (1-eta) theta_k + eta x
        x = np.array([[2.5]])
        cfg = SgdConfig(eta=0.3, segment_len=4, discard=2, burn_in=3, segments=2, seed=0)
        run = run_sgd_segments(ModelSpec(Family.MEAN_ESTIMATION), Dataset(x), cfg, record_trace=True)
        theta = 0.0
        for k in range(cfg.total_steps):
            theta = (1 - 0.3) * theta + 0.3 * 2.5
            assert run.trace[k + 1, 0] == pytest.approx(theta, abs=1e-12)
        assert run.trace[0, 0] == 0.0

    def test_exponential_single_point_recursion(self):
        x = np.array([1.8])
        cfg = SgdConfig(eta=0.05, segment_len=5, discard=0, burn_in=2, segments=3, seed=1)
        run = run_sgd_segments(ModelSpec(Family.EXPONENTIAL_MLE), Dataset(x), cfg, record_trace=True)
        theta = 1.0
        for k in range(cfg.total_steps):
            theta = theta - 0.05 * (1.8 - 1.0 / theta)
            assert run.trace[k + 1, 0] == pytest.approx(theta, abs=1e-12)

    def test_segment_averages_recomputable_from_trace(self):
        data = _linear_data()
        cfg = SgdConfig(eta=0.1, segment_len=5, discard=3, burn_in=7, segments=4, seed=9)
        run = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, cfg, record_trace=True)
        b, t, d = cfg.burn_in, cfg.segment_len, cfg.discard
        for i in range(cfg.segments):
            start = b + 1 + i * (t + d)
            block = run.trace[start : start + t]
            assert np.allclose(run.segment_averages[i], block.mean(axis=0), atol=1e-12)
        assert np.allclose(run.point_estimate, run.segment_averages.mean(axis=0), atol=1e-15)

    def test_gradient_evaluations_counts_every_step(self):
        data = _linear_data()
        cfg = SgdConfig(eta=0.05, segment_len=6, discard=2, burn_in=11, segments=5, seed=2)
        run = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, cfg)
        assert run.gradient_evaluations == 11 + 5 * (6 + 2) == cfg.total_steps

    def test_fixed_point_stays_put(self):
        # identical rows and a start at their value make every update zero
        data = Dataset(np.full((6, 2), 1.25))
        cfg = SgdConfig(
            eta=0.4, segment_len=3, discard=1, burn_in=2, segments=4,
            theta_init=np.array([1.25, 1.25]), seed=0,
        )
        run = run_sgd_segments(ModelSpec(Family.MEAN_ESTIMATION), data, cfg)
        assert np.array_equal(run.segment_averages, np.full((4, 2), 1.25))

    def test_bit_identical_across_calls_and_sensitive_to_seed(self):
        data = _linear_data(seed=8)
        cfg = SgdConfig(eta=0.1, segment_len=10, discard=2, burn_in=5, segments=6, seed=123)
        a = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, cfg)
        b = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, cfg)
        assert np.array_equal(a.segment_averages, b.segment_averages)
        other = SgdConfig(eta=0.1, segment_len=10, discard=2, burn_in=5, segments=6, seed=124)
        c = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, other)
        assert not np.array_equal(a.segment_averages, c.segment_averages)

    def test_divergence_reports_step(self):
        gen = RngStream(3).generator()
        data = Dataset(gen.standard_normal((10, 1)))
        cfg = SgdConfig(eta=3.0, segment_len=1, discard=0, burn_in=0, segments=3000, seed=4)
        with pytest.raises(DivergenceError) as err:
            run_sgd_segments(ModelSpec(Family.MEAN_ESTIMATION), data, cfg)
        assert 0 <= err.value.step < cfg.total_steps
        assert "reduce the step size" in str(err.value)

    def test_positive_domain_exit_diverges(self):
        # a big step pushes the rate parameter through zero
        data = Dataset(np.array([5.0, 6.0]))
        cfg = SgdConfig(eta=2.0, segment_len=1, discard=0, burn_in=0, segments=50, seed=0)
        with pytest.raises(DivergenceError):
            run_sgd_segments(ModelSpec(Family.EXPONENTIAL_MLE), data, cfg)

    def test_modified_logistic_runs_both_psi_modes(self):
        gen = RngStream(6).generator()
        y = np.where(gen.random(40) < 0.5, 1.0, -1.0)
        x = 0.2 * y[:, None] + gen.standard_normal((40, 3))
        data = Dataset(x, y)
        cfg = SgdConfig(
            eta=0.05, segment_len=20, discard=5, burn_in=50, segments=8,
            batch=BatchSpec(s_psi=2, s_upsilon=2), seed=11,
        )
        for mode in (PsiMode.WITH_REPLACEMENT, PsiMode.WITHOUT_REPLACEMENT):
            run = run_sgd_segments(ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0, psi_mode=mode), data, cfg)
            assert run.segment_averages.shape == (8, 3)
            assert np.all(np.isfinite(run.segment_averages))

    def test_without_replacement_batch_cannot_exceed_n(self):
        data = Dataset(np.ones((3, 1)), np.array([1.0, -1.0, 1.0]))
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0, psi_mode=PsiMode.WITHOUT_REPLACEMENT)
        cfg = SgdConfig(
            eta=0.01, segment_len=2, discard=0, burn_in=0, segments=2,
            batch=BatchSpec(s_psi=5, s_upsilon=1), seed=0,
        )
        with pytest.raises(ValueError, match="s_psi"):
            run_sgd_segments(model, data, cfg)


class TestConfigValidation:
    def test_rejects_bad_fields(self):
        good = dict(eta=0.1, segment_len=5, discard=1, burn_in=1, segments=2)
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "eta": 0.0})
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "eta": float("inf")})
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "segment_len": 0})
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "discard": -1})
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "segments": 2.0})
        with pytest.raises(ValueError):
            SgdConfig(**{**good, "seed": -3})


class TestRescaling:
    def test_hand_worked_example(self):
        run = _run_of([[0.5]])
        out = rescale_samples(run, scale_factor=2.0, n_obs=50, segment_len=100,
                              theta_hat=np.array([0.0]))
        assert out.samples[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_unit_scale_at_matching_sizes_is_identity(self):
        run = _run_of([[0.3, -0.4], [0.9, 0.1], [0.0, 0.2]])
        out = rescale_samples(run, scale_factor=1.0, n_obs=7, segment_len=7)
        assert np.allclose(out.samples, run.segment_averages, atol=1e-15)

    def test_roundtrip_recovers_averages(self):
        gen = RngStream(15).generator()
        run = _run_of(gen.standard_normal((12, 3)))
        out = rescale_samples(run, scale_factor=3.0, n_obs=40, segment_len=25)
        factor = np.sqrt(3.0 * 25 / 40)
        back = out.theta_hat + (out.samples - out.theta_hat) / factor
        assert np.allclose(back, run.segment_averages, atol=1e-12)

    def test_quadrupled_scale_quadruples_covariance(self):
        gen = RngStream(16).generator()
        run = _run_of(gen.standard_normal((20, 2)))
        small = inference_covariance(rescale_samples(run, 1.5, 30, 10))
        big = inference_covariance(rescale_samples(run, 6.0, 30, 10))
        assert np.allclose(big, 4.0 * small, rtol=1e-12)

    def test_validation(self):
        run = _run_of([[1.0], [2.0]])
        with pytest.raises(ValueError):
            rescale_samples(run, 0.0, 10, 5)
        with pytest.raises(ValueError):
            rescale_samples(run, 1.0, 0, 5)
        with pytest.raises(ValueError):
            rescale_samples(run, 1.0, 10, 0)
        with pytest.raises(ValueError):
            rescale_samples(run, 1.0, 10, 5, theta_hat=np.zeros(3))


class TestIntervals:
    def test_median_band_on_integers(self):
        samples = _samples_of(np.arange(1.0, 101.0))
        table = confidence_intervals(samples, level=0.5)
        assert table.lower[0] == pytest.approx(25.75, abs=1e-12)
        assert table.upper[0] == pytest.approx(75.25, abs=1e-12)

    def test_normal_draws_bracket_reference_quantiles(self):
        gen = RngStream(42).generator()
        samples = _samples_of(gen.standard_normal(1000))
        table = confidence_intervals(samples, level=0.95)
        assert table.lower[0] == pytest.approx(-1.96, abs=0.15)
        assert table.upper[0] == pytest.approx(1.96, abs=0.15)

    def test_level_and_size_validated(self):
        samples = _samples_of([1.0, 2.0])
        with pytest.raises(ValueError):
            confidence_intervals(samples, level=1.0)
        with pytest.raises(ValueError):
            confidence_intervals(_samples_of([1.0]), level=0.5)

    def test_prediction_scores_scale_with_x(self):
        samples = _samples_of(np.arange(1.0, 101.0))
        lo, hi = prediction_interval(samples, np.array([2.0]), level=0.5)
        assert lo == pytest.approx(51.5, abs=1e-12)
        assert hi == pytest.approx(150.5, abs=1e-12)

    def test_prediction_zero_direction_collapses(self):
        gen = RngStream(17).generator()
        samples = _samples_of(gen.standard_normal((30, 4)))
        lo, hi = prediction_interval(samples, np.zeros(4))
        assert lo == 0.0 and hi == 0.0

    def test_prediction_validation(self):
        samples = _samples_of(np.arange(10.0))
        with pytest.raises(ValueError):
            prediction_interval(samples, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            prediction_interval(samples, np.array([np.nan]))
        with pytest.raises(ValueError):
            prediction_interval(samples, np.array([1.0]), level=0.0)


class TestAutocorrelation:
    def test_alternating_series_is_minus_one(self):
        run = _run_of(np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])[:, None])
        result = segment_autocorrelation(run)
        assert result.value == pytest.approx(-1.0, abs=1e-12)
        assert not result.degenerate

    def test_constant_series_degenerate(self):
        run = _run_of(np.full((5, 1), 2.0))
        result = segment_autocorrelation(run)
        assert result.degenerate and result.value == 0.0

    def test_uses_highest_variance_coordinate(self):
        quiet = np.zeros(6)
        loud = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        run = _run_of(np.column_stack([quiet, loud]))
        assert segment_autocorrelation(run).value == pytest.approx(-1.0, abs=1e-12)

    def test_needs_three_segments(self):
        with pytest.raises(ValueError):
            segment_autocorrelation(_run_of([[1.0], [2.0]]))

    def test_longer_discard_decorrelates(self):
        data = _linear_data(n=50, p=1, seed=21)
        model = ModelSpec(Family.LINEAR_REGRESSION)
        values = []
        for d in (0, 40):
            cfg = SgdConfig(eta=0.3, segment_len=2, discard=d, burn_in=100, segments=400, seed=5)
            values.append(abs(segment_autocorrelation(run_sgd_segments(model, data, cfg)).value))
        assert values[1] < values[0]


class TestStationaryVariance:
    def test_single_iterate_variance_matches_linear_theory(self):
        # scalar mean estimation: Var(theta_inf) = eta * v / (2 - eta)
        gen = RngStream(30).generator()
        x = gen.standard_normal(50)
        v = float(np.var(x))
        eta = 0.5
        cfg = SgdConfig(eta=eta, segment_len=1, discard=0, burn_in=2000, segments=100_000, seed=77)
        run = run_sgd_segments(ModelSpec(Family.MEAN_ESTIMATION), Dataset(x), cfg)
        observed = float(np.var(run.segment_averages[:, 0]))
        expected = eta * v / (2.0 - eta)
        assert observed == pytest.approx(expected, rel=0.10)


class TestTraceExport:
    def test_csv_roundtrip(self, tmp_path):
        data = _linear_data(n=10, p=2, seed=33)
        cfg = SgdConfig(eta=0.1, segment_len=3, discard=1, burn_in=2, segments=2, seed=0)
        run = run_sgd_segments(ModelSpec(Family.LINEAR_REGRESSION), data, cfg, record_trace=True)
        path = tmp_path / "trace.csv"
        write_iterate_trace(run, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,coord_0,coord_1"
        assert len(lines) == cfg.total_steps + 2
        body = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(body[:, 0], np.arange(cfg.total_steps + 1))
        assert np.allclose(body[:, 1:], run.trace, atol=0)

    def test_missing_trace_rejected(self, tmp_path):
        run = _run_of([[1.0], [2.0]])
        with pytest.raises(ValueError):
            write_iterate_trace(run, tmp_path / "x.csv")

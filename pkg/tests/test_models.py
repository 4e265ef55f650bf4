import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgdinfer.core import RngStream
from sgdinfer.models import (
    BatchSpec,
    Dataset,
    Family,
    ModelSpec,
    PsiMode,
    gradient,
    gradient_at_indices,
    hessian,
    loss,
    modified_logistic_stochastic_gradient,
    per_sample_gradients,
    psi_factor_second_moment,
    scaling_factor,
    stochastic_gradient,
    underlying_model,
)

VECTOR_FAMILIES = (Family.MEAN_ESTIMATION, Family.LINEAR_REGRESSION, Family.LOGISTIC_VANILLA)
SCALAR_FAMILIES = (Family.EXPONENTIAL_MLE, Family.POISSON_MLE)


def _dataset_for(family, n=12, p=3, seed=0):
    gen = RngStream(seed, (41,)).generator()
    if family in SCALAR_FAMILIES:
        if family is Family.EXPONENTIAL_MLE:
            return Dataset(gen.exponential(0.7, size=n))
        return Dataset(gen.poisson(2.5, size=n).astype(float) + 1.0)
    x = gen.standard_normal((n, p))
    if family is Family.MEAN_ESTIMATION:
        return Dataset(x)
    if family is Family.LINEAR_REGRESSION:
        return Dataset(x, x @ np.linspace(0.5, 1.5, p) + gen.standard_normal(n))
    y = np.where(gen.random(n) < 0.5, 1.0, -1.0)
    return Dataset(x, y)


def _theta_for(family, p=3):
    if family in SCALAR_FAMILIES:
        return np.array([1.3])
    return np.linspace(-0.4, 0.6, p)


def _all_models():
    for family in VECTOR_FAMILIES + SCALAR_FAMILIES:
        yield ModelSpec(family), _dataset_for(family), _theta_for(family)
    data = _dataset_for(Family.LOGISTIC_VANILLA, seed=3)
    yield ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0), data, _theta_for(Family.LOGISTIC_VANILLA)


class TestDerivativesByFiniteDifferences:
    @pytest.mark.parametrize("model,data,theta", list(_all_models()), ids=lambda v: getattr(getattr(v, "family", None), "value", ""))
    def test_gradient_matches_loss_slope(self, model, data, theta):
        g = gradient(model, theta, data)
        h = 1e-6
        for j in range(len(theta)):
            e = np.zeros_like(theta)
            e[j] = h
            fd = (loss(model, theta + e, data) - loss(model, theta - e, data)) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    @pytest.mark.parametrize("model,data,theta", list(_all_models()), ids=lambda v: getattr(getattr(v, "family", None), "value", ""))
    def test_hessian_matches_gradient_slope(self, model, data, theta):
        hess = hessian(model, theta, data)
        assert np.allclose(hess, hess.T, atol=1e-12)
        h = 1e-6
        for j in range(len(theta)):
            e = np.zeros_like(theta)
            e[j] = h
            fd = (gradient(model, theta + e, data) - gradient(model, theta - e, data)) / (2 * h)
            assert np.allclose(hess[:, j], fd, rtol=1e-4, atol=1e-6)


class TestFrozenValues:
    def test_logistic_loss_at_origin(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA)
        val = loss(ModelSpec(Family.LOGISTIC_VANILLA), np.zeros(3), data)
        assert val == pytest.approx(math.log(2.0), abs=1e-12)

    def test_modified_logistic_loss_at_origin(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA)
        val = loss(ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0), np.zeros(3), data)
        assert val == pytest.approx(0.5 * (1.0 + math.log(2.0)) ** 2, abs=1e-12)

    def test_exponential_loss_at_one(self):
        data = Dataset(np.array([0.5, 1.5, 2.0]))
        model = ModelSpec(Family.EXPONENTIAL_MLE)
        assert loss(model, [1.0], data) == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert gradient(model, [1.0], data)[0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_poisson_loss_at_one(self):
        data = Dataset(np.array([1.0, 2.0, 3.0]))
        model = ModelSpec(Family.POISSON_MLE)
        assert loss(model, [1.0], data) == pytest.approx(1.0, abs=1e-12)
        assert hessian(model, [1.0], data)[0, 0] == pytest.approx(2.0, abs=1e-12)

    def test_mean_estimation_hessian_identity(self):
        data = _dataset_for(Family.MEAN_ESTIMATION)
        assert np.array_equal(hessian(ModelSpec(Family.MEAN_ESTIMATION), np.zeros(3), data), np.eye(3))


class TestUnbiasedness:
    @pytest.mark.parametrize("family", VECTOR_FAMILIES + SCALAR_FAMILIES)
    def test_batch_enumeration_matches_full_gradient(self, family):
        # all n^S with-replacement batches, n=4, S=2
        n, s = 4, 2
        p = 1 if family in SCALAR_FAMILIES else 2
        data = _dataset_for(family, n=n, p=p, seed=7)
        model = ModelSpec(family)
        theta = _theta_for(family, p)
        total = np.zeros(p)
        for idx in itertools.product(range(n), repeat=s):
            total += gradient_at_indices(model, theta, data, idx)
        avg = total / n**s
        assert np.allclose(avg, gradient(model, theta, data), atol=1e-12)

    def test_modified_two_factor_enumeration(self):
        # n=2, one draw per factor: average product over all (i, j) pairs
        data = Dataset(np.array([[0.8, -0.2], [-0.5, 1.0]]), np.array([1.0, -1.0]))
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=0.7)
        theta = np.array([0.3, -0.1])
        base = ModelSpec(Family.LOGISTIC_VANILLA)
        losses = [loss(base, theta, data.subset([i])) for i in range(2)]
        grads = [gradient(base, theta, data.subset([j])) for j in range(2)]
        total = np.zeros(2)
        for i, j in itertools.product(range(2), repeat=2):
            total += (model.c + losses[i]) * grads[j]
        assert np.allclose(total / 4.0, gradient(model, theta, data), atol=1e-12)

    def test_stochastic_gradient_seeded_average(self):
        model = ModelSpec(Family.LINEAR_REGRESSION)
        data = _dataset_for(Family.LINEAR_REGRESSION, n=6, p=2, seed=9)
        theta = np.array([0.2, -0.3])
        gen = RngStream(21).generator()
        draws = np.array([
            stochastic_gradient(model, theta, data, BatchSpec(size=2), gen)
            for _ in range(4000)
        ])
        assert np.allclose(draws.mean(axis=0), gradient(model, theta, data), atol=0.05)


class TestPsiFactorSecondMoment:
    def _tiny(self):
        data = Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5]]), np.array([1.0, -1.0, 1.0]))
        theta = np.array([0.4, -0.2])
        base = ModelSpec(Family.LOGISTIC_VANILLA)
        k = [loss(base, theta, data.subset([i])) for i in range(3)]
        return data, theta, k

    def test_with_replacement_enumeration(self):
        data, theta, k = self._tiny()
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.2, psi_mode=PsiMode.WITH_REPLACEMENT)
        expected = np.mean([
            (model.c + (k[i] + k[j]) / 2.0) ** 2
            for i, j in itertools.product(range(3), repeat=2)
        ])
        assert psi_factor_second_moment(model, theta, data, 2) == pytest.approx(expected, abs=1e-12)

    def test_without_replacement_enumeration(self):
        data, theta, k = self._tiny()
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.2, psi_mode=PsiMode.WITHOUT_REPLACEMENT)
        expected = np.mean([
            (model.c + (k[i] + k[j]) / 2.0) ** 2
            for i, j in itertools.combinations(range(3), 2)
        ])
        assert psi_factor_second_moment(model, theta, data, 2) == pytest.approx(expected, abs=1e-12)

    def test_single_draw_collapses(self):
        data, theta, k = self._tiny()
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.2)
        expected = np.mean([(model.c + ki) ** 2 for ki in k])
        assert psi_factor_second_moment(model, theta, data, 1) == pytest.approx(expected, abs=1e-12)

    def test_full_sample_without_replacement_degenerate(self):
        data, theta, k = self._tiny()
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.2, psi_mode=PsiMode.WITHOUT_REPLACEMENT)
        expected = (model.c + np.mean(k)) ** 2
        assert psi_factor_second_moment(model, theta, data, 3) == pytest.approx(expected, abs=1e-12)


class TestScalingFactor:
    @pytest.mark.parametrize("family", VECTOR_FAMILIES + SCALAR_FAMILIES)
    def test_batch_mean_families_use_batch_size(self, family):
        p = 1 if family in SCALAR_FAMILIES else 3
        data = _dataset_for(family, p=p)
        theta = _theta_for(family, p)
        assert scaling_factor(ModelSpec(family), theta, data, BatchSpec(size=4)) == 4.0

    def test_modified_logistic_ratio(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA, seed=5)
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0)
        theta = np.array([0.1, 0.0, -0.2])
        k = loss(ModelSpec(Family.LOGISTIC_VANILLA), theta, data)
        kg = psi_factor_second_moment(model, theta, data, 2)
        got = scaling_factor(model, theta, data, BatchSpec(s_psi=2, s_upsilon=3))
        assert got == pytest.approx((1.0 + k) ** 2 / kg, abs=1e-12)
        # second moment dominates the squared mean, so the ratio is below 1
        assert got < 1.0


class TestModifiedStochasticGradient:
    def test_seeded_average_matches_gradient(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA, n=8, seed=11)
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0)
        theta = np.array([0.2, -0.1, 0.05])
        gen = RngStream(33).generator()
        batch = BatchSpec(s_psi=2, s_upsilon=3)
        draws = np.array([
            modified_logistic_stochastic_gradient(model, theta, data, batch, gen)
            for _ in range(6000)
        ])
        assert np.allclose(draws.mean(axis=0), gradient(model, theta, data), atol=0.01)

    def test_without_replacement_full_sample_fixes_scalar(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA, n=5, seed=13)
        model = ModelSpec(Family.LOGISTIC_MODIFIED, c=1.0, psi_mode=PsiMode.WITHOUT_REPLACEMENT)
        theta = np.array([0.1, 0.2, -0.3])
        k = loss(ModelSpec(Family.LOGISTIC_VANILLA), theta, data)
        batch = BatchSpec(s_psi=5, s_upsilon=1)
        grads = per_sample_gradients(ModelSpec(Family.LOGISTIC_VANILLA), theta, data)
        g = modified_logistic_stochastic_gradient(model, theta, data, batch, RngStream(2))
        scales = (g @ grads.T) / np.sum(grads * grads, axis=1)
        assert np.any(np.isclose(scales, 1.0 + k, atol=1e-10))

    def test_vanilla_family_rejected(self):
        data = _dataset_for(Family.LOGISTIC_VANILLA)
        with pytest.raises(ValueError):
            modified_logistic_stochastic_gradient(
                ModelSpec(Family.LOGISTIC_VANILLA), np.zeros(3), data, BatchSpec(), RngStream(1)
            )
        with pytest.raises(ValueError):
            stochastic_gradient(
                ModelSpec(Family.LOGISTIC_MODIFIED), np.zeros(3), data, BatchSpec(), RngStream(1)
            )


class TestValidation:
    def test_dataset_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0], [np.inf]]))
        with pytest.raises(ValueError):
            Dataset(np.ones((2, 1)), np.array([1.0, np.nan]))

    def test_dataset_response_length(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 1)), np.ones(2))

    def test_one_dimensional_features_get_column(self):
        d = Dataset(np.arange(4.0))
        assert d.features.shape == (4, 1)
        assert d.n == 4 and d.p == 1

    def test_subset_keeps_rows(self):
        d = Dataset(np.arange(8.0).reshape(4, 2), np.arange(4.0))
        s = d.subset([2, 0, 2])
        assert np.array_equal(s.features, d.features[[2, 0, 2]])
        assert np.array_equal(s.response, [2.0, 0.0, 2.0])

    def test_logistic_labels_checked_with_row(self):
        data = Dataset(np.ones((3, 1)), np.array([1.0, 0.0, -1.0]))
        with pytest.raises(ValueError, match="row 1"):
            loss(ModelSpec(Family.LOGISTIC_VANILLA), np.zeros(1), data)

    def test_scalar_families_need_positive_theta(self):
        data = Dataset(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            loss(ModelSpec(Family.EXPONENTIAL_MLE), [-0.5], data)
        with pytest.raises(ValueError):
            loss(ModelSpec(Family.POISSON_MLE), [0.0], data)

    def test_modified_needs_positive_shift(self):
        with pytest.raises(ValueError):
            ModelSpec(Family.LOGISTIC_MODIFIED, c=0.0)

    def test_batch_spec_positive(self):
        with pytest.raises(ValueError):
            BatchSpec(size=0)
        with pytest.raises(ValueError):
            BatchSpec(s_psi=-1)

    def test_underlying_model(self):
        assert underlying_model(ModelSpec(Family.LOGISTIC_MODIFIED)).family is Family.LOGISTIC_VANILLA
        m = ModelSpec(Family.LINEAR_REGRESSION)
        assert underlying_model(m) is m

    @given(st.integers(2, 20), st.integers(1, 6))
    def test_per_sample_gradients_average_to_gradient(self, n, p):
        gen = RngStream(n * 31 + p, (5,)).generator()
        data = Dataset(gen.standard_normal((n, p)), gen.standard_normal(n))
        model = ModelSpec(Family.LINEAR_REGRESSION)
        theta = gen.standard_normal(p)
        avg = per_sample_gradients(model, theta, data).mean(axis=0)
        assert np.allclose(avg, gradient(model, theta, data), atol=1e-10)

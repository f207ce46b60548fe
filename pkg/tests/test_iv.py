import numpy as np
import pytest

from dualreg.core import Dataset, build_design
from dualreg.exceptions import (
    DataError,
    NotJustIdentifiedError,
    SingularJacobianError,
)
from dualreg.iv import (
    covariance_iv,
    first_stage,
    fit_iv_direct,
    fit_iv_indirect,
    recover_multipliers,
    two_stage_least_squares,
)
from dualreg.basis import rational_cubic_basis
from dualreg.solver import fit_dual


def draw_endogenous(n, rng):
    """Location-scale structural model with an endogenous regressor.

    Bounded shocks keep the regressor support strictly positive, so the
    structural scale 0.5 + 0.2 x stays above 0.5 everywhere. The error
    mixes the regressor shock with an independent one (normalized to unit
    variance), so the regressor is endogenous while the instrument stays
    valid; the structural truth is (1, 1) location and (0.5, 0.2) scale.
    """
    z = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    w = rng.standard_normal(n)
    x = 1.0 + z + v  # support (0, 2)
    estar = (v + w) / np.sqrt(1.0 / 12.0 + 1.0)
    y = 1.0 + x + (0.5 + 0.2 * x) * estar
    return y, x, z


def exogenous_dataset(n=400, seed=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 3.0, n)
    y = 1.0 + 0.8 * x + (0.3 + 0.1 * x) * rng.standard_normal(n)
    return Dataset(y=y, x=x, z=x)


class TestFirstStage:
    def test_self_projection(self):
        ds = exogenous_dataset()
        fs = first_stage(ds)
        assert np.max(np.abs(fs.fitted - build_design(ds).values)) < 1e-10

    def test_residuals_orthogonal_to_instruments(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=500)
        x = 1.0 + 0.8 * z + rng.normal(size=500)
        y = x + rng.normal(size=500)
        ds = Dataset(y=y, x=x, z=z)
        fs = first_stage(ds)
        zd = build_design(ds, use_instruments=True).values
        resid = build_design(ds).values - fs.fitted
        scale = max(1.0, np.abs(resid).max())
        assert np.max(np.abs(zd.T @ resid)) <= 1e-8 * 500 * scale

    def test_irrelevant_instrument_slope_vanishes(self):
        rng = np.random.default_rng(7)
        n = 4000
        z = rng.normal(size=n)
        x = 1.0 + rng.normal(size=n)  # independent of z
        y = x + rng.normal(size=n)
        ds = Dataset(y=y, x=x, z=z)
        fs = first_stage(ds)
        slope = fs.coefficients[1, 1]
        # classical OLS standard error of the first-stage slope
        zd = build_design(ds, use_instruments=True).values
        resid = x - fs.fitted[:, 1]
        se = np.sqrt(
            (resid @ resid / (n - 2)) * np.linalg.inv(zd.T @ zd)[1, 1]
        )
        assert abs(slope) < 3.0 * se

    def test_textbook_first_stage_slope(self):
        rng = np.random.default_rng(9)
        n = 5000
        z = rng.normal(size=n)
        x = 1.0 + 0.8 * z + rng.normal(size=n)
        y = x + rng.normal(size=n)
        ds = Dataset(y=y, x=x, z=z)
        fs = first_stage(ds)
        zd = build_design(ds, use_instruments=True).values
        resid = x - fs.fitted[:, 1]
        se = np.sqrt((resid @ resid / (n - 2)) * np.linalg.inv(zd.T @ zd)[1, 1])
        assert abs(fs.coefficients[1, 1] - 0.8) < 3.0 * se

    def test_requires_instruments(self):
        with pytest.raises(DataError):
            first_stage(Dataset(y=[1.0, 2.0, 3.0, 4.0], x=[[0.1], [0.2], [0.4], [0.3]]))


class TestTwoStageLeastSquares:
    def test_equals_ols_when_z_is_x(self):
        ds = exogenous_dataset()
        xd = build_design(ds).values
        ols = np.linalg.lstsq(xd, ds.y, rcond=None)[0]
        assert np.allclose(two_stage_least_squares(ds.y, ds), ols, atol=1e-10)

    def test_matches_projection_formula(self):
        rng = np.random.default_rng(13)
        y, x, z = draw_endogenous(800, rng)
        ds = Dataset(y=y, x=x, z=z)
        beta = two_stage_least_squares(y, ds)
        xd = build_design(ds).values
        zd = build_design(ds, use_instruments=True).values
        pz = zd @ np.linalg.solve(zd.T @ zd, zd.T)
        textbook = np.linalg.solve(xd.T @ pz @ xd, xd.T @ pz @ y)
        assert np.max(np.abs(beta - textbook)) < 1e-10 * max(1.0, np.abs(textbook).max())

    def test_weak_instrument_does_not_crash(self):
        rng = np.random.default_rng(15)
        n = 500
        z = rng.normal(size=n)
        x = 1.0 + 1e-6 * z + rng.normal(size=n)
        y = x + rng.normal(size=n)
        ds = Dataset(y=y, x=x, z=z)
        beta = two_stage_least_squares(y, ds)
        assert np.all(np.isfinite(beta))

    def test_underidentified_rejected(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(50, 2))
        z = rng.normal(size=50)
        y = x @ [1.0, -1.0] + rng.normal(size=50)
        ds = Dataset(y=y, x=x, z=z)
        with pytest.raises(DataError):
            two_stage_least_squares(y, ds)


class TestFitIvDirect:
    def test_exogenous_reduction(self):
        ds = exogenous_dataset()
        fit = fit_iv_direct(ds.y, ds)
        dual = fit_dual(ds.y, build_design(ds))
        assert fit.converged
        assert np.max(np.abs(fit.beta1 - dual.lambda1)) < 1e-8
        assert np.max(np.abs(fit.beta2 - dual.lambda2)) < 1e-8
        assert np.max(np.abs(fit.e - dual.e)) < 1e-8
        assert np.max(np.abs(fit.u - dual.u)) < 1e-12
        # multipliers equal parameters in the exogenous case
        assert np.max(np.abs(fit.lambda1 - fit.beta1)) < 1e-8
        assert np.max(np.abs(fit.lambda2 - fit.beta2)) < 1e-8

    def test_rejects_overidentification(self):
        rng = np.random.default_rng(19)
        z = rng.normal(size=(200, 2))
        x = 1.0 + z @ [0.7, 0.4] + rng.normal(size=200)
        y = x + rng.normal(size=200)
        ds = Dataset(y=y, x=x, z=z)
        with pytest.raises(NotJustIdentifiedError):
            fit_iv_direct(y, ds)

    def test_constant_instrument_is_singular(self):
        rng = np.random.default_rng(21)
        x = rng.uniform(0.5, 2.0, 200)
        y = 1.0 + x + 0.5 * rng.standard_normal(200)
        ds = Dataset(y=y, x=x, z=np.full(200, 3.0))
        with pytest.raises(SingularJacobianError):
            fit_iv_direct(y, ds)

    def test_endogenous_recovery(self):
        reps = 60
        estimates = np.zeros((reps, 4))
        for r in range(reps):
            rng = np.random.default_rng(900 + r)
            y, x, z = draw_endogenous(5000, rng)
            fit = fit_iv_direct(y, Dataset(y=y, x=x, z=z))
            assert fit.converged
            estimates[r] = np.concatenate([fit.beta1, fit.beta2])
        truth = np.array([1.0, 1.0, 0.5, 0.2])
        mean = estimates.mean(axis=0)
        se = estimates.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(mean - truth) <= 3.0 * se)

    def test_moment_conditions_hold(self):
        rng = np.random.default_rng(23)
        y, x, z = draw_endogenous(2000, rng)
        ds = Dataset(y=y, x=x, z=z)
        fit = fit_iv_direct(y, ds)
        zd = build_design(ds, use_instruments=True).values
        n = len(y)
        scale = np.maximum(1.0, np.sqrt(np.mean(zd**2, axis=0)))
        g1 = np.abs(zd.T @ fit.e) / (n * scale)
        g2 = np.abs(zd.T @ (fit.e**2 - 1.0)) / (2 * n * scale)
        assert max(g1.max(), g2.max()) < 1e-8
        assert np.all(build_design(ds).values @ fit.beta2 > 0)


class TestRecoverMultipliers:
    def test_exogenous_multipliers_equal_parameters(self):
        ds = exogenous_dataset(seed=29)
        fit = fit_iv_direct(ds.y, ds)
        lam1, lam2 = recover_multipliers(fit, ds.y, ds)
        assert np.max(np.abs(lam1 - fit.beta1)) < 1e-8
        assert np.max(np.abs(lam2 - fit.beta2)) < 1e-8

    def test_stationarity_residual_small(self):
        rng = np.random.default_rng(31)
        y, x, z = draw_endogenous(3000, rng)
        ds = Dataset(y=y, x=x, z=z)
        fit = fit_iv_direct(y, ds)
        lam1, lam2 = recover_multipliers(fit, y, ds)
        xd = build_design(ds).values
        zd = build_design(ds, use_instruments=True).values
        s = xd @ fit.beta2
        d = np.column_stack([-xd / s[:, None], -xd * (fit.e / s)[:, None]])
        resid = d.T @ (y - zd @ lam1 - (zd @ lam2) * fit.e)
        assert np.max(np.abs(resid)) < 1e-8 * max(1.0, np.abs(d.T @ y).max())

    def test_linear_in_outcomes_for_fixed_residuals(self):
        ds = exogenous_dataset(seed=37)
        fit = fit_iv_direct(ds.y, ds)
        lam1, lam2 = recover_multipliers(fit, ds.y, ds)
        lam1b, lam2b = recover_multipliers(fit, 2.0 * ds.y, ds)
        assert np.allclose(lam1b, 2.0 * lam1, rtol=1e-10)
        assert np.allclose(lam2b, 2.0 * lam2, rtol=1e-10)


class TestFitIvIndirect:
    def test_exogenous_reduction(self):
        ds = exogenous_dataset(seed=41)
        fit = fit_iv_indirect(ds.y, ds)
        dual = fit_dual(ds.y, build_design(ds))
        assert fit.converged
        assert np.max(np.abs(fit.beta1 - dual.lambda1)) < 1e-8
        assert np.max(np.abs(fit.beta2 - dual.lambda2)) < 1e-8
        assert np.max(np.abs(fit.u - dual.u)) < 1e-12

    def test_endogenous_recovery(self):
        reps = 40
        estimates = np.zeros((reps, 4))
        for r in range(reps):
            rng = np.random.default_rng(1700 + r)
            y, x, z = draw_endogenous(5000, rng)
            fit = fit_iv_indirect(y, Dataset(y=y, x=x, z=z))
            estimates[r] = np.concatenate([fit.beta1, fit.beta2])
        truth = np.array([1.0, 1.0, 0.5, 0.2])
        mean = estimates.mean(axis=0)
        se = estimates.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(mean - truth) <= 3.0 * se)

    def test_location_only_reproduces_two_stage_least_squares(self):
        rng = np.random.default_rng(43)
        y, x, z = draw_endogenous(1500, rng)
        ds = Dataset(y=y, x=x, z=z)
        restricted = fit_iv_indirect(y, ds, location_only=True)
        b2sls = two_stage_least_squares(y, ds)
        assert np.max(np.abs(restricted.beta1 - b2sls)) < 1e-8
        assert np.allclose(restricted.beta2[1:], 0.0)

    def test_overidentified_allowed(self):
        rng = np.random.default_rng(47)
        n = 2000
        z = rng.uniform(-1.5, 1.5, size=(n, 2))
        v = rng.uniform(-1.0, 1.0, n)
        x = 1.0 + 0.7 * z[:, 0] + 0.4 * z[:, 1] + v
        estar = (v + rng.standard_normal(n)) / np.sqrt(1.0 + 1.0 / 3.0)
        y = 1.0 + x + (1.0 + 0.1 * x) * estar
        ds = Dataset(y=y, x=x, z=z)
        fit = fit_iv_indirect(y, ds)
        assert fit.converged
        assert np.all(np.isfinite(fit.beta1))

    def test_generalized_basis_runs_and_reduces(self):
        # with the three-member basis on exogenous data, the two canonical
        # coefficient blocks stay near the location-scale fit
        rng = np.random.default_rng(53)
        n = 2000
        x = rng.uniform(-1.0, 1.0, n)
        e = rng.standard_normal(n)
        xc = x - x.mean()
        y = (0.5 + 0.3 * xc) + (1.0 + 0.2 * xc) * e + (0.15 * xc) * (e**3 / (1 + e**2))
        ds = Dataset(y=y, x=x, z=x)
        fit = fit_iv_indirect(y, ds, basis=rational_cubic_basis())
        assert fit.converged
        assert fit.higher_order is not None
        assert np.allclose(fit.beta1, [0.5, 0.3], atol=0.15)
        assert np.allclose(fit.beta2, [1.0, 0.2], atol=0.15)
        assert np.allclose(fit.higher_order.ravel(), [0.15], atol=0.15)


def test_rank_agreement_within_duplicate_rows():
    rng = np.random.default_rng(61)
    base_z = rng.uniform(-0.5, 0.5, 40)
    z = np.repeat(base_z, 4)
    v = rng.uniform(-0.5, 0.5, 160)
    x = 1.0 + z + v
    # duplicate regressor rows exactly, keeping distinct outcomes
    x = np.repeat(x[:40], 4)
    y = 1.0 + x + (0.5 + 0.2 * x) * rng.standard_normal(160)
    ds = Dataset(y=y, x=x, z=z)
    fit = fit_iv_direct(y, ds)
    assert np.all(build_design(ds).values @ fit.beta2 > 0)
    for xv in np.unique(x):
        grp = x == xv
        assert np.array_equal(np.argsort(y[grp]), np.argsort(fit.e[grp]))


def test_covariance_iv_scale():
    rng = np.random.default_rng(59)
    y, x, z = draw_endogenous(5000, rng)
    ds = Dataset(y=y, x=x, z=z)
    fit = fit_iv_direct(y, ds)
    est = covariance_iv(fit, y, ds)
    assert est.se.shape == (4,)
    assert np.all(est.se > 0)
    # parameter-level errors at n=5000 are of the same order as the se
    assert np.all(np.abs(np.concatenate([fit.beta1, fit.beta2]) - [1, 1, 0.5, 0.2])
                  < 6.0 * est.se)

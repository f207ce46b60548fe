import numpy as np
import pytest
from scipy.optimize import brentq

from dualreg.basis import BasisSpec, canonical_basis, get_basis, rational_cubic_basis
from dualreg.core import build_design
from dualreg.exceptions import (
    BracketError,
    ConfigError,
    NonMonotoneMapError,
    SingularJacobianError,
)
from dualreg.gdr import fit_gdr, gdr_moments, invert_foc
from dualreg.solver import fit_dual

from conftest import engel_like_sample, random_instance


def tanh_basis():
    """Canonical pair plus a bounded odd member, for bracket stress tests."""
    return BasisSpec(
        h=(
            lambda e: np.ones_like(np.asarray(e, float)),
            lambda e: np.asarray(e, float),
            np.tanh,
        ),
        h_tilde=(
            lambda e: np.asarray(e, float),
            lambda e: (np.asarray(e, float) ** 2 - 1.0) / 2.0,
            lambda e: np.log(np.cosh(np.asarray(e, float))),
        ),
        h_prime=(
            lambda e: np.zeros_like(np.asarray(e, float)),
            lambda e: np.ones_like(np.asarray(e, float)),
            lambda e: 1.0 / np.cosh(np.asarray(e, float)) ** 2,
        ),
    )


class TestBasisSpec:
    def test_builtins_validate(self):
        assert canonical_basis().J == 2
        assert rational_cubic_basis().J == 3

    def test_registry(self):
        assert get_basis("canonical-J2").J == 2
        with pytest.raises(ConfigError):
            get_basis("nope")

    def test_broken_antiderivative_rejected(self):
        with pytest.raises(ValueError, match="antiderivative"):
            BasisSpec(
                h=(lambda e: np.ones_like(e), lambda e: e, lambda e: e**3),
                h_tilde=(lambda e: e, lambda e: (e**2 - 1) / 2, lambda e: e**3),
                h_prime=(lambda e: np.zeros_like(e), lambda e: np.ones_like(e),
                         lambda e: 3 * e**2),
            )

    def test_noncanonical_first_members_rejected(self):
        with pytest.raises(ValueError, match="h_2"):
            BasisSpec(
                h=(lambda e: np.ones_like(e), lambda e: 2 * e),
                h_tilde=(lambda e: e, lambda e: e**2),
                h_prime=(lambda e: np.zeros_like(e), lambda e: 2 * np.ones_like(e)),
            )


class TestInvertFoc:
    def test_identity_map(self):
        e = invert_foc(1.7, np.zeros(1), (0.0, 1.0), np.zeros((2, 1)), canonical_basis())
        assert e == pytest.approx(1.7, abs=1e-12)

    def test_two_member_closed_form(self):
        gamma = (1.0, 2.0)
        slopes = np.array([[0.5], [0.1]])
        x_i = np.array([0.3])
        y_i = 2.2
        e = invert_foc(y_i, x_i, gamma, slopes, canonical_basis())
        closed = (y_i - 1.0 - 0.5 * 0.3) / (2.0 + 0.1 * 0.3)
        assert e == pytest.approx(closed, abs=1e-12)

    def test_three_member_matches_bisection(self):
        basis = rational_cubic_basis()
        gamma = (0.5, 1.0)
        slopes = np.array([[0.3], [0.2], [0.15]])
        x_i = np.array([0.8])

        def the_map(e):
            return (
                0.5 + 0.3 * 0.8
                + (1.0 + 0.2 * 0.8) * e
                + (0.15 * 0.8) * e**3 / (1 + e**2)
            )

        for y_i in (-3.0, 0.2, 1.9, 7.5):
            e = invert_foc(y_i, x_i, gamma, slopes, basis)
            oracle = brentq(lambda t: the_map(t) - y_i, -100.0, 100.0, xtol=1e-14)
            assert e == pytest.approx(oracle, abs=1e-10)

    def test_non_monotone_map(self):
        basis = rational_cubic_basis()
        # derivative gamma_2 + lam3 * h3' dips negative for strong negative lam3
        gamma = (0.0, 0.2)
        slopes = np.array([[0.0], [0.0], [-1.0]])
        with pytest.raises(NonMonotoneMapError):
            invert_foc(0.5, np.ones(1), gamma, slopes, basis)

    def test_bracket_error_for_unreachable_level(self):
        basis = tanh_basis()
        # gamma_2 = 0 kills the linear member; tanh saturates at 1
        gamma = (0.0, 0.0)
        slopes = np.array([[0.0], [0.0], [1.0]])
        with pytest.raises((BracketError, NonMonotoneMapError)):
            invert_foc(5.0, np.ones(1), gamma, slopes, basis)


class TestGdrMoments:
    def test_zero_at_converged_fit(self):
        y, x, _, _, _ = engel_like_sample(n=150, seed=3)
        fit = fit_gdr(y, x[:, None])
        d = build_design(x[:, None], center=True)
        g = gdr_moments(fit.gamma, fit.slopes, y, d, fit.basis)
        assert np.max(np.abs(g)) < 1e-8

    def test_residual_shift_moves_first_component(self):
        y, x, _, _, _ = engel_like_sample(n=150, seed=3)
        fit = fit_gdr(y, x[:, None])
        d = build_design(x[:, None], center=True)
        c = 0.25
        # raising outcomes by c times the local scale shifts every inverted
        # residual by exactly +c
        scale = fit.gamma[1] + d.values[:, 1:] @ fit.slopes[1]
        g = gdr_moments(fit.gamma, fit.slopes, y + c * scale, d, fit.basis)
        assert g[0] == pytest.approx(c, rel=1e-9)

    def test_clt_scale_at_true_parameters(self):
        rng = np.random.default_rng(19)
        n = 2000
        x = rng.uniform(-1.0, 1.0, n)
        e = rng.standard_normal(n)
        basis = rational_cubic_basis()
        xc = x - x.mean()
        y = (0.5 + 0.3 * xc) + (1.0 + 0.2 * xc) * e + (0.15 * xc) * (e**3 / (1 + e**2))
        d = build_design(x[:, None], center=True)
        g = gdr_moments((0.5, 1.0), np.array([[0.3], [0.2], [0.15]]), y, d, basis)
        assert np.max(np.abs(g)) < 5.0 / np.sqrt(n)


class TestFitGdr:
    def test_two_member_reduction_matches_dual(self):
        y, x, _, _, _ = engel_like_sample(n=235, seed=3)
        gfit = fit_gdr(y, x[:, None])
        d = build_design(x[:, None], center=True)
        dfit = fit_dual(y, d)
        lam1 = np.concatenate([[gfit.gamma[0]], gfit.slopes[0]])
        lam2 = np.concatenate([[gfit.gamma[1]], gfit.slopes[1]])
        scale = max(1.0, np.max(np.abs(dfit.lambda1)))
        assert np.max(np.abs(lam1 - dfit.lambda1)) < 1e-8 * scale
        assert np.max(np.abs(lam2 - dfit.lambda2)) < 1e-8 * scale
        assert np.max(np.abs(gfit.e - dfit.e)) < 1e-8
        assert abs(y @ gfit.e - y @ dfit.e) < 1e-8 * abs(y @ dfit.e)

    def test_intercept_only_standardizes_outcome(self):
        rng = np.random.default_rng(4)
        y = 3.0 + 2.0 * rng.standard_normal(80)
        fit = fit_gdr(y, np.empty((80, 0)))
        assert fit.converged
        assert fit.gamma[0] == pytest.approx(y.mean(), abs=1e-9)
        assert fit.gamma[1] == pytest.approx(np.sqrt(np.mean((y - y.mean()) ** 2)), abs=1e-9)
        assert np.allclose(fit.e, (y - fit.gamma[0]) / fit.gamma[1], atol=1e-9)

    def test_three_member_recovers_truth(self):
        rng = np.random.default_rng(19)
        n = 3000
        x = rng.uniform(-1.0, 1.0, n)
        xc = x - x.mean()
        e = rng.standard_normal(n)
        y = (0.5 + 0.3 * xc) + (1.0 + 0.2 * xc) * e + (0.15 * xc) * (e**3 / (1 + e**2))
        fit = fit_gdr(y, x[:, None], basis=rational_cubic_basis())
        assert fit.converged
        assert np.allclose(fit.gamma, [0.5, 1.0], atol=0.1)
        assert np.allclose(fit.slopes.ravel(), [0.3, 0.2, 0.15], atol=0.12)

    def test_collinear_basis_raises(self):
        # a third member equal to the second duplicates its slope constraints
        duplicate = BasisSpec(
            h=(
                lambda e: np.ones_like(np.asarray(e, float)),
                lambda e: np.asarray(e, float),
                lambda e: np.asarray(e, float),
            ),
            h_tilde=(
                lambda e: np.asarray(e, float),
                lambda e: (np.asarray(e, float) ** 2 - 1.0) / 2.0,
                lambda e: np.asarray(e, float) ** 2 / 2.0,
            ),
            h_prime=(
                lambda e: np.zeros_like(np.asarray(e, float)),
                lambda e: np.ones_like(np.asarray(e, float)),
                lambda e: np.ones_like(np.asarray(e, float)),
            ),
        )
        y, x, _, _, _ = engel_like_sample(n=120, seed=10)
        with pytest.raises(SingularJacobianError):
            fit_gdr(y, x[:, None], basis=duplicate)

    def test_reconstruction_reproduces_outcomes(self):
        y, x, _, _, _ = engel_like_sample(n=200, seed=6)
        fit = fit_gdr(y, x[:, None], basis=rational_cubic_basis())
        d = build_design(x[:, None], center=True)
        coef = np.zeros((200, 3))
        coef[:, 0] = fit.gamma[0] + d.values[:, 1:] @ fit.slopes[0]
        coef[:, 1] = fit.gamma[1] + d.values[:, 1:] @ fit.slopes[1]
        coef[:, 2] = d.values[:, 1:] @ fit.slopes[2]
        h = fit.basis.eval_h(fit.e)
        y_back = np.sum(coef * h, axis=1)
        assert np.max(np.abs(y_back - y)) < 1e-10 * np.max(np.abs(y))

    def test_monotone_and_rank_preserving(self):
        rng = np.random.default_rng(31)
        x = np.repeat(rng.uniform(-1.0, 1.0, 30), 4)
        e = rng.standard_normal(120)
        y = (1.0 + 0.3 * x) + (0.8 + 0.2 * x) * e
        fit = fit_gdr(y, x[:, None])
        deriv = fit.gamma[1] + (x - x.mean()) * fit.slopes[1, 0]
        assert np.all(deriv > 0)
        for xv in np.unique(x):
            grp = x == xv
            assert np.array_equal(np.argsort(y[grp]), np.argsort(fit.e[grp]))

    def test_centering_consistency_under_column_shift(self):
        y, x, _, _, _ = engel_like_sample(n=150, seed=8)
        fit_a = fit_gdr(y, x[:, None])
        fit_b = fit_gdr(y, (x + 500.0)[:, None])
        assert np.max(np.abs(fit_a.e - fit_b.e)) < 1e-8
        assert np.max(np.abs(fit_a.u - fit_b.u)) < 1e-12
        assert np.allclose(fit_a.gamma, fit_b.gamma, atol=1e-8)
        assert np.allclose(fit_a.column_means + [0.0, 500.0], fit_b.column_means, atol=1e-9)

    def test_random_instances_match_dual(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            y, design = random_instance(rng, n=rng.integers(60, 200), k=2)
            x = design.values[:, 1:]
            gfit = fit_gdr(y, x)
            dfit = fit_dual(y, build_design(x, center=True))
            assert np.max(np.abs(gfit.e - dfit.e)) < 1e-8

import numpy as np
import pandas.testing as pdt
import pytest

from dualreg.exceptions import DomainError, InvalidSpecError, StudyAbortedError
from dualreg.simulate import DgpSpec, draw_sample, lp_error, rmae, run_study


class TestDgpSpec:
    def test_defaults_are_valid(self):
        spec = DgpSpec(n=235, seed=1)
        assert spec.location[0] == pytest.approx(86.35)
        assert spec.scale[0] == pytest.approx(-21.39)

    def test_scale_positivity_enforced(self):
        with pytest.raises(InvalidSpecError):
            DgpSpec(n=100, lambda_o1=(86.35, -40.0), lambda_o2=(0.55, 0.12))
        with pytest.raises(InvalidSpecError):
            DgpSpec(n=100, lambda_o1=(86.35, 10.0), lambda_o2=(0.55, -0.05))

    def test_true_quantile_coefficients_shape(self):
        spec = DgpSpec(n=10, seed=0)
        curves = spec.true_quantile_coefficients([0.25, 0.5, 0.75])
        assert curves.shape == (3, 2)
        assert curves[1, 0] == pytest.approx(86.35)
        assert curves[1, 1] == pytest.approx(0.55)


class TestDrawSample:
    def test_truncation_respected(self):
        y, x, e, u = draw_sample(DgpSpec(n=5000, seed=3))
        assert np.all(x >= 277.0)

    def test_unit_scale_reduction(self):
        spec = DgpSpec(n=1000, seed=4, lambda_o1=(86.35, 1.0), lambda_o2=(0.55, 0.0))
        y, x, eps, _ = draw_sample(spec)
        assert np.allclose(y - 86.35 - 0.55 * x, eps, atol=1e-12)

    def test_rank_moments_uniform(self):
        _, _, _, u = draw_sample(DgpSpec(n=100000, seed=5))
        assert abs(u.mean() - 0.5) < 0.005
        assert abs((u**2).mean() - 1.0 / 3.0) < 0.005

    def test_deterministic(self):
        a = draw_sample(DgpSpec(n=50, seed=6))
        b = draw_sample(DgpSpec(n=50, seed=6))
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


class TestMetrics:
    def test_zero_error(self):
        u = np.linspace(0.1, 0.9, 9)
        for p in (1, 2, np.inf):
            assert lp_error(u, u, p) == 0.0

    def test_hand_values(self):
        u_hat = np.array([0.6, 0.3])
        u_true = np.array([0.5, 0.4])
        assert lp_error(u_hat, u_true, 1) == pytest.approx(0.1)
        assert lp_error(u_hat, u_true, np.inf) == pytest.approx(0.1)
        assert lp_error(u_hat, u_true, 2) == pytest.approx(0.1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            lp_error([0.1, 0.2], [0.1], 1)

    def test_bad_exponent(self):
        with pytest.raises(DomainError):
            lp_error([0.1], [0.1], 3)

    def test_rmae(self):
        assert rmae([4.0, -4.0, 4.0]) == pytest.approx(2.0)
        assert rmae([0.0, 0.0]) == 0.0
        with pytest.raises(ValueError):
            rmae([])


class TestRunStudy:
    def test_deterministic_and_parallel_invariant(self):
        specs = [DgpSpec(n=60, seed=11)]
        a = run_study(specs, replications=4)
        b = run_study(specs, replications=4)
        pdt.assert_frame_equal(a.per_rep, b.per_rep)
        c = run_study(specs, replications=4, parallelism=2)
        pdt.assert_frame_equal(a.per_rep, c.per_rep)

    def test_summary_recomputable_from_replications(self):
        rep = run_study([DgpSpec(n=80, seed=13)], replications=6)
        sub = rep.per_rep
        for tag in ("l1", "l2", "linf"):
            expected = 100.0 * sub[f"{tag}_dr"].mean() / sub[f"{tag}_qr"].mean()
            got = rep.table1.loc[rep.table1.n == 80, f"{tag}_ratio"].iloc[0]
            assert got == pytest.approx(expected, rel=1e-12)
        # RMAE cells recompute from the per-replication errors
        cell = rep.table2[(rep.table2.n == 80) & (rep.table2.method == "dual")]["rmae_0.5"].iloc[0]
        assert cell == pytest.approx(rmae(sub["err_dr_b1_0.5"].to_numpy()), rel=1e-12)

    def test_method_subsets(self):
        rep = run_study([DgpSpec(n=60, seed=17)], replications=3, methods=("dual",))
        assert "l1_dr" in rep.per_rep.columns
        assert "l1_qr" not in rep.per_rep.columns
        assert "l1_ratio" not in rep.table1.columns
        rep_qr = run_study(
            [DgpSpec(n=60, seed=17)], replications=3, methods=("qr_coefficients",)
        )
        assert "err_qr_b1_0.5" in rep_qr.per_rep.columns
        assert "l1_qr" not in rep_qr.per_rep.columns

    def test_unknown_method_rejected(self):
        with pytest.raises(DomainError):
            run_study([DgpSpec(n=60, seed=1)], replications=2, methods=("magic",))

    def test_bands_cover_reasonable_range(self):
        rep = run_study([DgpSpec(n=100, seed=19)], replications=12)
        bands = rep.bands
        assert set(bands.method) == {"dual", "qr"}
        assert np.all(bands["q05"] <= bands["median"] + 1e-12)
        assert np.all(bands["median"] <= bands["q95"] + 1e-12)

    def test_config_echo(self):
        rep = run_study([DgpSpec(n=60, seed=23)], replications=2, methods=("dual",))
        assert rep.config["replications"] == 2
        assert rep.config["specs"][0]["n"] == 60
        assert rep.config["specs"][0]["seed"] == 23

    def test_failed_replication_excluded_and_counted(self):
        # seed 0 at n=50 produces exactly one degenerate draw in 100
        # replications (the fitted scale pinches at an extreme design point)
        rep = run_study([DgpSpec(n=50, seed=0)], replications=100, methods=("dual",))
        assert rep.n_failed == 1
        assert len(rep.per_rep) == 99
        assert "MaxIterations" in rep.failures[0]["error"]
        assert 19 not in set(rep.per_rep["rep"])

    def test_excess_failures_abort(self):
        # seed 8 at n=50 fails twice within the first 20 replications
        with pytest.raises(StudyAbortedError):
            run_study([DgpSpec(n=50, seed=8)], replications=20, methods=("dual",))


@pytest.mark.slow
class TestFullScaleInvariants:
    def test_rank_errors_uniformly_smaller(self, mc_study):
        for n in (100, 235, 1000):
            row = mc_study.table1.set_index("n").loc[n]
            for tag in ("l1", "l2", "linf"):
                assert row[f"{tag}_ratio"] < 100.0

    def test_absolute_error_levels_match_references(self, mc_study):
        # mean L1 rank error (x100) at n=235 sits near the reference 2.68
        l1 = float(mc_study.table1.set_index("n").loc[235, "l1_dr"])
        assert abs(l1 - 2.68) <= 0.2 * 2.68
        # RMAE of the median intercept coefficient at n=235 near 2.81
        t2 = mc_study.table2
        cell = float(
            t2[(t2.n == 235) & (t2.method == "dual")]["rmae_0.5"].iloc[0]
        )
        assert abs(cell - 2.81) <= 0.15 * 2.81

    def test_bands_cover_truth(self, mc_study):
        truth = {
            (tau, coef): DgpSpec(n=4, seed=0).true_quantile_coefficients([tau])[0, coef - 1]
            for tau in (0.1, 0.25, 0.5, 0.75, 0.9)
            for coef in (1, 2)
        }
        bands = mc_study.bands
        sub = bands[bands.n == 235]
        for _, row in sub.iterrows():
            t = truth[(row["tau"], row["coefficient"])]
            assert row["q05"] <= t <= row["q95"], (
                f"{row['method']} band misses truth at tau={row['tau']}"
            )

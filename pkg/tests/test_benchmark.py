import math

import numpy as np
import pytest

from gpsel import (BenchmarkProtocol, DataError, GSobolSpec, PipelineConfig,
                   g_sobol, lhs, run_table1)
from gpsel.benchmark import (VARIANT_WITH, VARIANT_WITHOUT, g_sobol_batch,
                             render_table, write_csv)

import oracles


class TestGSobol:
    def test_center_point(self):
        spec = GSobolSpec(2, a=np.array([1.0, 2.0]))
        assert g_sobol(np.array([0.5, 0.5]), spec) == pytest.approx(1.0 / 3.0)

    def test_one_dim_at_zero(self):
        spec = GSobolSpec(1, a=np.array([1.0]))
        assert g_sobol(np.array([0.0]), spec) == pytest.approx(1.5)

    def test_mixed_point(self):
        spec = GSobolSpec(2, a=np.array([1.0, 2.0]))
        assert g_sobol(np.array([1.0, 0.25]), spec) == pytest.approx(1.5)

    def test_default_coefficients_are_indices(self):
        spec = GSobolSpec(4)
        assert spec.a.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_out_of_cube_errors(self):
        spec = GSobolSpec(2)
        with pytest.raises(DataError):
            g_sobol(np.array([0.5, 1.2]), spec)
        with pytest.raises(DataError):
            g_sobol_batch(np.array([[0.5, -0.1]]), spec)

    def test_factor_bounds(self):
        # every factor lies in [a_k/(1+a_k), (2+a_k)/(1+a_k)]
        spec = GSobolSpec(3)
        rng = np.random.default_rng(0)
        lo = np.prod(spec.a / (1.0 + spec.a))
        hi = np.prod((2.0 + spec.a) / (1.0 + spec.a))
        for x in rng.random((50, 3)):
            v = g_sobol(x, spec)
            assert lo - 1e-12 <= v <= hi + 1e-12

    def test_batch_matches_scalar(self):
        spec = GSobolSpec(3)
        rng = np.random.default_rng(1)
        X = rng.random((20, 3))
        batch = g_sobol_batch(X, spec)
        for i in range(20):
            assert batch[i] == pytest.approx(g_sobol(X[i], spec), rel=1e-12)

    def test_negative_coefficient_rejected(self):
        with pytest.raises(DataError):
            GSobolSpec(2, a=np.array([1.0, -0.5]))


class TestLhs:
    def test_single_point(self):
        x = lhs(1, 3, seed=0)
        assert x.shape == (1, 3)
        assert np.all((x >= 0) & (x < 1))

    def test_stratification(self):
        for n in (4, 16, 100):
            for seed in range(20):
                x = lhs(n, 2, seed)
                for l in range(2):
                    strata = np.floor(n * x[:, l]).astype(int)
                    assert sorted(strata.tolist()) == list(range(n))

    def test_deterministic_per_seed(self):
        assert np.array_equal(lhs(8, 3, seed=5), lhs(8, 3, seed=5))
        assert not np.array_equal(lhs(8, 3, seed=5), lhs(8, 3, seed=6))

    def test_columns_close_to_uniform(self):
        bound = 2 * 1.36 / math.sqrt(100)
        for seed in range(20):
            x = lhs(100, 3, seed)
            for l in range(3):
                assert oracles.ks_uniform(x[:, l]) < bound


class TestRunTable1:
    def quick_protocol(self, **kw):
        kw.setdefault("d_list", (2,))
        kw.setdefault("n_test", 60)
        kw.setdefault("replicates", 2)
        kw.setdefault("seed", 3)
        return BenchmarkProtocol(**kw)

    def quick_cfg(self):
        return PipelineConfig(max_evals_factor=40, k_build=3, seed=0)

    def test_two_variant_rows(self):
        rows = run_table1(self.quick_protocol(), self.quick_cfg())
        assert len(rows) == 2
        variants = {r.variant for r in rows}
        assert variants == {VARIANT_WITH, VARIANT_WITHOUT}
        for r in rows:
            assert r.d == 2 and r.n_ls == 20
            assert r.replicates_done == 2
            assert math.isfinite(r.mean_q2)
            assert r.sd_q2 is not None

    def test_single_replicate_has_no_sd(self):
        rows = run_table1(self.quick_protocol(replicates=1), self.quick_cfg())
        assert all(r.sd_q2 is None for r in rows)
        assert "n/a" in render_table(rows)

    def test_reproducible(self):
        rows1 = run_table1(self.quick_protocol(), self.quick_cfg())
        rows2 = run_table1(self.quick_protocol(), self.quick_cfg())
        for a, b in zip(rows1, rows2):
            assert a.q2_values == b.q2_values

    def test_variants_share_test_sample(self):
        # both variants of a replicate see identical designs: with the
        # re-ranking disabled they must produce identical Q2 when the
        # re-ranked ordering matches the initial one or differ otherwise;
        # here we only check the table is internally consistent
        rows = run_table1(self.quick_protocol(), self.quick_cfg())
        by_variant = {r.variant: r for r in rows}
        assert len(by_variant[VARIANT_WITH].q2_values) == 2

    def test_csv_and_text_outputs(self, tmp_path):
        rows = run_table1(self.quick_protocol(replicates=1), self.quick_cfg())
        text = render_table(rows, omit_timing=True)
        assert "wall_time" in text.splitlines()[0]
        assert "omitted" in text
        path = tmp_path / "out.csv"
        write_csv(rows, path, omit_timing=True)
        content = path.read_text().splitlines()
        assert content[0].startswith("d,n_ls,variant,mean_q2")
        assert len(content) == 3

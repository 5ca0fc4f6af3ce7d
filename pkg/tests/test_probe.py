import numpy as np
import pytest

from armagraph.autodiff import Tape
from armagraph.filters import Arma1Params, arma1_closed_form, arma1_response
from armagraph.layers import ArmaConfig, arma_stack_outputs
from armagraph.probe import (
    empirical_response,
    gcn_linear_response,
    probe_stack,
    reconstruct,
    write_report_csv,
)
from armagraph.sparse import (
    gcn_adjacency,
    normalized_laplacian,
    propagation_matrix,
    spmm,
    symmetric_eig,
)

from conftest import max_abs, random_graph
from test_layers import scalar_stack_params


def decompose(op):
    return symmetric_eig(op.to_dense())


class TestEmpiricalResponse:
    def test_proportional_output(self, rng):
        lap = normalized_laplacian(random_graph(rng, 12))
        x = rng.standard_normal((12, 1))
        report = empirical_response(decompose(lap), x, 2.0 * x)
        assert report.valid.any()
        assert max_abs(report.empirical_response[report.valid], 2.0) <= 1e-10

    def test_identity_output(self, rng):
        lap = normalized_laplacian(random_graph(rng, 9))
        x = rng.standard_normal((9, 1))
        report = empirical_response(decompose(lap), x, x)
        assert max_abs(report.empirical_response[report.valid], 1.0) <= 1e-10

    def test_first_order_rational_filter_matches_analytic(self, rng):
        lap = normalized_laplacian(random_graph(rng, 15, p=0.25))
        m = propagation_matrix(lap)
        params = Arma1Params(0.5, 1.0)
        x = rng.standard_normal((15, 1))
        dec = decompose(lap)
        report = empirical_response(dec, x, arma1_closed_form(m, params, x))
        mu = 1.0 - dec.eigenvalues
        expected = arma1_response(params, mu)
        assert report.valid.sum() >= 10
        assert max_abs(report.empirical_response[report.valid], expected[report.valid]) <= 1e-9

    def test_masking_keeps_everything_finite(self, rng):
        lap = normalized_laplacian(random_graph(rng, 10))
        dec = decompose(lap)
        # signal aligned with a single eigenvector: every other input
        # coefficient is (numerically) zero and must be masked, not divided
        x = dec.eigenvectors[:, [3]]
        report = empirical_response(dec, x, spmm(lap, x))
        assert np.all(np.isfinite(report.empirical_response))
        assert not report.valid.all()
        assert report.valid[3]

    def test_dimension_mismatch(self, rng):
        lap = normalized_laplacian(random_graph(rng, 6))
        with pytest.raises(ValueError):
            empirical_response(decompose(lap), np.ones((5, 1)), np.ones((5, 1)))

    def test_zero_signal_is_fully_masked(self, rng):
        lap = normalized_laplacian(random_graph(rng, 6))
        report = empirical_response(decompose(lap), np.zeros((6, 1)), np.zeros((6, 1)))
        assert not report.valid.any()
        assert np.all(np.isfinite(report.empirical_response))


class TestGcnLinearResponse:
    def test_zero_frequency(self):
        assert gcn_linear_response(0.0, 7) == 1.0

    def test_sign_flip_at_odd_depth(self):
        assert gcn_linear_response(2.0, 3) == -1.0

    def test_midband_null(self):
        assert gcn_linear_response(1.0, 5) == 0.0


class TestProbeStack:
    def test_identity_stack(self, rng):
        lap = normalized_laplacian(random_graph(rng, 8))
        x = rng.standard_normal((8, 1))
        reports = probe_stack(lambda s: [s, s, s], lap, x)
        assert len(reports) == 3
        for report in reports:
            assert max_abs(report.empirical_response[report.valid], 1.0) <= 1e-10

    def test_linear_conv_skip_depths_approach_analytic(self, rng):
        lap = normalized_laplacian(random_graph(rng, 25, p=0.2))
        prop = propagation_matrix(lap)
        w, v = 0.5, 1.0
        depth = 8
        config = ArmaConfig(1, depth, 1, 1, activation="identity")
        params = scalar_stack_params(w, v, depth)

        def filter_fn(signal):
            t = Tape()
            return [n.value for n in arma_stack_outputs(t, prop, t.leaf(signal), config, params)]

        x = rng.standard_normal((25, 1))
        reports = probe_stack(filter_fn, lap, x)
        mu = 1.0 - reports[0].eigenvalues
        analytic = arma1_response(Arma1Params(w, v), mu)
        gaps = [
            max_abs(r.empirical_response[r.valid], analytic[r.valid]) for r in reports
        ]
        assert all(g2 <= g1 + 1e-12 for g1, g2 in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 0.5**depth * 10

    def test_linear_gcn_stack_matches_power_oracle(self, rng):
        adj = random_graph(rng, 20, p=0.2)
        a_hat = gcn_adjacency(adj, 1.0)
        depth = 3

        def filter_fn(signal):
            outs, cur = [], signal
            for _ in range(depth):
                cur = spmm(a_hat, cur)
                outs.append(cur)
            return outs

        x = rng.standard_normal((20, 1))
        reports = probe_stack(filter_fn, a_hat, x)
        nu = reports[0].eigenvalues
        for t, report in enumerate(reports, start=1):
            assert max_abs(report.empirical_response[report.valid], (nu**t)[report.valid]) <= 1e-9


class TestReconstruction:
    def test_projection_round_trip(self, rng):
        lap = normalized_laplacian(random_graph(rng, 30, p=0.2))
        x = rng.standard_normal((30, 1))
        assert max_abs(reconstruct(decompose(lap), x), x) <= 1e-9


class TestCsvExport:
    def test_columns_and_values(self, tmp_path, rng):
        lap = normalized_laplacian(random_graph(rng, 6))
        x = rng.standard_normal((6, 1))
        report = empirical_response(decompose(lap), x, x)
        path = tmp_path / "depth1.csv"
        write_report_csv(report, path, analytic=np.ones(6))
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "lambda,mu,in_coeff,out_coeff,h_emp,valid,h_analytic"
        first = rows[1].split(",")
        assert len(first) == 7
        assert abs(float(first[0]) + float(first[1]) - 1.0) <= 1e-15

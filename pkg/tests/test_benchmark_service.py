"""
Tests for the benchmark driver: errors, experiments, sweeps, studies and CSV output.
"""

import math

import numpy as np
import pytest

from app.models.config import ExperimentConfig, Method, NodeLayout
from app.models.response import RESULT_COLUMNS
from app.services import benchmark_service
from app.services.benchmark_service import (
    CSV_METADATA,
    analytic_f,
    analytic_u,
    compute_errors,
    default_sigmas,
    observed_order,
    read_csv_metadata,
    read_results_csv,
    run_convergence_study,
    run_experiment,
    run_method_sweep,
    run_sigma_sweep,
    run_timing_table,
    write_results_csv,
)
from app.services.errors import MeshlessError, ParameterError
from app.services.node_service import NodeSet

NON_TIMING = [c for c in RESULT_COLUMNS if c not in ("phase1_ms", "phase2_ms")]


def quick_config(**overrides):
    values = {"h": 0.1, "seed": 1, "repeats": 1}
    values.update(overrides)
    return ExperimentConfig(**values)


class TestAnalyticProblem:
    """Exact solution and source term."""

    def test_center_values(self):
        assert analytic_u((0.5, 0.5)) == 1.0
        assert analytic_f((0.5, 0.5)) == pytest.approx(-2.0 * math.pi ** 2)

    def test_boundary_vanishes(self):
        values = analytic_u(np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 0.0]]))
        assert values.shape == (3,)
        assert np.all(np.abs(values) < 1e-15)

    def test_source_is_laplacian(self):
        points = np.random.default_rng(8).random((10, 2))
        assert np.allclose(analytic_f(points), -2.0 * math.pi ** 2 * analytic_u(points))


class TestComputeErrors:
    """Relative errors over interior nodes."""

    @pytest.fixture
    def nodes(self):
        """One boundary node and two interior nodes."""
        points = [[0.0, 0.0], [0.5, 0.5], [0.25, 0.5]]
        return NodeSet(points, [True, False, False])

    def test_exact_solution(self, nodes):
        report = compute_errors(nodes, analytic_u(nodes.points))
        assert report.max_rel == 0.0 and report.mean_rel == 0.0
        assert report.interior_count == 2

    def test_relative_errors(self, nodes):
        exact = analytic_u(nodes.points)
        approx = exact * np.array([1.0, 0.9, 1.3])
        report = compute_errors(nodes, approx)
        assert report.max_rel == pytest.approx(0.3)
        assert report.mean_rel == pytest.approx(0.2)

    def test_boundary_value_ignored(self, nodes):
        approx = analytic_u(nodes.points)
        approx[0] = 123.0
        assert compute_errors(nodes, approx).max_rel == 0.0

    def test_vanishing_solution_excluded(self):
        nodes = NodeSet([[0.0, 0.5], [0.5, 0.5]], [False, False])
        report = compute_errors(nodes, [1.0, 1.1])
        assert report.excluded_count == 1
        assert report.interior_count == 1
        assert report.max_rel == pytest.approx(0.1)

    def test_no_interior(self):
        nodes = NodeSet([[0.0, 0.0], [1.0, 1.0]], [True, True])
        report = compute_errors(nodes, [0.0, 0.0])
        assert report.interior_count == 0
        assert report.max_rel == 0.0

    def test_length_mismatch(self, nodes):
        with pytest.raises(ParameterError):
            compute_errors(nodes, [0.0, 1.0])


class TestRunExperiment:
    """Single configurations solved end to end."""

    def test_rbf_fd_reference(self, scattered_nodes):
        cfg = ExperimentConfig(h=0.05, seed=1, method=Method.RBF_FD, m=2, repeats=1)
        result = run_experiment(cfg, scattered_nodes)
        assert result.solve.converged
        # recorded: 1.62e-2 at seed 1, up to 1.88e-2 over seeds 1-5
        assert result.errors.mean_rel < 2.5e-2
        assert result.errors.max_rel >= result.errors.mean_rel
        assert result.errors.interior_count == len(scattered_nodes.interior_indices)

    def test_rbf_fd_refinement(self, scattered_nodes):
        coarse = run_experiment(
            ExperimentConfig(h=0.05, seed=1, method=Method.RBF_FD, m=2, repeats=1), scattered_nodes
        )
        fine = run_experiment(ExperimentConfig(h=0.025, seed=1, method=Method.RBF_FD, m=2, repeats=1))
        assert fine.solve.converged
        # recorded: 4.0e-3 at h = 0.025
        assert fine.errors.mean_rel < 6e-3
        assert fine.errors.mean_rel < 0.4 * coarse.errors.mean_rel

    def test_hybrid_beats_rbf_fd_at_unit_sigma(self, scattered_nodes):
        base = ExperimentConfig(h=0.05, seed=1, m=2, sigma=1.0, repeats=1)
        rbf = run_experiment(base, scattered_nodes)
        hybrid = run_experiment(base.copy(update={"method": Method.HYBRID5}), scattered_nodes)
        assert hybrid.solve.converged
        assert hybrid.errors.mean_rel < rbf.errors.mean_rel

    def test_hybrid_large_sigma_converges(self):
        nodes = benchmark_service.build_nodes(ExperimentConfig(h=0.02, seed=1))
        for method in (Method.HYBRID5, Method.HYBRID9):
            cfg = ExperimentConfig(h=0.02, seed=1, method=method, m=2, sigma=2.0, repeats=1)
            result = run_experiment(cfg, nodes)
            assert result.solve.converged
            assert result.solve.iterations < 200
            assert result.errors.mean_rel < 5e-2

    @pytest.mark.parametrize(
        "method", [Method.HYBRID5, Method.HYBRID9, Method.HYBRID5_ALT, Method.HYBRID9_ALT]
    )
    def test_hybrid_methods(self, coarse_nodes, method):
        result = run_experiment(quick_config(method=method), coarse_nodes)
        assert result.solve.converged
        assert result.errors.mean_rel < 5e-2

    def test_timing_samples(self, coarse_nodes):
        result = run_experiment(quick_config(repeats=3), coarse_nodes)
        timing = result.timing
        assert timing.repeats == 3
        assert len(timing.phase1_samples_ms) == 3 and len(timing.phase2_samples_ms) == 3
        assert timing.phase1_ms == sorted(timing.phase1_samples_ms)[1]
        assert timing.phase2_ms >= 0.0

    def test_errors_match_solution(self, coarse_nodes):
        result = run_experiment(quick_config(method=Method.HYBRID5), coarse_nodes)
        recomputed = compute_errors(coarse_nodes, result.solve.solution)
        assert recomputed == result.errors

    def test_deterministic(self):
        first = run_experiment(quick_config(method=Method.HYBRID5)).to_row()
        second = run_experiment(quick_config(method=Method.HYBRID5)).to_row()
        assert {c: getattr(first, c) for c in NON_TIMING} == {c: getattr(second, c) for c in NON_TIMING}

    def test_row_fields(self, coarse_nodes):
        row = run_experiment(quick_config(m=4, sigma=0.5), coarse_nodes).to_row()
        assert row.method == "rbf_fd"
        assert row.n == 30
        assert row.sigma == 0.5

    def test_grid_layout(self):
        result = run_experiment(quick_config(layout=NodeLayout.GRID, method=Method.HYBRID5))
        assert result.nodes.size == 121
        assert result.solve.converged


class TestSigmaSweep:
    """One row per sigma on a shared node set."""

    def test_single_sigma_matches_experiment(self, coarse_nodes):
        base = quick_config(method=Method.HYBRID5)
        [row] = run_sigma_sweep(base, [0.7], coarse_nodes)
        direct = run_experiment(base.copy(update={"sigma": 0.7}), coarse_nodes).to_row()
        assert row.mean_rel == direct.mean_rel
        assert row.max_rel == direct.max_rel
        assert row.iterations == direct.iterations

    def test_rbf_fd_solved_once(self, coarse_nodes, monkeypatch):
        calls = []
        original = benchmark_service.run_experiment

        def counting(cfg, nodes=None, stencils=None):
            calls.append(cfg.sigma)
            return original(cfg, nodes, stencils)

        monkeypatch.setattr(benchmark_service, "run_experiment", counting)
        rows = run_sigma_sweep(quick_config(), [0.5, 1.0, 2.0], coarse_nodes)
        assert len(calls) == 1
        assert [row.sigma for row in rows] == [0.5, 1.0, 2.0]
        assert len({row.mean_rel for row in rows}) == 1

    def test_shared_hybrid_reuses_stencil_table(self, coarse_nodes, monkeypatch):
        calls = []
        original = benchmark_service.stencil_table

        def counting(nodes, n):
            calls.append(n)
            return original(nodes, n)

        monkeypatch.setattr(benchmark_service, "stencil_table", counting)
        rows = run_sigma_sweep(quick_config(method=Method.HYBRID5), [0.5, 1.0, 2.0], coarse_nodes)
        # one shared table, then one search per timed repeat
        assert len(calls) == 1 + 3
        assert all(row.converged for row in rows)

    def test_alternative_variant_builds_no_table(self, coarse_nodes, monkeypatch):
        calls = []
        monkeypatch.setattr(
            benchmark_service, "stencil_table", lambda nodes, n: calls.append(n) or []
        )
        run_sigma_sweep(quick_config(method=Method.HYBRID5_ALT), [1.0], coarse_nodes)
        assert calls == []

    @pytest.mark.parametrize("sigmas", [[], [0.0], [1.0, -2.0]])
    def test_invalid_sigmas(self, coarse_nodes, sigmas):
        with pytest.raises(ParameterError):
            run_sigma_sweep(quick_config(method=Method.HYBRID5), sigmas, coarse_nodes)

    def test_failure_becomes_nan_row(self, coarse_nodes, monkeypatch):
        def broken(nodes, cfg, stencils=None):
            raise MeshlessError("interpolation failed")

        monkeypatch.setattr(benchmark_service, "compute_operator_rows", broken)
        [row] = run_sigma_sweep(quick_config(method=Method.HYBRID5), [1.0], coarse_nodes)
        assert math.isnan(row.mean_rel) and math.isnan(row.max_rel)
        assert not row.converged
        assert row.sigma == 1.0

    def test_default_sigmas(self):
        sigmas = default_sigmas()
        assert len(sigmas) == 40
        assert sigmas[0] == pytest.approx(1e-2)
        assert sigmas[-1] == pytest.approx(10.0)
        assert all(b > a for a, b in zip(sigmas, sigmas[1:]))


class TestStudies:
    """Method sweeps, timing tables and convergence orders."""

    def test_method_sweep_layout(self):
        rows = run_method_sweep(
            quick_config(), [Method.RBF_FD, Method.HYBRID5], [2], [0.5, 1.0]
        )
        assert [(r.method, r.sigma) for r in rows] == [
            ("rbf_fd", 0.5), ("rbf_fd", 1.0), ("hybrid5", 0.5), ("hybrid5", 1.0),
        ]
        assert all(r.m == 2 and r.n == 12 for r in rows)

    def test_timing_table(self):
        rows = run_timing_table(quick_config(sigma=0.3), [2])
        assert [r.method for r in rows] == ["rbf_fd", "hybrid5", "hybrid9"]
        assert all(r.sigma == 1.0 for r in rows)
        assert all(math.isfinite(r.phase1_ms) and r.phase1_ms >= 0.0 for r in rows)

    def test_observed_order(self):
        orders = observed_order([1e-2, 2.5e-3, 6.25e-4], [0.1, 0.05, 0.025])
        assert math.isnan(orders[0])
        assert orders[1] == pytest.approx(2.0)
        assert orders[2] == pytest.approx(2.0)

    def test_observed_order_zero_error(self):
        assert math.isnan(observed_order([1e-2, 0.0], [0.1, 0.05])[1])

    def test_grid_convergence_is_second_order(self):
        base = quick_config(method=Method.HYBRID5, layout=NodeLayout.GRID, sigma=1.0)
        rows = run_convergence_study(base, [0.1, 0.05, 0.025])
        assert [r.h for r in rows] == [0.1, 0.05, 0.025]
        assert all(r.converged for r in rows)
        assert rows[1].order_max == pytest.approx(2.0, abs=0.15)
        assert rows[2].order_max == pytest.approx(2.0, abs=0.15)
        assert rows[2].order_mean == pytest.approx(2.0, abs=0.15)


class TestResultsCsv:
    """CSV rows with metadata header lines."""

    def test_metadata_and_columns(self, coarse_nodes, tmp_path):
        rows = run_sigma_sweep(quick_config(method=Method.HYBRID5), [0.5, 1.0], coarse_nodes)
        path = write_results_csv(rows, tmp_path / "sweep.csv", {"h": 0.1})

        metadata = read_csv_metadata(path)
        for key, value in CSV_METADATA.items():
            assert metadata[key] == value
        assert metadata["h"] == "0.1"

        frame = read_results_csv(path)
        assert tuple(frame.columns) == RESULT_COLUMNS
        assert frame["sigma"].tolist() == [0.5, 1.0]
        assert frame["mean_rel"].tolist() == [r.mean_rel for r in rows]

    def test_non_timing_columns_reproducible(self, coarse_nodes, tmp_path):
        base = quick_config(method=Method.HYBRID9)
        first = write_results_csv(run_sigma_sweep(base, [1.0], coarse_nodes), tmp_path / "a.csv")
        second = write_results_csv(run_sigma_sweep(base, [1.0], coarse_nodes), tmp_path / "b.csv")
        a = read_results_csv(first)[NON_TIMING]
        b = read_results_csv(second)[NON_TIMING]
        assert a.equals(b)

    def test_failed_rows_written_as_nan(self, tmp_path):
        row = benchmark_service.failed_row(quick_config(method=Method.HYBRID5))
        frame = read_results_csv(write_results_csv([row], tmp_path / "failed.csv"))
        assert math.isnan(frame["mean_rel"][0])
        assert not frame["converged"][0]

    def test_convergence_rows(self, tmp_path):
        rows = run_convergence_study(quick_config(layout=NodeLayout.GRID), [0.25, 0.125])
        frame = read_results_csv(write_results_csv(rows, tmp_path / "conv.csv"))
        assert "order_max" in frame.columns
        assert frame["nodes"].tolist() == [25, 81]


def finite(values):
    return [v for v in values if math.isfinite(v)]


@pytest.mark.curve_shape
class TestCurveShape:
    """Qualitative behaviour of the error and timing curves at h = 0.02."""

    SIGMAS = [0.05, 0.2, 0.5, 1.0, 2.0, 5.0]

    @pytest.fixture(scope="class")
    def fine_nodes(self):
        """Advancing-front fill at h = 0.02, shared by the class."""
        return benchmark_service.build_nodes(ExperimentConfig(h=0.02, seed=1))

    def sweep(self, nodes, method, m, sigmas=None):
        base = ExperimentConfig(h=0.02, seed=1, method=method, m=m, repeats=1)
        return run_sigma_sweep(base, sigmas or self.SIGMAS, nodes)

    def test_second_order_sweet_spot(self, fine_nodes):
        reference = self.sweep(fine_nodes, Method.RBF_FD, 2, [1.0])[0].mean_rel
        rows = self.sweep(fine_nodes, Method.HYBRID5, 2)
        errors = [r.mean_rel if math.isfinite(r.mean_rel) else math.inf for r in rows]
        best = int(np.argmin(errors))
        assert 0 < best < len(rows) - 1
        assert 0.2 <= rows[best].sigma <= 2.0
        assert rows[best].mean_rel <= 0.5 * reference

    def test_fourth_order_stencils(self, fine_nodes):
        reference = self.sweep(fine_nodes, Method.RBF_FD, 4, [1.0])[0].mean_rel
        nine = self.sweep(fine_nodes, Method.HYBRID9, 4)
        assert min(finite([r.mean_rel for r in nine])) < reference
        five = self.sweep(fine_nodes, Method.HYBRID5, 4, [1.0])[0]
        assert five.mean_rel > reference

    @pytest.mark.parametrize("shared,alternative,m", [
        (Method.HYBRID5, Method.HYBRID5_ALT, 2),
        (Method.HYBRID9, Method.HYBRID9_ALT, 4),
    ])
    def test_alternative_variant_within_a_decade(self, fine_nodes, shared, alternative, m):
        sigmas = [0.5, 1.0, 2.0]
        base_rows = self.sweep(fine_nodes, shared, m, sigmas)
        alt_rows = self.sweep(fine_nodes, alternative, m, sigmas)
        for a, b in zip(base_rows, alt_rows):
            assert a.converged and b.converged
            # recorded: shared / alternative = 3.87 at m = 2, sigma = 1
            ratio = a.mean_rel / b.mean_rel
            assert 0.1 < ratio < 10.0
        assert sum(r.phase1_ms for r in alt_rows) > sum(r.phase1_ms for r in base_rows)

    def test_timing_ordering(self, fine_nodes):
        for m in (2, 4):
            results = {
                method: run_experiment(
                    ExperimentConfig(h=0.02, seed=1, method=method, m=m, sigma=1.0, repeats=11),
                    fine_nodes,
                )
                for method in (Method.RBF_FD, Method.HYBRID5, Method.HYBRID9)
            }
            rbf, five, nine = (results[k].timing for k in (Method.RBF_FD, Method.HYBRID5, Method.HYBRID9))
            assert rbf.phase1_ms <= 1.1 * five.phase1_ms
            assert five.phase1_ms <= 1.1 * nine.phase1_ms
            # fastest of the timed samples
            phase2 = [min(t.phase2_samples_ms) for t in (rbf, five, nine)]
            assert max(phase2) <= 1.15 * min(phase2)


@pytest.mark.slow
def test_full_scale_smoke():
    cfg = ExperimentConfig(h=0.01, seed=1, method=Method.RBF_FD, m=2, repeats=1)
    result = run_experiment(cfg)
    assert result.solve.converged
    assert result.errors.mean_rel < 1e-3

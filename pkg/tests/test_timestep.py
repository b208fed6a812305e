import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gpdm.geometry import knn_search, sample_annulus, sample_circle, sample_sine_curve
from gpdm.ghost import (
    assemble_gpdm_operator,
    build_extrapolation_matrix,
    build_ghost_points,
    ghost_layer_count,
    secant_frame,
)
from gpdm.kernel import KernelConfig, assemble_dm_operator
from gpdm.timestep import (
    SddFactorization,
    SolutionState,
    SolverError,
    TimeStepConfig,
    export_snapshot,
    implicit_matrix,
    solve_sdd,
    stability_report,
    step_closed,
    step_dirichlet,
    step_neumann,
)


@pytest.fixture(scope="module")
def circle_op():
    cloud = sample_circle(200)
    nbrs = knn_search(cloud, 40)
    op = assemble_dm_operator(cloud, nbrs, KernelConfig(epsilon=0.01, k=40, intrinsic_dim=1))
    return cloud, op


@pytest.fixture(scope="module")
def annulus_blocks():
    cloud = sample_annulus(30, 8)
    nbrs = knn_search(cloud, 50)
    cfg = KernelConfig(epsilon=0.02, k=50, intrinsic_dim=2)
    normals, spacing = secant_frame(cloud, nbrs)
    layers = ghost_layer_count(0.02, float(np.median(spacing)))
    frame = build_ghost_points(cloud, normals, spacing, layers)
    return cloud, assemble_gpdm_operator(cloud, frame, build_extrapolation_matrix(frame, cloud), cfg)


class TestSolveSdd:
    def test_identity_passthrough(self):
        rhs = np.array([1.0, -2.0, 3.5])
        x = solve_sdd(sp.identity(3, format="csr"), rhs)
        assert np.array_equal(x, rhs)

    def test_dt_zero_system_is_identity(self, circle_op):
        _, op = circle_op
        m = implicit_matrix(op.matrix, 0.0)
        rhs = np.linspace(-1, 1, m.shape[0])
        assert np.array_equal(solve_sdd(m, rhs), rhs)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 16))
    def test_matches_dense_lu_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(50, 50))
        a += np.diag(np.abs(a).sum(axis=1) + 1.0)  # force strict dominance
        b = rng.normal(size=50)
        x = solve_sdd(sp.csr_matrix(a), b)
        x_oracle = scipy.linalg.lu_solve(scipy.linalg.lu_factor(a), b)
        assert np.abs(x - x_oracle).max() <= 1e-8

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_sdd(sp.identity(3, format="csr"), np.ones(4))

    def test_residual_reported_on_failure(self):
        # singular system: factorization either fails outright or leaves a
        # residual above tolerance
        a = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises((SolverError, RuntimeError)):
            solve_sdd(a, np.array([1.0, 0.0]))


class TestStepClosed:
    def test_constant_is_fixed_point(self, circle_op):
        cloud, op = circle_op
        cfg = TimeStepConfig(dt=1e-2, t_end=1e-1)
        state = SolutionState(t=0.0, values=np.full(cloud.n_points, 2.5))
        for _ in range(5):
            state = step_closed(op, state, cfg, cloud.points)
        assert np.abs(state.values - 2.5).max() <= 1e-12

    def test_non_expansive_per_step(self, circle_op):
        cloud, op = circle_op
        cfg = TimeStepConfig(dt=5e-3, t_end=1.0)
        rng = np.random.default_rng(1)
        solver = SddFactorization(implicit_matrix(op.matrix, cfg.dt))
        for _ in range(10):
            u = rng.normal(size=cloud.n_points)
            state = SolutionState(t=0.0, values=u)
            nxt = step_closed(op, state, cfg, cloud.points, solver=solver)
            assert np.abs(nxt.values).max() <= np.abs(u).max() * (1 + 1e-10)

    def test_linearity(self, circle_op):
        cloud, op = circle_op
        cfg = TimeStepConfig(dt=1e-3, t_end=1e-2)
        solver = SddFactorization(implicit_matrix(op.matrix, cfg.dt))
        rng = np.random.default_rng(2)
        u, v = rng.normal(size=(2, cloud.n_points))
        a, b = 1.7, -0.3
        su = step_closed(op, SolutionState(0.0, u), cfg, cloud.points, solver=solver).values
        sv = step_closed(op, SolutionState(0.0, v), cfg, cloud.points, solver=solver).values
        s_ab = step_closed(op, SolutionState(0.0, a * u + b * v), cfg, cloud.points, solver=solver).values
        assert np.abs(s_ab - (a * su + b * sv)).max() <= 1e-10 * max(1, np.abs(s_ab).max())

    def test_requires_dm_kind(self, circle_op, annulus_blocks):
        cloud, op = circle_op
        from dataclasses import replace

        bad = replace(op, kind="VCDM")
        cfg = TimeStepConfig(dt=1e-3, t_end=1e-2)
        with pytest.raises(ValueError):
            step_closed(bad, SolutionState(0.0, np.zeros(cloud.n_points)), cfg, cloud.points)


class TestStepDirichlet:
    def test_zero_data_stays_zero(self, annulus_blocks):
        _, blocks = annulus_blocks
        cfg = TimeStepConfig(dt=1e-3, t_end=1e-2, bc_kind="dirichlet")
        state = SolutionState(t=0.0, values=np.zeros(blocks.n_rows))
        for _ in range(4):
            state = step_dirichlet(blocks, state, cfg)
        assert np.abs(state.values).max() == 0.0

    def test_boundary_pinned_to_g(self, annulus_blocks):
        _, blocks = annulus_blocks
        g_val = 0.7
        cfg = TimeStepConfig(
            dt=1e-3, t_end=1e-2, bc_kind="dirichlet",
            boundary_data=lambda pts: np.full(pts.shape[0], g_val),
        )
        state = SolutionState(t=0.0, values=np.zeros(blocks.n_rows))
        state = step_dirichlet(blocks, state, cfg)
        assert np.array_equal(state.values[blocks.boundary_index], np.full(blocks.boundary_index.size, g_val))

    def test_wrong_bc_kind(self, annulus_blocks):
        _, blocks = annulus_blocks
        cfg = TimeStepConfig(dt=1e-3, t_end=1e-2, bc_kind="neumann")
        with pytest.raises(ValueError):
            step_dirichlet(blocks, SolutionState(0.0, np.zeros(blocks.n_rows)), cfg)


class TestStepNeumann:
    def test_constant_is_fixed_point(self, annulus_blocks):
        _, blocks = annulus_blocks
        cfg = TimeStepConfig(dt=1e-3, t_end=1e-2, bc_kind="neumann")
        state = SolutionState(t=0.0, values=np.full(blocks.n_rows, -1.2))
        for _ in range(4):
            state = step_neumann(blocks, state, cfg)
        assert np.abs(state.values + 1.2).max() <= 1e-12

    def test_resolvent_non_expansive(self, annulus_blocks):
        _, blocks = annulus_blocks
        for dt in (1e-3, 1e-1, 1.0):
            rep = stability_report(blocks.neumann_operator(), dt)
            assert rep.norm_inf_inverse <= 1 + 1e-10


class TestStabilityReport:
    def test_dm_exact_norm_one(self, circle_op):
        _, op = circle_op
        for dt in (1e-4, 1e-2, 1.0):
            rep = stability_report(op.matrix, dt)
            assert rep.norm_is_exact
            assert rep.norm_inf_inverse <= 1 + 1e-10
            assert not rep.expansive

    def test_neumann_margin_at_least_one(self, annulus_blocks):
        _, blocks = annulus_blocks
        rep = stability_report(blocks.neumann_operator(), 1.0)
        assert rep.sdd_margin >= 1 - 1e-9
        assert not rep.sdd_violated

    def test_dirichlet_margin_can_dip_and_is_flagged(self):
        # coarse bandwidth plus a large step: the ghost-fold introduces
        # negative off-diagonal mass and the interior block loses strict
        # dominance; the report must flag it
        cloud = sample_sine_curve(100)
        nbrs = knn_search(cloud, 30)
        cfg = KernelConfig(epsilon=0.3, k=30, intrinsic_dim=1)
        normals, spacing = secant_frame(cloud, nbrs)
        layers = ghost_layer_count(0.3, float(np.median(spacing)))
        frame = build_ghost_points(cloud, normals, spacing, layers)
        blocks = assemble_gpdm_operator(cloud, frame, build_extrapolation_matrix(frame, cloud), cfg)
        rep = stability_report(blocks.dirichlet_operator(), 10.0)
        assert rep.sdd_margin < 1.0
        assert rep.sdd_violated

    def test_probe_mode_on_larger_system(self):
        cloud = sample_circle(512)
        nbrs = knn_search(cloud, 60)
        op = assemble_dm_operator(cloud, nbrs, KernelConfig(epsilon=0.002, k=60, intrinsic_dim=1))
        rep = stability_report(op.matrix, 0.5, sample_count=8)
        assert not rep.norm_is_exact
        # the all-ones probe is exact for these inverse-positive systems
        assert rep.ones_probe_norm <= 1 + 1e-10


class TestConfigAndExport:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TimeStepConfig(dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            TimeStepConfig(dt=0.1, t_end=0.05)
        with pytest.raises(ValueError):
            TimeStepConfig(dt=0.1, t_end=1.0, bc_kind="robin")

    def test_n_steps_no_fractional_step(self):
        assert TimeStepConfig(dt=2e-3, t_end=0.005).n_steps == 2
        assert TimeStepConfig(dt=1e-3, t_end=0.005).n_steps == 5

    def test_snapshot_roundtrip(self, tmp_path, circle_op):
        cloud, _ = circle_op
        values = np.sin(cloud.labels[:, 0])
        path = tmp_path / "snap.csv"
        export_snapshot(path, cloud.points, values, truth=values * 0.9)
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        assert data.shape == (cloud.n_points, 1 + 2 + 3)
        assert np.allclose(data[:, 3], values)
        assert np.allclose(data[:, 5], np.abs(values - values * 0.9))


class TestIterativePath:
    def test_large_system_branch_matches_oracle(self, monkeypatch):
        import gpdm.timestep as ts

        rng = np.random.default_rng(7)
        a = rng.normal(size=(60, 60))
        a += np.diag(np.abs(a).sum(axis=1) + 1.0)
        b = rng.normal(size=60)
        monkeypatch.setattr(ts, "_DIRECT_LIMIT", 10)
        x = ts.solve_sdd(sp.csr_matrix(a), b)
        oracle = scipy.linalg.lu_solve(scipy.linalg.lu_factor(a), b)
        assert np.abs(x - oracle).max() <= 1e-8

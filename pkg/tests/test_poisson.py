import numpy as np
import pytest

from gradblend.image import BlendInstance, ImageTensor, Mask
from gradblend.poisson import (
    GuidanceMode,
    PoissonError,
    assemble_system,
    cg_solve,
    dense_solve,
    gauss_seidel_solve,
    poisson_blend,
)

from conftest import blob_mask


def arrays_to_types(source, target, mask):
    return ImageTensor.from_array(source), ImageTensor.from_array(target), Mask.from_array(mask)


def single_pixel_instance():
    """One unknown at (1,1) in a 3x3 frame; neighbor targets 0.2/0.4/0.6/0.8."""
    target = np.zeros((3, 3, 1))
    target[0, 1, 0] = 0.2
    target[2, 1, 0] = 0.4
    target[1, 0, 0] = 0.6
    target[1, 2, 0] = 0.8
    source = np.full((3, 3, 1), 0.5)  # locally constant => all v_pq = 0
    mask = blob_mask(3, 3, 1, 2, 1, 2)
    return arrays_to_types(source, target, mask)


def random_instance(seed, frame=16, lo=3, hi=13, channels=1):
    rng = np.random.default_rng(seed)
    source = rng.random((frame, frame, channels))
    target = rng.random((frame, frame, channels))
    mask = blob_mask(frame, frame, lo, hi, lo, hi)
    return arrays_to_types(source, target, mask)


class TestAssembly:
    def test_single_pixel_row(self):
        s, t, m = single_pixel_instance()
        sys_ = assemble_system(s, t, m, GuidanceMode.SOURCE_ONLY)
        assert sys_.n_unknowns == 1
        assert sys_.dense() == np.array([[4.0]])
        # rhs = sum of boundary targets + zero guidance
        assert sys_.rhs[0, 0] == pytest.approx(0.2 + 0.4 + 0.6 + 0.8)

    def test_single_pixel_closed_form(self):
        s, t, m = single_pixel_instance()
        sys_ = assemble_system(s, t, m, GuidanceMode.SOURCE_ONLY)
        result = gauss_seidel_solve(sys_, tol=1e-12)
        assert result.iterations == 1
        assert result.solution[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_source_equals_target_solves_to_target(self):
        s, t, m = random_instance(0)
        sys_ = assemble_system(t, t, m, GuidanceMode.SOURCE_ONLY)
        x = dense_solve(sys_)
        want = t.data[sys_.coords[:, 0], sys_.coords[:, 1], :]
        assert np.max(np.abs(x - want)) < 1e-10

    def test_matrix_symmetry(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            m = np.zeros((12, 12))
            m[2:9, 3:10] = (rng.random((7, 7)) > 0.3).astype(float)
            m[2, :] = 0  # keep clear of the frame edge
            s = ImageTensor.from_array(rng.random((12, 12, 1)))
            t = ImageTensor.from_array(rng.random((12, 12, 1)))
            if not m.any():
                continue
            sys_ = assemble_system(s, t, Mask.from_array(m))
            a = sys_.dense()
            assert np.array_equal(a, a.T)
            assert np.all(np.diag(a) == 4.0)

    def test_empty_mask_rejected(self):
        s, t, _ = random_instance(1)
        with pytest.raises(PoissonError, match="no interior"):
            assemble_system(s, t, Mask.from_array(np.zeros((16, 16))))

    def test_frame_edge_mask_rejected(self):
        s, t, _ = random_instance(2)
        m = np.zeros((16, 16))
        m[0:4, 4:8] = 1.0
        with pytest.raises(PoissonError, match="frame edge"):
            assemble_system(s, t, Mask.from_array(m))


class TestSolvers:
    def test_exact_initial_guess_needs_zero_sweeps(self):
        s, t, m = random_instance(3)
        sys_ = assemble_system(s, t, m)
        exact = dense_solve(sys_)
        for solver in (gauss_seidel_solve, cg_solve):
            result = solver(sys_, tol=1e-8, x0=exact)
            assert result.iterations == 0
            assert result.converged

    def test_iterative_matches_dense(self):
        # spread of region shapes, all well under 400 unknowns
        for seed, (lo, hi) in enumerate([(3, 13), (2, 10), (5, 12), (4, 14), (6, 11)]):
            s, t, m = random_instance(seed, frame=16, lo=lo, hi=hi, channels=3)
            sys_ = assemble_system(s, t, m, GuidanceMode.SOURCE_ONLY)
            exact = dense_solve(sys_)
            gs = gauss_seidel_solve(sys_, tol=1e-10)
            cg = cg_solve(sys_, tol=1e-10)
            assert gs.converged and cg.converged
            assert np.max(np.abs(gs.solution - exact)) < 1e-6
            assert np.max(np.abs(cg.solution - exact)) < 1e-6

    def test_mixed_guidance_matches_dense(self):
        s, t, m = random_instance(11, channels=3)
        sys_ = assemble_system(s, t, m, GuidanceMode.MIXED_SUM)
        exact = dense_solve(sys_)
        cg = cg_solve(sys_, tol=1e-10)
        assert np.max(np.abs(cg.solution - exact)) < 1e-6

    def test_solver_equivalence(self):
        # both solvers stop at residual <= tol, so A(x_gs - x_cg) is within
        # 2 tol exactly; the solution gap carries the ||A^-1|| amplification
        tol = 1e-8
        for seed in range(4):
            s, t, m = random_instance(20 + seed)
            sys_ = assemble_system(s, t, m)
            gs = gauss_seidel_solve(sys_, tol=tol)
            cg = cg_solve(sys_, tol=tol)
            gap = gs.solution - cg.solution
            assert np.max(np.abs(sys_.matrix @ gap)) <= 2 * tol
            amplification = np.max(np.abs(np.linalg.inv(sys_.dense())).sum(axis=1))
            assert np.max(np.abs(gap)) <= 2 * tol * amplification

    def test_nonconvergence_flag_not_exception(self):
        s, t, m = random_instance(5)
        sys_ = assemble_system(s, t, m)
        result = gauss_seidel_solve(sys_, tol=1e-14, max_iter=2)
        assert not result.converged
        assert result.iterations == 2

    def test_maximum_principle_zero_guidance(self):
        # constant source => v = 0; harmonic interpolation of ring values
        s, t, m = random_instance(6)
        const = ImageTensor.from_array(np.full_like(s.data, 0.5))
        sys_ = assemble_system(const, t, m)
        x = dense_solve(sys_)
        ring = _ring_values(t.data[:, :, 0], m.data)
        assert x.min() >= ring.min() - 1e-6
        assert x.max() <= ring.max() + 1e-6

    def test_constant_boundary_gives_constant_solution(self):
        c = 0.37
        target = np.full((12, 12, 1), c)
        source = np.full((12, 12, 1), 0.9)  # constant => zero guidance
        mask = blob_mask(12, 12, 3, 9, 3, 9)
        s, t, m = arrays_to_types(source, target, mask)
        sys_ = assemble_system(s, t, m)
        for solver in (gauss_seidel_solve, cg_solve):
            x = solver(sys_, tol=1e-10).solution
            assert np.max(np.abs(x - c)) < 1e-8

    def test_cg_error_norm_monotone_on_spd(self):
        # CG on an SPD matrix shrinks the error monotonically in both the
        # A-norm and the 2-norm; verify against the dense solution
        for seed in range(4):
            s, t, m = random_instance(30 + seed, frame=14, lo=3, hi=11)
            sys_ = assemble_system(s, t, m)
            exact = dense_solve(sys_)[:, 0]
            a = sys_.dense()
            b = sys_.rhs[:, 0]
            x = np.zeros_like(b)
            r = b - a @ x
            p = r.copy()
            rs = r @ r
            err2 = [np.linalg.norm(x - exact)]
            erra = [np.sqrt((x - exact) @ a @ (x - exact))]
            for _ in range(200):
                ap = a @ p
                alpha = rs / (p @ ap)
                x = x + alpha * p
                r = r - alpha * ap
                rs_new = r @ r
                err2.append(np.linalg.norm(x - exact))
                erra.append(np.sqrt(np.abs((x - exact) @ a @ (x - exact))))
                if np.max(np.abs(r)) <= 1e-12:
                    break
                p = r + (rs_new / rs) * p
                rs = rs_new
            assert np.all(np.diff(err2) <= 1e-10)
            assert np.all(np.diff(erra) <= 1e-10)

    def test_cg_residual_history_recorded(self):
        s, t, m = random_instance(7)
        sys_ = assemble_system(s, t, m)
        result = cg_solve(sys_, tol=1e-8)
        assert len(result.residual_history) == s.data.shape[2]
        assert result.residual_history[0][-1] < result.residual_history[0][0]


class TestBlend:
    def test_source_equals_target_is_identity(self):
        s, t, m = random_instance(8)
        inst = BlendInstance(t, m, t)
        out = poisson_blend(inst, GuidanceMode.SOURCE_ONLY, tol=1e-10)
        assert np.max(np.abs(out.data - t.data)) < 1e-7

    def test_constant_patch_on_constant_target(self):
        # mask strictly inside the constant source so every guidance pair
        # v_pq sees the same value on both sides (all v = 0)
        c = 0.6
        target = ImageTensor.from_array(np.full((10, 10, 3), c))
        source = ImageTensor.from_array(np.full((6, 6, 3), 0.1))
        mask_data = np.zeros((6, 6))
        mask_data[1:5, 1:5] = 1.0
        inst = BlendInstance(source, Mask.from_array(mask_data), target, offset_x=2, offset_y=2)
        out = poisson_blend(inst, GuidanceMode.SOURCE_ONLY, tol=1e-10)
        assert np.max(np.abs(out.data - c)) < 1e-8

    def test_gradient_rich_source_matches_dense(self):
        rng = np.random.default_rng(9)
        target = ImageTensor.from_array(rng.random((16, 16, 3)))
        source = ImageTensor.from_array(rng.random((10, 10, 3)))
        mask = Mask.from_array(np.ones((10, 10)))
        inst = BlendInstance(source, mask, target, offset_x=3, offset_y=3)
        for solver in ("gs", "cg"):
            out = poisson_blend(inst, GuidanceMode.SOURCE_ONLY, solver=solver, tol=1e-8)
            from gradblend.image import align
            src_al, msk_al = align(inst)
            sys_ = assemble_system(src_al, target, msk_al, GuidanceMode.SOURCE_ONLY)
            exact = dense_solve(sys_)
            want = target.data.copy()
            want[sys_.coords[:, 0], sys_.coords[:, 1], :] = exact
            want = np.clip(want, 0.0, 1.0)
            assert np.max(np.abs(out.data - want)) < 1e-4

    def test_untouched_outside_region(self):
        s, t, m = random_instance(10)
        inst = BlendInstance(s, m, t)
        out = poisson_blend(inst, GuidanceMode.SOURCE_ONLY)
        outside = m.data == 0.0
        assert np.array_equal(out.data[outside], t.data[outside])


def _ring_values(plane, mask):
    ring = []
    h, w = mask.shape
    for i in range(h):
        for j in range(w):
            if mask[i, j] != 1.0:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if mask[ii, jj] == 0.0:
                    ring.append(plane[ii, jj])
    return np.array(ring)

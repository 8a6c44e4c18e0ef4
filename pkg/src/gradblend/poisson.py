"""Classic Poisson image editing: assemble and solve the discrete system.

For every mask-1 pixel p the unknown f_p satisfies

    4 f_p - sum_{q in N_p, mask=1} f_q
        = sum_{q in N_p, mask=0} t_q + sum_{q in N_p} v_pq

with N_p the 4-connected neighbors, t the target (Dirichlet data from
mask-0 neighbors) and v the guidance field: v_pq = g_p - g_q from the
source alone, or additionally (t_p - t_q) in mixed mode.  Masks that touch
the frame edge are rejected; the boundary condition would be undefined
there.  Channels are solved independently and identically regardless of
order.

The assembled matrix is sparse, symmetric positive-definite.  Two
iterative solvers are provided (Gauss-Seidel with red-black sweep
ordering, and conjugate gradients) plus a dense direct solve used as the
correctness oracle in tests.  V-cycle multigrid is intentionally not
implemented; two solvers suffice for the oracle role.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .image import BlendInstance, ImageTensor, Mask, align, clamp01


class PoissonError(ValueError):
    """Invalid blend region for system assembly."""


class GuidanceMode(enum.Enum):
    SOURCE_ONLY = "source"
    MIXED_SUM = "mixed"


@dataclass
class PoissonSystem:
    """Sparse SPD system over the mask-1 pixels, one row per pixel."""

    matrix: sp.csr_matrix
    rhs: np.ndarray  # (n, channels)
    index_map: np.ndarray  # (H, W) int32, -1 outside the region
    coords: np.ndarray  # (n, 2) row/col of each unknown

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class SolveResult:
    solution: np.ndarray  # (n, channels)
    iterations: int
    residual: float  # final infinity-norm over all channels
    converged: bool
    # per-channel 2-norm residual after each iteration (CG); infinity-norm
    # after each sweep (GS)
    residual_history: list = field(default_factory=list)


_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def assemble_system(
    source: ImageTensor,
    target: ImageTensor,
    mask: Mask,
    mode: GuidanceMode = GuidanceMode.SOURCE_ONLY,
) -> PoissonSystem:
    """Build the linear system for source/mask already aligned to the
    target frame (see image.align)."""
    if (source.height, source.width) != (target.height, target.width):
        raise PoissonError("source must be aligned to the target frame")
    if (mask.height, mask.width) != (target.height, target.width):
        raise PoissonError("mask must be aligned to the target frame")
    m = mask.data == 1.0
    h, w = m.shape
    if not m.any():
        raise PoissonError("mask has no interior pixels")
    if m[0, :].any() or m[-1, :].any() or m[:, 0].any() or m[:, -1].any():
        raise PoissonError("mask touches the image frame edge; boundary condition undefined")

    index_map = -np.ones((h, w), dtype=np.int32)
    rr, cc = np.nonzero(m)
    n = rr.size
    index_map[rr, cc] = np.arange(n, dtype=np.int32)
    coords = np.stack([rr, cc], axis=1)

    g = source.data
    t = target.data
    channels = t.shape[2]

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    rhs = np.zeros((n, channels), dtype=np.float64)
    gp = g[rr, cc, :]
    tp = t[rr, cc, :]
    for dr, dc in _OFFSETS:
        nr, nc = rr + dr, cc + dc
        # edge rejection above guarantees neighbors stay in frame
        rhs += gp - g[nr, nc, :]
        if mode is GuidanceMode.MIXED_SUM:
            rhs += tp - t[nr, nc, :]
        nb_idx = index_map[nr, nc]
        inside = nb_idx >= 0
        rows.append(np.arange(n)[inside])
        cols.append(nb_idx[inside])
        vals.append(np.full(int(inside.sum()), -1.0))
        rhs[~inside] += t[nr[~inside], nc[~inside], :]

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return PoissonSystem(matrix=matrix, rhs=rhs, index_map=index_map, coords=coords)


def _as_x0(system: PoissonSystem, x0) -> np.ndarray:
    if x0 is None:
        return np.zeros_like(system.rhs)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != system.rhs.shape:
        raise PoissonError(f"x0 shape {x0.shape} != rhs shape {system.rhs.shape}")
    return x0.copy()


def gauss_seidel_solve(
    system: PoissonSystem,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    x0=None,
) -> SolveResult:
    """Gauss-Seidel sweeps in red-black (pixel parity) order.

    Each sweep updates all red pixels from the current black values, then
    all black from the fresh red, which vectorizes to two sparse matvecs.
    Stops when the infinity-norm residual over all channels is <= tol.
    """
    A = system.matrix
    b = system.rhs
    x = _as_x0(system, x0)
    parity = (system.coords[:, 0] + system.coords[:, 1]) % 2
    red = np.nonzero(parity == 0)[0]
    black = np.nonzero(parity == 1)[0]
    a_rb = A[red][:, black].tocsr()
    a_br = A[black][:, red].tocsr()
    diag = A.diagonal()[:, None]

    history = []
    residual = float(np.max(np.abs(b - A @ x))) if x.size else 0.0
    if residual <= tol:
        return SolveResult(x, 0, residual, True, history)
    for sweep in range(1, max_iter + 1):
        x[red] = (b[red] - a_rb @ x[black]) / diag[red]
        x[black] = (b[black] - a_br @ x[red]) / diag[black]
        residual = float(np.max(np.abs(b - A @ x)))
        history.append(residual)
        if residual <= tol:
            return SolveResult(x, sweep, residual, True, history)
    return SolveResult(x, max_iter, residual, False, history)


def cg_solve(
    system: PoissonSystem,
    tol: float = 1e-6,
    max_iter: int = 2_000,
    x0=None,
) -> SolveResult:
    """Conjugate gradients, one run per channel, no preconditioner."""
    A = system.matrix
    b = system.rhs
    x = _as_x0(system, x0)
    histories = []
    iters = 0
    converged = True
    for c in range(b.shape[1]):
        xc = x[:, c]
        r = b[:, c] - A @ xc
        p = r.copy()
        rs = float(r @ r)
        hist = [np.sqrt(rs)]
        it = 0
        while float(np.max(np.abs(r))) > tol:
            if it >= max_iter:
                converged = False
                break
            ap = A @ p
            alpha = rs / float(p @ ap)
            xc += alpha * p
            r -= alpha * ap
            rs_new = float(r @ r)
            hist.append(np.sqrt(rs_new))
            p = r + (rs_new / rs) * p
            rs = rs_new
            it += 1
        histories.append(hist)
        iters = max(iters, it)
    residual = float(np.max(np.abs(b - A @ x))) if x.size else 0.0
    return SolveResult(x, iters, residual, converged, histories)


def dense_solve(system: PoissonSystem) -> np.ndarray:
    """Direct dense solve; the exactness oracle for the iterative solvers."""
    return np.linalg.solve(system.dense(), system.rhs)


def scatter_solution(system: PoissonSystem, solution: np.ndarray, target: ImageTensor) -> ImageTensor:
    """Target image with the region pixels replaced by the solution, clamped."""
    out = target.data.copy()
    out[system.coords[:, 0], system.coords[:, 1], :] = solution
    return ImageTensor(clamp01(out))


def poisson_blend(
    instance: BlendInstance,
    mode: GuidanceMode = GuidanceMode.SOURCE_ONLY,
    solver: str = "cg",
    tol: float = 1e-6,
    max_iter: int | None = None,
) -> ImageTensor:
    """End-to-end classic Poisson blend of a placement instance."""
    src, msk = align(instance)
    system = assemble_system(src, instance.target, msk, mode)
    if solver == "gs":
        result = gauss_seidel_solve(system, tol, max_iter or 10_000)
    elif solver == "cg":
        result = cg_solve(system, tol, max_iter or 2_000)
    else:
        raise PoissonError(f"unknown solver {solver!r} (use 'gs' or 'cg')")
    return scatter_solution(system, result.solution, instance.target)

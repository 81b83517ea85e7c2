"""Sparse solves and conditioning diagnostics.

The default path is a direct factorization with a couple of iterative
refinement steps; it is robust under the ill-conditioning that small cut
fractions induce (the method has no stabilization for those by design, so the
solver measures the consequences instead of patching them).  Conjugate
gradients is offered for symmetric systems as a positivity smoke test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem


class SolverError(Exception):
    pass


class ConvergenceFailure(SolverError):
    pass


class SingularMatrix(SolverError):
    pass


class ZeroDiagonal(SolverError):
    """A zero diagonal entry: a dead DOF escaped the activity mask."""


@dataclass(eq=False)
class SolveReport:
    solution: np.ndarray
    rel_residual: float
    method: str
    iterations: int = 0
    condition_estimate: float | None = None


@dataclass(eq=False)
class ScaledSystem:
    matrix: sp.csr_matrix
    load: np.ndarray
    scale: np.ndarray  # x = scale * y recovers the unscaled solution
    symmetric: bool


def jacobi_scale(system) -> ScaledSystem:
    """Symmetric diagonal scaling to unit absolute diagonal."""
    matrix, load, symmetric = _unpack(system)
    d = matrix.diagonal()
    if np.any(d == 0.0):
        dead = np.flatnonzero(d == 0.0)[:10]
        raise ZeroDiagonal(f"zero diagonal at unknowns {dead.tolist()}")
    s = 1.0 / np.sqrt(np.abs(d))
    ds = sp.diags(s)
    scaled = (ds @ matrix @ ds).tocsr()
    return ScaledSystem(matrix=scaled, load=s * load, scale=s, symmetric=symmetric)


def _unpack(system):
    if isinstance(system, AssembledSystem):
        return system.matrix, system.load, system.symmetric
    if isinstance(system, ScaledSystem):
        return system.matrix, system.load, system.symmetric
    matrix, load = system
    return matrix, load, False


def solve(
    system,
    method: str = "direct",
    tol: float = 1e-10,
    maxit: int = 2000,
    estimate_cond: bool = False,
) -> SolveReport:
    """Solve the assembled system to a relative residual of ``tol``.

    Methods: "direct" (sparse LU on the Jacobi-scaled matrix plus iterative
    refinement), "cg" (symmetric systems only), "gmres".
    """
    matrix, load, symmetric = _unpack(system)
    if matrix.shape[0] == 0:
        raise SolverError("empty system")
    bnorm = float(np.linalg.norm(load))
    if bnorm == 0.0:
        return SolveReport(solution=np.zeros(matrix.shape[0]), rel_residual=0.0, method=method)

    scaled = jacobi_scale((matrix, load))
    iterations = 0
    if method == "direct":
        try:
            lu = spla.splu(scaled.matrix.tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        y = lu.solve(scaled.load)
        x = scaled.scale * y
        for _ in range(3):
            r = load - matrix @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x = x + scaled.scale * lu.solve(scaled.scale * r)
            iterations += 1
    elif method == "cg":
        if isinstance(system, (AssembledSystem, ScaledSystem)) and not symmetric:
            raise SolverError("cg requires a symmetric system")
        counter = _Counter()
        y, info = spla.cg(
            scaled.matrix, scaled.load, rtol=tol * 1e-2, atol=0.0, maxiter=maxit, callback=counter
        )
        if info != 0:
            raise ConvergenceFailure(f"cg failed to converge (info={info}) after {counter.n} iterations")
        x = scaled.scale * y
        iterations = counter.n
    elif method in ("gmres", "gmres-like"):
        counter = _Counter()
        y, info = spla.lgmres(
            scaled.matrix, scaled.load, rtol=tol * 1e-2, atol=0.0, maxiter=maxit, callback=counter
        )
        if info != 0:
            raise ConvergenceFailure(f"gmres-like solve failed (info={info})")
        x = scaled.scale * y
        iterations = counter.n
    else:
        raise ValueError(f"unknown method {method!r}")

    rel = float(np.linalg.norm(load - matrix @ x) / bnorm)
    if rel > tol:
        raise ConvergenceFailure(
            f"{method} solve stalled at relative residual {rel:.3e} (target {tol:.1e})"
        )
    cond = condition_estimate(scaled.matrix) if estimate_cond else None
    return SolveReport(
        solution=x,
        rel_residual=rel,
        method=method,
        iterations=iterations,
        condition_estimate=cond,
    )


class _Counter:
    def __init__(self):
        self.n = 0

    def __call__(self, *_args):
        self.n += 1


def condition_estimate(matrix: sp.spmatrix, iters: int = 50, seed: int = 0) -> float:
    """2-norm condition estimate by power and inverse-power iteration."""
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    mt = matrix.T.tocsr()
    for _ in range(iters):
        x = matrix @ x
        x = mt @ x
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return np.inf
        x /= nx
    smax = np.sqrt(np.linalg.norm(mt @ (matrix @ x)))
    try:
        lu = spla.splu(matrix.tocsc())
    except RuntimeError:
        return np.inf
    y = rng.standard_normal(n)
    for _ in range(iters):
        y = lu.solve(y, trans="N")
        y = lu.solve(y, trans="T")
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return np.inf
        y /= ny
    smin = 1.0 / np.sqrt(np.linalg.norm(lu.solve(lu.solve(y, trans="N"), trans="T")))
    return float(smax / smin)


def min_eigenvalue_estimate(matrix: sp.spmatrix, iters: int = 60, seed: int = 0) -> float:
    """Leftmost eigenvalue estimate of a symmetric matrix by shifted inverse
    iteration; a positive value is the run-time positive definiteness check."""
    rng = np.random.default_rng(seed)
    n = matrix.shape[0]
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    bound = 1.0
    for _ in range(20):
        y = matrix @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        bound = ny
        x = y / ny
    sigma = -1.1 * bound - 1.0
    try:
        lu = spla.splu((matrix - sigma * sp.eye(n, format="csc")).tocsc())
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = lu.solve(x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise SingularMatrix("inverse iteration produced the zero vector")
        x = y / ny
        lam = float(x @ (matrix @ x))
    return lam

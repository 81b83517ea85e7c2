"""Assembly of the interface-penalty system.

The bilinear form is the side-wise weighted stiffness, minus the interface
consistency terms avg(a grad u . n) [v] + beta [u] avg(a grad v . n), plus the
jump penalty (weight gamma0 p^2 / h) and the flux-jump penalty (weight
gamma1 h / p^2).  beta = +1 gives the symmetric variant, beta = -1 the
non-symmetric one whose discrete energy equals the broken energy norm exactly.

Jumps are copy 1 minus copy 2 and averages are arithmetic with weights
(1/2, 1/2).  For a segment on a shared mesh edge, copy-1 traces come from the
side-1 element and copy-2 traces from the side-2 neighbor; on a cut element
both copies are evaluated on the host element itself.

Scatter uses coordinate triplets merged by a deterministic lexicographic sort,
so assembled matrices are bitwise reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fe_space import DoubledSpace
from .geometry import CutTopology, InterfaceSegment
from .mesh import element_geometry
from .quadrature import SegmentRule, cut_cell_rule, segment_rule, tensor_gauss


@dataclass
class PenaltyParams:
    """Penalty configuration: beta in {+1, -1}, nonnegative gamma0/gamma1, and
    the space degree p entering the scalings gamma0 p^2/h and gamma1 h/p^2."""

    beta: int
    gamma0: float
    gamma1: float
    p: int
    alpha0_estimate: float | None = None

    def __post_init__(self):
        if self.beta not in (1, -1):
            raise ValueError(f"beta must be +1 or -1, got {self.beta}")
        if self.gamma0 < 0 or self.gamma1 < 0:
            raise ValueError("penalty parameters must be nonnegative")
        if (
            self.beta == 1
            and self.alpha0_estimate is not None
            and self.gamma0 * self.gamma1 < self.alpha0_estimate
        ):
            warnings.warn(
                f"gamma0*gamma1 = {self.gamma0 * self.gamma1:g} below the "
                f"coercivity estimate {self.alpha0_estimate:g}; the symmetric "
                "form may be indefinite",
                stacklevel=2,
            )


@dataclass
class Problem:
    """Coefficient, data and (optionally) the exact solution pair.

    All fields are vectorized callables; ``a``, ``f``, ``exact`` and
    ``exact_grad`` are (side-1, side-2) pairs taking (x, y) arrays, with
    ``exact_grad[i]`` returning the tuple (du/dx, du/dy).  ``g_d`` and ``g_n``
    take the curve parameter.
    """

    a: tuple
    f: tuple
    g_d: object = None
    g_n: object = None
    exact: tuple | None = None
    exact_grad: tuple | None = None

    def validate(self, curve, n: int = 50, seed: int = 0, tol: float = 1e-10):
        """Consistency self-test: interface data must match the jumps of the
        exact pair, and the coefficient must be positive."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, curve.period, n)
        pts = curve.point(t)
        x, y = pts[:, 0], pts[:, 1]
        a1 = np.asarray(self.a[0](x, y), dtype=float)
        a2 = np.asarray(self.a[1](x, y), dtype=float)
        if np.any(a1 <= 0) or np.any(a2 <= 0):
            raise ValueError("coefficient a(x) must be positive on both sides")
        if self.exact is None:
            return
        nrm = curve.normal(t)
        ju = self.exact[0](x, y) - self.exact[1](x, y)
        g1x, g1y = self.exact_grad[0](x, y)
        g2x, g2y = self.exact_grad[1](x, y)
        jf = a1 * (g1x * nrm[:, 0] + g1y * nrm[:, 1]) - a2 * (
            g2x * nrm[:, 0] + g2y * nrm[:, 1]
        )
        scale = max(1.0, float(np.max(np.abs(ju))), float(np.max(np.abs(jf))))
        gd = np.zeros(n) if self.g_d is None else np.asarray(self.g_d(t), dtype=float)
        gn = np.zeros(n) if self.g_n is None else np.asarray(self.g_n(t), dtype=float)
        err_d = float(np.max(np.abs(gd - ju)))
        err_n = float(np.max(np.abs(gn - jf)))
        if err_d > tol * scale or err_n > tol * scale:
            raise ValueError(
                f"interface data inconsistent with the exact pair: "
                f"|g_D-[u]|={err_d:.2e}, |g_N-[a grad u . n]|={err_n:.2e}"
            )


@dataclass(eq=False)
class AssembledSystem:
    """Sparse system over the active unknowns with per-term bookkeeping."""

    matrix: sp.csr_matrix
    load: np.ndarray
    symmetric: bool
    params: PenaltyParams
    blocks: dict = field(default_factory=dict)
    load_terms: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


class _Triplets:
    """Coordinate accumulation with a deterministic sort-and-merge finish."""

    def __init__(self):
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, rows, cols, local):
        r = np.repeat(rows, len(cols))
        c = np.tile(cols, len(rows))
        v = np.asarray(local, dtype=float).ravel()
        keep = (r >= 0) & (c >= 0)
        self._rows.append(r[keep])
        self._cols.append(c[keep])
        self._vals.append(v[keep])

    def to_csr(self, n: int) -> sp.csr_matrix:
        if not self._rows:
            return sp.csr_matrix((n, n))
        r = np.concatenate(self._rows)
        c = np.concatenate(self._cols)
        v = np.concatenate(self._vals)
        if len(r) == 0:
            return sp.csr_matrix((n, n))
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        new = np.empty(len(r), dtype=bool)
        new[0] = True
        np.logical_or(r[1:] != r[:-1], c[1:] != c[:-1], out=new[1:])
        starts = np.flatnonzero(new)
        merged = np.add.reduceat(v, starts)
        return sp.csr_matrix((merged, (r[starts], c[starts])), shape=(n, n))


def _volume_quadrature(space: DoubledSpace, topology: CutTopology, quad_order: int):
    """Iterate (element, side, phys points, weights, ref basis vals/grads)."""
    mesh = space.mesh
    basis = space.basis
    rule = tensor_gauss(quad_order)
    ref_vals = basis.values(rule.points[:, 0], rule.points[:, 1])
    ref_grads = basis.gradients(rule.points[:, 0], rule.points[:, 1])
    half = np.array([mesh.dx / 2.0, mesh.dy / 2.0])
    pure_grads = ref_grads / half[None, None, :]
    pure_w = rule.weights * (half[0] * half[1])

    for e in range(mesh.n_elements):
        geo = element_geometry(mesh, e)
        for side in (1, 2):
            if topology.fractions[e, side - 1] <= 0.0:
                continue
            if topology.labels[e] != 0:
                x, y = geo.to_physical(rule.points[:, 0], rule.points[:, 1])
                yield e, side, x, y, pure_w, ref_vals, pure_grads
            else:
                crule = cut_cell_rule(topology, e, side, order=quad_order)
                xi, eta = geo.to_reference(crule.points[:, 0], crule.points[:, 1])
                vals = basis.values(xi, eta)
                grads = basis.gradients(xi, eta) / half[None, None, :]
                yield e, side, crule.points[:, 0], crule.points[:, 1], crule.weights, vals, grads


def assemble_volume(space: DoubledSpace, topology: CutTopology, problem: Problem, quad_order: int) -> sp.csr_matrix:
    """Side-wise stiffness: sum_i int_{Omega_i} a grad u . grad v."""
    trip = _Triplets()
    for e, side, x, y, w, _vals, grads in _volume_quadrature(space, topology, quad_order):
        aq = np.asarray(problem.a[side - 1](x, y), dtype=float) * w
        local = np.einsum("q,qld,qmd->lm", aq, grads, grads)
        idx = space.element_unknowns(e, side)
        trip.add(idx, idx, local)
    return trip.to_csr(space.n_unknowns)


@dataclass(eq=False)
class SegmentTraces:
    """Per-copy trace operators of the local bases at segment quadrature nodes."""

    idx1: np.ndarray
    idx2: np.ndarray
    vals1: np.ndarray  # (nq, nloc)
    vals2: np.ndarray
    grads1: np.ndarray  # (nq, nloc, 2) physical gradients
    grads2: np.ndarray
    flux1: np.ndarray  # (nq, nloc) a * grad(phi) . n
    flux2: np.ndarray

    @property
    def joint_idx(self) -> np.ndarray:
        return np.concatenate([self.idx1, self.idx2])

    @property
    def jump(self) -> np.ndarray:
        return np.hstack([self.vals1, -self.vals2])

    @property
    def avg_flux(self) -> np.ndarray:
        return 0.5 * np.hstack([self.flux1, self.flux2])

    @property
    def jump_flux(self) -> np.ndarray:
        return np.hstack([self.flux1, -self.flux2])


def segment_trace_operators(
    space: DoubledSpace,
    problem: Problem,
    segment: InterfaceSegment,
    rule: SegmentRule,
) -> SegmentTraces:
    """Evaluate both copies' traces and normal fluxes along one segment."""
    mesh = space.mesh
    basis = space.basis
    half = np.array([mesh.dx / 2.0, mesh.dy / 2.0])
    elems = (segment.element, segment.neighbor if segment.on_edge else segment.element)
    out = {}
    for side, e in zip((1, 2), elems):
        geo = element_geometry(mesh, e)
        xi, eta = geo.to_reference(rule.points[:, 0], rule.points[:, 1])
        vals = basis.values(xi, eta)
        grads = basis.gradients(xi, eta) / half[None, None, :]
        aq = np.asarray(problem.a[side - 1](rule.points[:, 0], rule.points[:, 1]), dtype=float)
        flux = aq[:, None] * np.einsum("qld,qd->ql", grads, rule.normals)
        out[side] = (space.element_unknowns(e, side), vals, grads, flux)
    return SegmentTraces(
        idx1=out[1][0],
        idx2=out[2][0],
        vals1=out[1][1],
        vals2=out[2][1],
        grads1=out[1][2],
        grads2=out[2][2],
        flux1=out[1][3],
        flux2=out[2][3],
    )


def _segment_npoints(quad_order: int, p: int) -> int:
    # Traces of degree-p tensor polynomials along a parametric arc carry
    # harmonics up to 2p, their products up to 4p; p extra Gauss points on top
    # of the volume order keep those integrals at round-off level instead of
    # the ~1e-5 relative error a bare (p+2)-point rule leaves at h ~ 1/8.
    return max(quad_order + p + 2, 4)


def assemble_interface(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    params: PenaltyParams,
    quad_order: int,
) -> sp.csr_matrix:
    """Consistency terms: -sum_e int_e avg(a grad u . n)[v] + beta [u] avg(a grad v . n)."""
    trip = _Triplets()
    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, _segment_npoints(quad_order, params.p))
        tr = segment_trace_operators(space, problem, seg, rule)
        jump = tr.jump
        avg = tr.avg_flux
        w = rule.weights[:, None]
        local = -(jump.T @ (w * avg) + params.beta * avg.T @ (w * jump))
        idx = tr.joint_idx
        trip.add(idx, idx, local)
    return trip.to_csr(space.n_unknowns)


def assemble_J0(space: DoubledSpace, topology: CutTopology, params: PenaltyParams, quad_order: int = 0) -> sp.csr_matrix:
    """Jump penalty  sum_e (gamma0 p^2 / h_K) int_e [u][v]."""
    trip = _Triplets()
    dummy = _ones_problem()
    npts = _segment_npoints(quad_order if quad_order else params.p + 2, params.p)
    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, npts)
        tr = segment_trace_operators(space, dummy, seg, rule)
        h_e = element_geometry(space.mesh, seg.element).h_k
        scale = params.gamma0 * params.p**2 / h_e
        jump = tr.jump
        local = scale * (jump.T @ (rule.weights[:, None] * jump))
        trip.add(tr.joint_idx, tr.joint_idx, local)
    return trip.to_csr(space.n_unknowns)


def assemble_J1(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    params: PenaltyParams,
    quad_order: int = 0,
) -> sp.csr_matrix:
    """Flux-jump penalty  sum_e (gamma1 h_K / p^2) int_e [a grad u . n][a grad v . n]."""
    trip = _Triplets()
    npts = _segment_npoints(quad_order if quad_order else params.p + 2, params.p)
    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, npts)
        tr = segment_trace_operators(space, problem, seg, rule)
        h_e = element_geometry(space.mesh, seg.element).h_k
        scale = params.gamma1 * h_e / params.p**2
        jf = tr.jump_flux
        local = scale * (jf.T @ (rule.weights[:, None] * jf))
        trip.add(tr.joint_idx, tr.joint_idx, local)
    return trip.to_csr(space.n_unknowns)


def _ones_problem() -> Problem:
    one = lambda x, y: np.ones_like(np.asarray(x, dtype=float))
    zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    return Problem(a=(one, one), f=(zero, zero))


def assemble_load(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    params: PenaltyParams,
    quad_order: int,
):
    """Load vector with its five contributions kept separately.

    Terms: volume source, int_G g_N avg(v), -beta int_G g_D avg(a grad v . n),
    the Dirichlet penalty J_D and the flux penalty J_N.
    """
    n = space.n_unknowns
    terms = {
        "volume": np.zeros(n),
        "gn_avg": np.zeros(n),
        "gd_flux": np.zeros(n),
        "j_d": np.zeros(n),
        "j_n": np.zeros(n),
    }
    for e, side, x, y, w, vals, _grads in _volume_quadrature(space, topology, quad_order):
        fq = np.asarray(problem.f[side - 1](x, y), dtype=float) * w
        idx = space.element_unknowns(e, side)
        ok = idx >= 0
        np.add.at(terms["volume"], idx[ok], (vals.T @ fq)[ok])

    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, _segment_npoints(quad_order, params.p))
        tr = segment_trace_operators(space, problem, seg, rule)
        h_e = element_geometry(space.mesh, seg.element).h_k
        gd = (
            np.zeros(len(rule.weights))
            if problem.g_d is None
            else np.asarray(problem.g_d(rule.params), dtype=float)
        )
        gn = (
            np.zeros(len(rule.weights))
            if problem.g_n is None
            else np.asarray(problem.g_n(rule.params), dtype=float)
        )
        idx = tr.joint_idx
        ok = idx >= 0
        avg_v = 0.5 * np.hstack([tr.vals1, tr.vals2])
        w = rule.weights
        np.add.at(terms["gn_avg"], idx[ok], (avg_v.T @ (w * gn))[ok])
        np.add.at(
            terms["gd_flux"], idx[ok], (-params.beta * tr.avg_flux.T @ (w * gd))[ok]
        )
        np.add.at(
            terms["j_d"],
            idx[ok],
            (params.gamma0 * params.p**2 / h_e) * (tr.jump.T @ (w * gd))[ok],
        )
        np.add.at(
            terms["j_n"],
            idx[ok],
            (params.gamma1 * h_e / params.p**2) * (tr.jump_flux.T @ (w * gn))[ok],
        )
    load = terms["volume"] + terms["gn_avg"] + terms["gd_flux"] + terms["j_d"] + terms["j_n"]
    return load, terms


def assemble(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    params: PenaltyParams,
    quad_order: int | None = None,
) -> AssembledSystem:
    """Full system for the interface-penalty method (beta from ``params``)."""
    if quad_order is None:
        quad_order = params.p + 2
    blocks = {
        "volume": assemble_volume(space, topology, problem, quad_order),
        "interface": assemble_interface(space, topology, problem, params, quad_order),
        "j0": assemble_J0(space, topology, params, quad_order),
        "j1": assemble_J1(space, topology, problem, params, quad_order),
    }
    matrix = (blocks["volume"] + blocks["interface"] + blocks["j0"] + blocks["j1"]).tocsr()
    matrix.sum_duplicates()
    load, load_terms = assemble_load(space, topology, problem, params, quad_order)
    return AssembledSystem(
        matrix=matrix,
        load=load,
        symmetric=(params.beta == 1),
        params=params,
        blocks=blocks,
        load_terms=load_terms,
    )

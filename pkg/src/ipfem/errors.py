"""Error measurement in the method's own norms.

Reports the L2 error, the broken weighted H1 seminorm, the energy norm
(broken H1 plus both penalty terms) and the augmented energy norm that adds
the scaled flux-average term; the two penalty magnitudes are kept separately.
All integrals use quadrature objects built here, independent of the ones the
assembly used, so a shared quadrature bug cannot cancel itself out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import PenaltyParams, Problem, segment_trace_operators
from .fe_space import DoubledSpace
from .geometry import CutTopology
from .mesh import element_geometry
from .quadrature import cut_cell_rule, segment_rule, tensor_gauss


class MissingExact(Exception):
    """The problem carries no exact solution to measure against."""


class InsufficientData(Exception):
    """Too few refinement levels to estimate rates."""


@dataclass
class ErrorReport:
    l2: float
    h1_broken: float
    norm_a: float
    norm_b: float  # nan when gamma0 == 0 (the flux-average weight is undefined)
    j0_value: float
    j1_value: float
    dofs: int
    h: float
    p: int
    gamma0: float
    gamma1: float
    beta: int


def _volume_rules(space, topology, quad_order):
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


def compute_errors(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    solution: np.ndarray,
    params: PenaltyParams,
    quad_order: int | None = None,
) -> ErrorReport:
    """All error norms of ``solution`` against the problem's exact pair."""
    if problem.exact is None or problem.exact_grad is None:
        raise MissingExact("compute_errors requires problem.exact and exact_grad")
    p = params.p
    if quad_order is None:
        quad_order = p + 4
    solution = np.asarray(solution, dtype=float)

    l2_parts, h1_parts = [], []
    for e, side, x, y, w, vals, grads in _volume_rules(space, topology, quad_order):
        local = space.gather(solution, e, side)
        uh = vals @ local
        guh = np.einsum("qld,l->qd", grads, local)
        ue = np.asarray(problem.exact[side - 1](x, y), dtype=float)
        gx, gy = problem.exact_grad[side - 1](x, y)
        aq = np.asarray(problem.a[side - 1](x, y), dtype=float)
        err = ue - uh
        gerr = np.stack([gx - guh[:, 0], gy - guh[:, 1]], axis=-1)
        l2_parts.append(float(w @ err**2))
        h1_parts.append(float((w * aq) @ np.sum(gerr**2, axis=-1)))
    l2_sq = float(np.sum(l2_parts))
    h1_sq = float(np.sum(h1_parts))

    j0_parts, j1_parts, avg_parts = [], [], []
    npts = max(quad_order + p + 2, 4)
    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, npts)
        tr = segment_trace_operators(space, problem, seg, rule)
        x, y = rule.points[:, 0], rule.points[:, 1]
        c1 = space.gather(solution, seg.element, 1)
        c2 = space.gather(
            solution, seg.neighbor if seg.on_edge else seg.element, 2
        )
        jump_h = tr.vals1 @ c1 - tr.vals2 @ c2
        fjump_h = tr.flux1 @ c1 - tr.flux2 @ c2
        favg_h = 0.5 * (tr.flux1 @ c1 + tr.flux2 @ c2)

        u1 = np.asarray(problem.exact[0](x, y), dtype=float)
        u2 = np.asarray(problem.exact[1](x, y), dtype=float)
        g1x, g1y = problem.exact_grad[0](x, y)
        g2x, g2y = problem.exact_grad[1](x, y)
        a1 = np.asarray(problem.a[0](x, y), dtype=float)
        a2 = np.asarray(problem.a[1](x, y), dtype=float)
        f1 = a1 * (g1x * rule.normals[:, 0] + g1y * rule.normals[:, 1])
        f2 = a2 * (g2x * rule.normals[:, 0] + g2y * rule.normals[:, 1])

        jump_err = (u1 - u2) - jump_h
        fjump_err = (f1 - f2) - fjump_h
        favg_err = 0.5 * (f1 + f2) - favg_h

        h_e = element_geometry(space.mesh, seg.element).h_k
        w = rule.weights
        j0_parts.append(params.gamma0 * p**2 / h_e * float(w @ jump_err**2))
        j1_parts.append(params.gamma1 * h_e / p**2 * float(w @ fjump_err**2))
        if params.gamma0 > 0.0:
            avg_parts.append(h_e / (params.gamma0 * p**2) * float(w @ favg_err**2))

    j0 = float(np.sum(j0_parts)) if j0_parts else 0.0
    j1 = float(np.sum(j1_parts)) if j1_parts else 0.0
    norm_a = math.sqrt(h1_sq + j0 + j1)
    if params.gamma0 > 0.0:
        avg_sq = float(np.sum(avg_parts)) if avg_parts else 0.0
        norm_b = math.sqrt(norm_a**2 + avg_sq)
    else:
        norm_b = float("nan")
    return ErrorReport(
        l2=math.sqrt(l2_sq),
        h1_broken=math.sqrt(h1_sq),
        norm_a=norm_a,
        norm_b=norm_b,
        j0_value=j0,
        j1_value=j1,
        dofs=space.n_unknowns,
        h=space.mesh.h,
        p=p,
        gamma0=params.gamma0,
        gamma1=params.gamma1,
        beta=params.beta,
    )


def energy_norm_squared(
    space: DoubledSpace,
    topology: CutTopology,
    problem: Problem,
    params: PenaltyParams,
    coeffs: np.ndarray,
    quad_order: int | None = None,
) -> float:
    """Energy norm squared of a discrete function by independent quadrature:
    broken weighted gradient energy plus both penalty terms."""
    p = params.p
    if quad_order is None:
        quad_order = p + 4
    coeffs = np.asarray(coeffs, dtype=float)
    parts = []
    for e, side, x, y, w, _vals, grads in _volume_rules(space, topology, quad_order):
        local = space.gather(coeffs, e, side)
        guh = np.einsum("qld,l->qd", grads, local)
        aq = np.asarray(problem.a[side - 1](x, y), dtype=float)
        parts.append(float((w * aq) @ np.sum(guh**2, axis=-1)))
    npts = max(quad_order + p + 2, 4)
    for seg in topology.segments:
        rule = segment_rule(seg, topology.curve, npts)
        tr = segment_trace_operators(space, problem, seg, rule)
        c1 = space.gather(coeffs, seg.element, 1)
        c2 = space.gather(coeffs, seg.neighbor if seg.on_edge else seg.element, 2)
        jump_h = tr.vals1 @ c1 - tr.vals2 @ c2
        fjump_h = tr.flux1 @ c1 - tr.flux2 @ c2
        h_e = element_geometry(space.mesh, seg.element).h_k
        w = rule.weights
        parts.append(params.gamma0 * p**2 / h_e * float(w @ jump_h**2))
        parts.append(params.gamma1 * h_e / p**2 * float(w @ fjump_h**2))
    return float(np.sum(parts))


@dataclass
class RateSummary:
    slopes: dict  # field -> least-squares slope over the finest three levels
    pairwise: dict  # field -> list of per-pair incremental rates


_RATE_FIELDS = ("l2", "h1_broken", "norm_a", "norm_b", "j0_value", "j1_value")


def estimate_rates(reports: list[ErrorReport]) -> RateSummary:
    """log-log slopes of each error against h.

    Requires at least three reports at strictly decreasing h and a common p;
    the headline slope is the least-squares fit over the finest three levels,
    with all pairwise incremental rates returned alongside.
    """
    if len(reports) < 3:
        raise InsufficientData(f"need >= 3 reports, got {len(reports)}")
    hs = np.array([r.h for r in reports])
    if not np.all(np.diff(hs) < 0):
        raise InsufficientData("reports must be ordered by strictly decreasing h")
    if len({r.p for r in reports}) != 1:
        raise InsufficientData("reports mix polynomial degrees")
    slopes = {}
    pairwise = {}
    for name in _RATE_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        pw = []
        for k in range(len(vals) - 1):
            ok = vals[k] > 0 and vals[k + 1] > 0 and np.isfinite(vals[k]) and np.isfinite(vals[k + 1])
            pw.append(
                float(np.log(vals[k] / vals[k + 1]) / np.log(hs[k] / hs[k + 1]))
                if ok
                else float("nan")
            )
        pairwise[name] = pw
        tail_v = vals[-3:]
        tail_h = hs[-3:]
        if np.all(tail_v > 0) and np.all(np.isfinite(tail_v)):
            slope, _ = np.polyfit(np.log(tail_h), np.log(tail_v), 1)
            slopes[name] = float(slope)
        else:
            slopes[name] = float("nan")
    return RateSummary(slopes=slopes, pairwise=pairwise)

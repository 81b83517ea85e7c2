"""Numerical probes of the inequality infrastructure behind the method.

Each probe turns an analysis inequality into a measurable ratio: the local
trace and inverse-trace constants on the analysis side of each cut element,
the smallest Rayleigh quotient of the symmetric form against the energy Gram
matrix (the empirical coercivity region in the penalty plane), and the lower
bound on the distance function G built from the far corner of each segment's
host element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .fe_space import build_basis
from .geometry import CutTopology, select_analysis_side
from .mesh import element_geometry
from .quadrature import cut_cell_rule, segment_rule, tensor_gauss


class ProbeError(Exception):
    pass


@dataclass
class ProbeReport:
    name: str
    h: float
    p: int
    per_element: dict  # element -> constant estimate
    global_max: float
    global_median: float
    extra: dict = field(default_factory=dict)


def _side_norm_matrices(topology, seg, p, quad_order):
    """Edge and region Gram matrices of the local degree-p tensor basis on the
    host element, the edge over the segment, the region over the analysis side."""
    mesh = topology.mesh
    basis = build_basis(p)
    geo = element_geometry(mesh, seg.element)
    side = seg.analysis_side or select_analysis_side(seg, mesh, topology.curve)

    srule = segment_rule(seg, topology.curve, max(quad_order, 8))
    xi, eta = geo.to_reference(srule.points[:, 0], srule.points[:, 1])
    vals_e = basis.values(xi, eta)
    m_edge = vals_e.T @ (srule.weights[:, None] * vals_e)

    if seg.on_edge:
        rule = tensor_gauss(quad_order)
        x, y = geo.to_physical(rule.points[:, 0], rule.points[:, 1])
        w = rule.weights * geo.jacobian_det
        xi_k, eta_k = rule.points[:, 0], rule.points[:, 1]
    else:
        crule = cut_cell_rule(topology, seg.element, side, order=quad_order)
        x, y = crule.points[:, 0], crule.points[:, 1]
        w = crule.weights
        xi_k, eta_k = geo.to_reference(x, y)
    vals_k = basis.values(xi_k, eta_k)
    grads_k = basis.gradients(xi_k, eta_k) / geo.half[None, None, :]
    m_region = vals_k.T @ (w[:, None] * vals_k)
    k_region = np.einsum("qld,q,qmd->lm", grads_k, w, grads_k)
    return side, m_edge, m_region, k_region, geo


def _gen_max_eig_power(m_num, m_den, iters=50, seed=0):
    """Largest generalized eigenvalue of (m_num, m_den) by power iteration
    with a Cholesky solve of the SPD denominator."""
    try:
        chol = la.cho_factor(m_den)
    except la.LinAlgError:
        w = la.eigh(m_num, m_den, eigvals_only=True)
        return float(w[-1])
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m_den.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = la.cho_solve(chol, m_num @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        lam = float(x @ (m_num @ x)) / float(x @ (m_den @ x))
    return lam


def probe_inverse_trace(mesh, curve, topology: CutTopology, p: int, samples: int = 20, seed: int = 0) -> ProbeReport:
    """Constant in  ||v_h||_e <= C (p / h^(1/2)) ||v_h||_{K_ie}  over degree-p
    polynomials: per segment host, both the max over random samples and an
    exact power-method solve of the generalized eigenproblem."""
    rng = np.random.default_rng(seed)
    quad_order = p + 3
    sampled = {}
    refined = {}
    for seg in topology.segments:
        _, m_edge, m_region, _, geo = _side_norm_matrices(topology, seg, p, quad_order)
        best = 0.0
        for _ in range(samples):
            c = rng.standard_normal(m_edge.shape[0])
            num = float(c @ (m_edge @ c))
            den = float(c @ (m_region @ c))
            if den <= 0.0:
                continue
            best = max(best, np.sqrt(num / den))
        scale = np.sqrt(geo.h_k) / p
        sampled[seg.element] = best * scale
        lam = _gen_max_eig_power(m_edge, m_region, seed=seed)
        refined[seg.element] = float(np.sqrt(max(lam, 0.0)) * scale)
    values = np.array(list(refined.values()))
    return ProbeReport(
        name="inverse-trace",
        h=mesh.h,
        p=p,
        per_element=refined,
        global_max=float(values.max()),
        global_median=float(np.median(values)),
        extra={"sampled_max": sampled},
    )


def _random_smooth_fields(rng, n, h):
    """Cubic polynomials with analytic gradients, plus one oscillatory field."""
    fields = []
    for _ in range(n):
        coef = rng.standard_normal((4, 4))

        def val(x, y, c=coef):
            return sum(
                c[i, j] * x**i * y**j for i in range(4) for j in range(4)
            )

        def grad(x, y, c=coef):
            gx = sum(
                i * c[i, j] * x ** (i - 1) * y**j
                for i in range(1, 4)
                for j in range(4)
            )
            gy = sum(
                j * c[i, j] * x**i * y ** (j - 1)
                for i in range(4)
                for j in range(1, 4)
            )
            return gx, gy

        fields.append((val, grad))
    k = min(4.0 / h, 64.0)

    def osc(x, y, k=k):
        return np.sin(k * x) * np.cos(k * y)

    def osc_grad(x, y, k=k):
        return k * np.cos(k * x) * np.cos(k * y), -k * np.sin(k * x) * np.sin(k * y)

    fields.append((osc, osc_grad))
    return fields


def probe_trace(mesh, curve, topology: CutTopology, samples: int = 20, seed: int = 0) -> ProbeReport:
    """Constant in  ||v||_e <= C (h^(-1/2)||v|| + ||v||^(1/2)||grad v||^(1/2))
    over random smooth fields on the analysis side."""
    rng = np.random.default_rng(seed)
    quad_order = 8
    per_element = {}
    for seg in topology.segments:
        side = seg.analysis_side or select_analysis_side(seg, mesh, topology.curve)
        geo = element_geometry(mesh, seg.element)
        srule = segment_rule(seg, topology.curve, 12)
        if seg.on_edge:
            rule = tensor_gauss(quad_order)
            x, y = geo.to_physical(rule.points[:, 0], rule.points[:, 1])
            w = rule.weights * geo.jacobian_det
        else:
            crule = cut_cell_rule(topology, seg.element, side, order=quad_order)
            x, y = crule.points[:, 0], crule.points[:, 1]
            w = crule.weights
        best = 0.0
        for val, grad in _random_smooth_fields(rng, samples, mesh.h):
            ve = np.sqrt(np.sum(srule.weights * val(srule.points[:, 0], srule.points[:, 1]) ** 2))
            vk = np.sqrt(np.sum(w * val(x, y) ** 2))
            gx, gy = grad(x, y)
            gk = np.sqrt(np.sum(w * (gx**2 + gy**2)))
            if vk == 0.0:
                continue
            denom = vk / np.sqrt(geo.h_k) + np.sqrt(vk) * np.sqrt(gk)
            if denom == 0.0:
                continue
            best = max(best, ve / denom)
        per_element[seg.element] = best
    values = np.array(list(per_element.values()))
    return ProbeReport(
        name="trace",
        h=mesh.h,
        p=0,
        per_element=per_element,
        global_max=float(values.max()),
        global_median=float(np.median(values)),
    )


def probe_coercivity(
    system_builder,
    gamma0_values,
    gamma1_values,
    iters: int = 30,
    tol: float = 1e-8,
    seed: int = 0,
) -> dict:
    """Smallest Rayleigh quotient of the symmetric matrix against the energy
    Gram matrix (volume + both penalties) on a (gamma0, gamma1) grid.

    Returns {(gamma0, gamma1): quotient}; nonpositive quotients are reported,
    not raised.  The Gram matrix is regularized by a tiny diagonal shift when
    a zero penalty weight makes it singular.
    """
    out = {}
    for g1 in gamma1_values:
        for g0 in gamma0_values:
            system = system_builder(g0, g1)
            a = system.matrix.tocsc()
            gram = (
                system.blocks["volume"] + system.blocks["j0"] + system.blocks["j1"]
            ).tocsc()
            out[(g0, g1)] = _min_rayleigh(a, gram, iters=iters, tol=tol, seed=seed)
    return out


def _min_rayleigh(a, gram, iters=30, tol=1e-8, seed=0, dense_cutoff=1500):
    """Leftmost generalized eigenvalue of (a, gram).

    Small systems use a dense symmetric eigensolve; larger ones run Krylov
    inverse iteration (shift-invert Lanczos) with a shift placed below the
    spectrum by a power-iteration bound, so the nearest eigenvalue to the
    shift is the leftmost one.  A singular Gram matrix (zero penalty weights)
    is regularized by a tiny diagonal shift and the quotient still reported.
    """
    import scipy.sparse as sp

    n = a.shape[0]
    rng = np.random.default_rng(seed)
    dscale = float(np.max(np.abs(gram.diagonal()))) if n else 1.0

    if n <= dense_cutoff:
        ad = a.toarray()
        gd = gram.toarray()
        ad = 0.5 * (ad + ad.T)
        gd = 0.5 * (gd + gd.T)
        try:
            vals = la.eigh(ad, gd, eigvals_only=True, subset_by_index=[0, 0])
        except la.LinAlgError:
            gd = gd + 1e-10 * dscale * np.eye(n)
            vals = la.eigh(ad, gd, eigvals_only=True, subset_by_index=[0, 0])
        return float(vals[0])

    try:
        glu = spla.splu(gram)
    except RuntimeError:
        gram = (gram + 1e-10 * dscale * sp.eye(n, format="csc")).tocsc()
        glu = spla.splu(gram)

    # crude spectral bound of gram^{-1} a to place a shift below the spectrum
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    bound = 1.0
    for _ in range(15):
        y = glu.solve(a @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        bound = ny
        x = y / ny
    sigma = -1.1 * bound - 1.0
    try:
        vals = spla.eigsh(
            a,
            k=1,
            M=gram,
            sigma=sigma,
            which="LM",
            maxiter=max(200, 20 * iters),
            tol=tol,
            return_eigenvectors=False,
            v0=rng.standard_normal(n),
        )
    except (RuntimeError, spla.ArpackNoConvergence) as exc:
        raise ProbeError(f"inverse iteration failed: {exc}") from exc
    return float(vals[0])


def far_corner(segment, mesh, curve):
    """Host-element corner farthest from the tangent line at the segment
    midpoint (the far point P of the fan construction)."""
    tm = segment.t_mid
    p0 = curve.point(tm)
    d = curve.tangent(tm)
    d = d / np.linalg.norm(d)
    corners = mesh.vertices[mesh.elements[segment.element]]
    rel = corners - p0
    dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])
    return corners[int(np.argmax(dist))]


def probe_G(topology: CutTopology, curve, samples_per_segment: int = 64) -> ProbeReport:
    """min over segments and parameters of G(t)/h_K, where G is the distance
    function |(r-P) x r'|/|r'| with origin at the far corner P."""
    mesh = topology.mesh
    per_element = {}
    for seg in topology.segments:
        p_far = far_corner(seg, mesh, curve)
        ts = np.linspace(seg.t_lo, seg.t_hi, samples_per_segment)
        r = curve.point(ts) - p_far[None, :]
        dr = curve.tangent(ts)
        g = np.abs(r[:, 0] * dr[:, 1] - r[:, 1] * dr[:, 0]) / np.linalg.norm(dr, axis=-1)
        h_e = element_geometry(mesh, seg.element).h_k
        per_element[seg.element] = float(g.min() / h_e)
    values = np.array(list(per_element.values()))
    return ProbeReport(
        name="far-point-distance",
        h=mesh.h,
        p=0,
        per_element=per_element,
        global_max=float(values.max()),
        global_median=float(np.median(values)),
        extra={"global_min": float(values.min())},
    )

"""Finite-difference Wirtinger calculus, circle means and certification predicates.

Derivatives are taken in the real coordinates ``(x_1..x_n, y_1..y_n)`` with
central differences and one Richardson level, then recombined:
``d_j = (d/dx_j - i d/dy_j) / 2`` and
``d_i dbar_j f = (f_xixj + f_yiyj + i (f_xiyj - f_yixj)) / 4``.

All certifiers return :class:`~pshexhaust.records.CertificationReport`
objects whose records carry the worst violation and where it occurred.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import as_points, check_count, check_positive
from .domain import Domain, ThinSublevelError, exit_radii, sample_sublevel, sublevel
from .fields import ScalarField
from .records import CertificationReport, CheckRecord, make_record
from .space_measure import standard_normals

DEFAULT_H = 1e-4


def _unit_displacements(n):
    """Rows are the real coordinate directions as complex displacements."""
    return np.concatenate([np.eye(n), 1j * np.eye(n)]).astype(np.complex128)


def _real_derivatives(f, Z, h, second=True):
    """Central-difference gradient and Hessian in real coordinates (no Richardson)."""
    N, n = Z.shape
    m = 2 * n
    E = _unit_displacements(n)
    offs = [np.zeros(n, dtype=np.complex128)]
    offs += [h * E[a] for a in range(m)]
    offs += [-h * E[a] for a in range(m)]
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)] if second else []
    for a, b in pairs:
        offs += [h * (E[a] + E[b]), h * (E[a] - E[b]), h * (-E[a] + E[b]), -h * (E[a] + E[b])]
    O = np.array(offs)
    vals = f.evaluate((Z[:, None, :] + O[None, :, :]).reshape(-1, n)).reshape(N, O.shape[0])
    f0 = vals[:, 0]
    fp = vals[:, 1:1 + m]
    fm = vals[:, 1 + m:1 + 2 * m]
    grad = (fp - fm) / (2 * h)
    if not second:
        return grad, None
    hess = np.empty((N, m, m))
    idx = np.arange(m)
    hess[:, idx, idx] = (fp - 2 * f0[:, None] + fm) / h ** 2
    base = 1 + 2 * m
    for k, (a, b) in enumerate(pairs):
        q = vals[:, base + 4 * k:base + 4 * k + 4]
        v = (q[:, 0] - q[:, 1] - q[:, 2] + q[:, 3]) / (4 * h ** 2)
        hess[:, a, b] = v
        hess[:, b, a] = v
    return grad, hess


def real_derivatives(f, Z, h=DEFAULT_H, richardson=True, second=True):
    g1, H1 = _real_derivatives(f, Z, h, second)
    if not richardson:
        return g1, H1
    g2, H2 = _real_derivatives(f, Z, h / 2, second)
    g = (4 * g2 - g1) / 3
    H = None if not second else (4 * H2 - H1) / 3
    return g, H


def _to_mixed(R, n):
    xx = R[:, :n, :n]
    yy = R[:, n:, n:]
    xy = R[:, :n, n:]
    yx = R[:, n:, :n]
    return 0.25 * ((xx + yy) + 1j * (xy - yx))


@dataclass
class HessianForm:
    """Mixed second derivatives ``H[i, j] = d_i dbar_j f`` at one point."""

    point: np.ndarray
    matrix: np.ndarray
    asymmetry: float = 0.0

    @property
    def dim(self):
        return self.matrix.shape[0]

    def quadratic_form(self, w):
        w = np.asarray(w, dtype=np.complex128)
        return float(np.real(w @ self.matrix @ np.conj(w)))

    def eigenvalues(self, dim=None):
        k = self.dim if dim is None else dim
        return np.linalg.eigvalsh(self.matrix[:k, :k])


def wirtinger_grad(f, z, h=DEFAULT_H, richardson=True):
    """Return ``(d f, dbar f)`` at one point (or arrays for a batch)."""
    pts, single = as_points(z)
    n = pts.shape[1]
    if f.grad is not None:
        d = np.asarray(f.grad(pts), dtype=np.complex128)
    else:
        g, _ = real_derivatives(f, pts, h, richardson, second=False)
        d = 0.5 * (g[:, :n] - 1j * g[:, n:])
    dbar = np.conj(d)
    if single:
        return d[0], dbar[0]
    return d, dbar


def mixed_hessians(f, Z, h=DEFAULT_H, richardson=True):
    """Batch of Hermitian mixed Hessians, shape ``(count, n, n)``.

    ``h`` may be one step or an array with a step per point.
    """
    Z = np.asarray(Z, dtype=np.complex128)
    if f.hessian is not None:
        H = np.asarray(f.hessian(Z), dtype=np.complex128)
    elif np.ndim(h) == 0:
        _, R = real_derivatives(f, Z, h, richardson)
        H = _to_mixed(R, Z.shape[1])
    else:
        h = np.broadcast_to(np.asarray(h, dtype=float), (Z.shape[0],))
        H = np.empty((Z.shape[0], Z.shape[1], Z.shape[1]), dtype=np.complex128)
        for step in np.unique(h):
            rows = h == step
            _, R = real_derivatives(f, Z[rows], float(step), richardson)
            H[rows] = _to_mixed(R, Z.shape[1])
    return 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))


def mixed_hessian(f, z, h=DEFAULT_H, richardson=True):
    pts, _ = as_points(z)
    if f.hessian is not None:
        raw = np.asarray(f.hessian(pts), dtype=np.complex128)
    else:
        _, R = real_derivatives(f, pts, h, richardson)
        raw = _to_mixed(R, pts.shape[1])
    asym = float(np.max(np.abs(raw - np.conj(np.swapaxes(raw, 1, 2))))) if raw.size else 0.0
    H = 0.5 * (raw + np.conj(np.swapaxes(raw, 1, 2)))
    return HessianForm(pts[0], H[0], asym)


def circle_nodes(a, b, r, m):
    theta = 2 * np.pi * np.arange(m) / m
    return a[None, :] + r * np.exp(1j * theta)[:, None] * b[None, :]


def circle_mean(f, a, b, r, m=64, domain=None):
    """Trapezoid-rule mean of ``f(a + r e^{i theta} b)`` over ``m`` equispaced angles."""
    check_count(m, "m")
    A, _ = as_points(a)
    B, _ = as_points(b)
    n = max(A.shape[1], B.shape[1])
    A = np.pad(A, ((0, 0), (0, n - A.shape[1])))[0]
    B = np.pad(B, ((0, 0), (0, n - B.shape[1])))[0]
    nodes = circle_nodes(A, B, r, m)
    if domain is not None and not np.all(domain.membership(nodes)):
        raise ValueError(f"circle of radius {r} around {A.tolist()} leaves {domain.name}")
    return float(np.mean(f.evaluate(nodes)))


def circle_means(f, A, B, r, m=64):
    """Vectorized circle means for paired rows of ``A`` (centers) and ``B`` (directions)."""
    theta = 2 * np.pi * np.arange(m) / m
    rot = r * np.exp(1j * theta)
    nodes = A[:, None, :] + rot[None, :, None] * B[:, None, :]
    vals = f.evaluate(nodes.reshape(-1, A.shape[1])).reshape(A.shape[0], m)
    return vals.mean(axis=1)


def sample_directions(n, count, seed=0, stream=30):
    """Coordinate axes first, then normalized Gaussian directions."""
    axes = np.eye(n, dtype=np.complex128)[:count]
    extra = count - axes.shape[0]
    if extra <= 0:
        return axes
    g = standard_normals(seed, stream, extra, 2 * n)
    d = g[:, :n] + 1j * g[:, n:]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.vstack([axes, d])


def _inside_circles(V, A, B, r, m):
    """Mask of (point, direction) pairs whose circle of radius ``r`` stays in ``V``."""
    if V is None:
        return np.ones(A.shape[0], dtype=bool)
    # a circle of radius r*|b| stays inside when the center is that far from the boundary
    d = V.inner(A)
    ok = d > r * np.linalg.norm(B, axis=1) * (1 + 1e-9)
    return ok


def certify_psh(f, V, points, directions=None, radii=(1e-1, 1e-2, 1e-3), tol=1e-3,
                dims=None, m=64, h=DEFAULT_H, n_directions=8, seed=0, hessian=True,
                relative=False, anchor="psh"):
    """Sampled plurisubharmonicity certificate.

    Sub-test one: ``f(a) <= mean over circle + tol`` for every point, direction
    and radius whose circle stays in ``V``.  Sub-test two: the smallest
    eigenvalue of the mixed Hessian restricted to the first ``n'`` coordinates
    is ``>= -tol`` for every ``n'`` in ``dims``.  With ``relative`` both
    violations are divided by ``max(1, |f(a)|)`` first; ``h`` may be a
    per-point array.
    """
    P, _ = as_points(points)
    N, n = P.shape
    D = sample_directions(n, n_directions, seed) if directions is None else as_points(directions)[0]
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    dims = list(range(1, n + 1)) if dims is None else sorted(dims)
    report = CertificationReport()

    A = np.repeat(P, D.shape[0], axis=0)
    B = np.tile(D, (N, 1))
    fp = f.evaluate(P)
    scale = np.maximum(1.0, np.abs(fp)) if relative else np.ones(N)
    f0 = np.repeat(fp, D.shape[0])
    s0 = np.repeat(scale, D.shape[0])
    defects, where, used = [], [], 0
    for r in radii:
        ok = _inside_circles(V, A, B, r, m)
        if not np.any(ok):
            continue
        means = circle_means(f, A[ok], B[ok], r, m)
        defects.append((f0[ok] - means) / s0[ok])
        where.append(np.column_stack([A[ok], B[ok], np.full(ok.sum(), r)]))
        used += int(ok.sum())
    if defects:
        defects = np.concatenate(defects)
        where = np.concatenate(where)
        idx = int(np.argmax(defects))
        loc = {"point": where[idx, :n], "direction": where[idx, n:2 * n],
               "radius": float(where[idx, -1].real)}
        worst = float(defects[idx])
    else:
        worst, loc = float("-inf"), None
    report.add(CheckRecord(f"{anchor}.circle_mean", bool(worst <= tol), used, tol, worst,
                           _loc(loc), seed, {"radii": list(radii), "nodes": m,
                                             "relative": relative}))
    if hessian:
        H = mixed_hessians(f, P, h)
        worst_k, loc_k, per_dim = float("-inf"), None, {}
        for k in dims:
            lam = np.linalg.eigvalsh(H[:, :k, :k])[:, 0] / scale
            per_dim[k] = float(lam.min())
            idx = int(np.argmin(lam))
            if -lam[idx] > worst_k:
                worst_k = float(-lam[idx])
                loc_k = {"point": P[idx], "dim": k}
        report.add(CheckRecord(f"{anchor}.hessian_lambda_min", bool(worst_k <= tol), N * len(dims),
                               tol, worst_k, _loc(loc_k), seed,
                               {"lambda_min_by_dim": per_dim, "relative": relative,
                                "h": float(np.min(h)) if np.ndim(h) else h}))
    return report


def _loc(loc):
    if loc is None:
        return None
    out = {}
    for k, v in loc.items():
        if isinstance(v, np.ndarray):
            out[k] = [[float(c.real), float(c.imag)] for c in v]
        else:
            out[k] = v
    return out


class SemiAntiPshResult(NamedTuple):
    passes: bool
    C_estimate: float
    by_dim: dict
    report: CertificationReport


def certify_semi_anti_psh(f, V, points, tol=1e-3, dims=None, h=DEFAULT_H,
                          anchor="semi_anti_psh"):
    """Estimate ``C = max lambda_max(H)`` over sampled points and truncations.

    Passes when every estimate is finite and the sweep is monotone, i.e.
    ``C(n')`` never exceeds ``C(n_max)`` by more than ``tol``.
    """
    P, _ = as_points(points)
    N, n = P.shape
    dims = list(range(1, n + 1)) if dims is None else sorted(dims)
    H = mixed_hessians(f, P, h)
    by_dim, argmax = {}, {}
    for k in dims:
        lam = np.linalg.eigvalsh(H[:, :k, :k])[:, -1]
        by_dim[k] = float(lam.max())
        argmax[k] = int(np.argmax(lam))
    c_max = by_dim[dims[-1]]
    finite = all(np.isfinite(v) for v in by_dim.values())
    excess = max(by_dim[k] - c_max for k in dims)
    passes = bool(finite and excess <= tol)
    report = CertificationReport()
    report.add(CheckRecord(f"{anchor}.hessian_upper_bound", passes, N * len(dims), tol, excess,
                           _loc({"point": P[argmax[dims[-1]]], "dim": dims[-1]}), None,
                           {"C_by_dim": by_dim, "C_estimate": c_max}))
    return SemiAntiPshResult(passes, c_max, by_dim, report)


def estimate_lipschitz(f, S, chunk=1024):
    """Largest sampled difference quotient ``|f(z)-f(w)| / ||z-w||``."""
    P, _ = as_points(S)
    if P.shape[0] < 2:
        raise ValueError("need at least two points")
    vals = f.evaluate(P)
    best, any_pair = 0.0, False
    for i in range(0, P.shape[0], chunk):
        dz = np.linalg.norm(P[i:i + chunk, None, :] - P[None, :, :], axis=2)
        dv = np.abs(vals[i:i + chunk, None] - vals[None, :])
        mask = dz > 0
        if np.any(mask):
            any_pair = True
            best = max(best, float(np.max(dv[mask] / dz[mask])))
    if not any_pair:
        raise ValueError("all points coincide")
    return best


def _push_to_boundary(f, V, t, Z, iters=80):
    """Move points toward the boundary of ``V`` while keeping ``f <= t``."""
    Z = Z.copy()
    n = Z.shape[1]
    step = 0.5 * V.inner(Z)
    for _ in range(iters):
        live = step > 1e-14
        if not np.any(live):
            break
        zl = Z[live]
        gd, _ = real_derivatives(ScalarField(V.inner), zl, 1e-7, richardson=False, second=False)
        g = gd[:, :n] + 1j * gd[:, n:]
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        trial = zl - step[live, None] * g
        inside = V.inner(trial) > 0
        ok = inside.copy()
        if np.any(inside):
            ok[inside] = f.evaluate(trial[inside]) <= t
        idx = np.flatnonzero(live)
        Z[idx[ok]] = trial[ok]
        new = step[live]
        dn = V.inner(Z[idx])
        new = np.where(ok, 0.5 * dn, 0.5 * new)
        step[idx] = new
    return Z


def certify_exhaustion(f, V, levels, spec, count=400, n=None, lower_bound=None,
                       floor=None, refine=8, nested_dirs=16, max_proposals=400_000,
                       anchor="exhaustion"):
    """Check that sampled sublevel sets of ``f`` keep a positive distance from the boundary.

    For each level the worst samples are pushed toward the boundary under the
    constraint ``f <= t``; a sublevel set touching the boundary drives the
    margin to (numerically) zero and fails.  For consecutive levels ``s < t``
    the distance from sampled ``V_s`` to the complement of ``V_t`` is also
    estimated by ray casting.  Empty sublevel sets pass vacuously and are
    marked as such.
    """
    n = spec.truncation if n is None else n
    extent = 1.0 if V.extent is None else V.extent
    floor = 1e-6 * extent if floor is None else floor
    report = CertificationReport()
    samples = {}
    for i, t in enumerate(sorted(levels)):
        try:
            S = sample_sublevel(sublevel(f, t, V), count, spec, n=n, stream=40 + i,
                                lower_bound=lower_bound, max_proposals=max_proposals)
        except ThinSublevelError as exc:
            report.add(CheckRecord(f"{anchor}.sublevel_margin", True, 0, 0.0, float("-inf"),
                                   None, spec.seed, {"level": t, "vacuous": True, "note": str(exc)}))
            continue
        samples[t] = S
        if V.is_full_space:
            radius = float(np.max(np.linalg.norm(S, axis=1)))
            report.add(CheckRecord(f"{anchor}.sublevel_margin", bool(np.isfinite(radius)), len(S),
                                   0.0, float("-inf"), None, spec.seed,
                                   {"level": t, "margin": "inf", "sample_radius": radius}))
            continue
        d = V.inner(S)
        margin = float(d.min())
        worst = S[int(np.argmin(d))]
        if refine:
            order = np.argsort(d)[:refine]
            pushed = _push_to_boundary(f, V, t, S[order])
            dp = V.inner(pushed)
            if dp.min() < margin:
                margin = float(dp.min())
                worst = pushed[int(np.argmin(dp))]
        report.add(CheckRecord(f"{anchor}.sublevel_margin", bool(margin >= floor), len(S), 0.0,
                               floor - margin, _loc({"point": worst}), spec.seed,
                               {"level": t, "margin": margin, "floor": floor}))
    keys = sorted(samples)
    for s, t in zip(keys, keys[1:]):
        S = samples[s]
        shell = Domain("sublevel", lambda Z, t=t: np.where(
            V.inner(Z) > 0, t - _safe_eval(f, V, Z), -1.0), min_dim=V.min_dim,
            extent=V.extent)
        pick = S[np.argsort(-f.evaluate(S))[:refine or 8]]
        dirs = sample_directions(S.shape[1], nested_dirs, spec.seed, stream=41)
        gaps = [np.min(exit_radii(shell, z, dirs, step=extent / 128)) for z in pick]
        gap = float(np.min(gaps))
        report.add(CheckRecord(f"{anchor}.nested_margin", bool(gap > floor), len(pick) * nested_dirs,
                               0.0, floor - gap, None, spec.seed,
                               {"inner_level": s, "outer_level": t, "margin": gap}))
    return report


def _safe_eval(f, V, Z):
    out = np.full(Z.shape[0], np.inf)
    inside = V.inner(Z) > 0
    if np.any(inside):
        out[inside] = f.evaluate(Z[inside])
    return out

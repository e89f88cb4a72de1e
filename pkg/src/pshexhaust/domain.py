"""Open sets of truncated sequence space with boundary distances and sublevel sets.

Every domain carries an ``inner`` function that equals the distance to the
boundary at member points and is nonpositive outside, so membership is the
test ``inner > 0``.  Geometry without a closed form falls back to a
ray-casting projection oracle (multi-start search over exit directions).
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_points, check_count, check_positive
from .space_measure import standard_normals


class ThinSublevelError(RuntimeError):
    """Rejection sampling found (almost) no points of the requested sublevel set."""


class Domain:
    def __init__(self, name, inner, *, params=None, min_dim=1, center=None, extent=None,
                 is_full_space=False, pseudoconvex_hint=None):
        self.name = name
        self._inner = inner
        self.params = dict(params or {})
        self.min_dim = min_dim
        self.center = center
        self.extent = extent
        self.is_full_space = is_full_space
        self.pseudoconvex_hint = pseudoconvex_hint

    def __repr__(self):
        return f"Domain({self.name!r}, {self.params})"

    def inner(self, Z):
        """Distance to the boundary for members, a nonpositive number otherwise."""
        Z = np.asarray(Z, dtype=np.complex128)
        if Z.shape[1] < self.min_dim:
            pad = np.zeros((Z.shape[0], self.min_dim), dtype=np.complex128)
            pad[:, :Z.shape[1]] = Z
            Z = pad
        return self._inner(Z)

    def membership(self, z):
        pts, single = as_points(z)
        out = self.inner(pts) > 0
        return bool(out[0]) if single else out

    def boundary_distance(self, z):
        pts, single = as_points(z)
        d = self.inner(pts)
        bad = ~(d > 0)
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise ValueError(f"point {pts[idx].tolist()} is not in {self.name}")
        return float(d[0]) if single else d

    def proposal_scale(self, n):
        """Per-real-coordinate std of the Gaussian proposal for sublevel sampling."""
        extent = 1.0 if self.extent is None else self.extent
        return extent / np.sqrt(2 * n) * 1.2

    def to_dict(self):
        return {"name": self.name, "params": self.params}


def _norms(Z):
    return np.sqrt(np.sum(Z.real ** 2 + Z.imag ** 2, axis=1))


def make_ball(center=(0.0,), radius=1.0):
    """``{||z - center|| < radius}``; missing center coordinates are zero."""
    radius = check_positive(radius, "radius")
    c, _ = as_points(center)
    c = c[0]

    def inner(Z):
        width = max(Z.shape[1], c.size)
        zz = np.zeros((Z.shape[0], width), dtype=np.complex128)
        zz[:, :Z.shape[1]] = Z
        cc = np.zeros(width, dtype=np.complex128)
        cc[:c.size] = c
        return radius - _norms(zz - cc)

    return Domain("ball", inner, params={"center": [[v.real, v.imag] for v in c], "radius": radius},
                  center=c, extent=radius + float(np.linalg.norm(c)), pseudoconvex_hint=True)


def make_polydisc(radii=(1.0, 1.0)):
    """``{|z_i| < r_i}`` on the listed coordinates."""
    radii = np.asarray([check_positive(r, "radius") for r in radii])
    k = radii.size

    def inner(Z):
        if Z.shape[1] < k:
            Z = np.pad(Z, ((0, 0), (0, k - Z.shape[1])))
        # coordinates beyond the listed radii are unconstrained
        return np.min(radii - np.abs(Z[:, :k]), axis=1)

    return Domain("polydisc", inner, params={"radii": radii.tolist()}, min_dim=k,
                  extent=float(np.linalg.norm(radii)), pseudoconvex_hint=True)


def make_halfspace_intersection(normals, offsets):
    """``{z : Re<z, u_k> < b_k for all k}`` with ``<z, u> = sum z_i conj(u_i)``."""
    U, _ = as_points(normals)
    b = np.asarray(offsets, dtype=float).ravel()
    if U.shape[0] != b.size:
        raise ValueError("need one offset per normal")
    lens = _norms(U)
    if np.any(lens == 0):
        raise ValueError("normals must be nonzero")
    U = U / lens[:, None]
    b = b / lens
    k = U.shape[1]

    def inner(Z):
        if Z.shape[1] < k:
            Z = np.pad(Z, ((0, 0), (0, k - Z.shape[1])))
        proj = (Z[:, :k] @ np.conj(U).T).real
        return np.min(b[None, :] - proj, axis=1)

    return Domain("halfspace_intersection", inner,
                  params={"normals": [[[v.real, v.imag] for v in row] for row in U],
                          "offsets": b.tolist()},
                  min_dim=k, extent=None, pseudoconvex_hint=True)


def make_hartogs_wedge(r=1.0):
    """``{|z_1| < |z_2| < r}``, pseudoconvex but not convex."""
    r = check_positive(r, "r")

    def inner(Z):
        a, b = np.abs(Z[:, 0]), np.abs(Z[:, 1])
        # nearest point of the cone |w1| = |w2| keeps both phases
        return np.minimum((b - a) / np.sqrt(2.0), r - b)

    return Domain("hartogs_wedge", inner, params={"r": r}, min_dim=2,
                  extent=r * np.sqrt(2.0), pseudoconvex_hint=True)


def make_full_space():
    """The whole space; its exhaustion is ``1 + ||z||^2``."""
    return Domain("full_space", lambda Z: np.full(Z.shape[0], np.inf), is_full_space=True,
                  extent=None, pseudoconvex_hint=True)


def make_hollowed_ball(outer=1.0, inner_radius=0.5):
    """Ball minus a closed concentric ball; not pseudoconvex once n >= 2."""
    outer = check_positive(outer, "outer")
    inner_radius = check_positive(inner_radius, "inner_radius")
    if inner_radius >= outer:
        raise ValueError("inner_radius must be smaller than outer")

    def inner(Z):
        rho = _norms(Z)
        return np.minimum(outer - rho, rho - inner_radius)

    return Domain("hollowed_ball", inner, params={"outer": outer, "inner_radius": inner_radius},
                  min_dim=2, extent=outer, pseudoconvex_hint=False)


CATALOG = {
    "ball": make_ball,
    "polydisc": make_polydisc,
    "halfspace_intersection": make_halfspace_intersection,
    "hartogs_wedge": make_hartogs_wedge,
    "full_space": make_full_space,
    "hollowed_ball": make_hollowed_ball,
}


def make_domain(name, **params):
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)


def _to_real(z):
    return np.concatenate([z.real, z.imag])


def _to_complex(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def exit_radii(domain, z, directions, step=None, max_radius=None, iters=48):
    """Distance along each unit direction (rows, complex) to the first non-member point.

    Rays are marched in steps of ``step`` and the first crossing is refined by
    bisection; thin excursions shorter than ``step`` can be missed.
    """
    D = np.atleast_2d(np.asarray(directions, dtype=np.complex128))
    extent = 1.0 if domain.extent is None else domain.extent
    step = extent / 64 if step is None else step
    max_radius = 8 * extent + 1.0 if max_radius is None else max_radius
    lo = np.zeros(D.shape[0])
    hi = np.full(D.shape[0], np.inf)
    active = np.ones(D.shape[0], dtype=bool)
    s = 0.0
    while np.any(active) and s < max_radius:
        s += step
        idx = np.flatnonzero(active)
        out = domain.inner(z + s * D[idx]) <= 0
        hi[idx[out]] = s
        lo[idx[~out]] = s
        active[idx[out]] = False
    done = np.isfinite(hi)
    lo_d, hi_d = lo[done], hi[done]
    for _ in range(iters):
        mid = 0.5 * (lo_d + hi_d)
        inside = domain.inner(z + mid[:, None] * D[done]) > 0
        lo_d = np.where(inside, mid, lo_d)
        hi_d = np.where(inside, hi_d, mid)
    hi[done] = hi_d
    return hi


def _refine_direction(domain, z, x, radius, seed, probes=48, sigma=0.25, tol=1e-10):
    """Shrinking random search on the unit sphere for the smallest exit radius near ``x``."""
    m = x.size
    rnd = np.random.default_rng(seed)
    while sigma > tol:
        cand = x + sigma * rnd.standard_normal((probes, m))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        r = exit_radii(domain, z, np.array([_to_complex(c) for c in cand]),
                       step=max(radius, 1e-12) / 16, max_radius=1.5 * radius)
        i = int(np.argmin(r))
        if r[i] < radius:
            x, radius = cand[i], float(r[i])
        else:
            sigma *= 0.5
    return radius


def projection_distance(domain, z, starts=32, seed=0, dense=4096):
    """Numerical boundary distance of a member point by ray casting.

    The distance equals the minimum over unit directions of the first exit
    radius.  Starts are the coordinate axes (both signs, real and imaginary)
    plus Gaussian directions; the best few are refined by a shrinking random
    search, and the result is compared with a dense random-direction scan.
    """
    z = as_points(z)[0][0]
    n = max(z.size, domain.min_dim)
    z = np.pad(z, (0, n - z.size))
    if not domain.membership(z):
        raise ValueError(f"point {z.tolist()} is not in {domain.name}")
    if domain.is_full_space:
        return np.inf
    m = 2 * n
    axes = np.vstack([np.eye(m), -np.eye(m)])
    extra = max(starts - axes.shape[0], 0)
    rand = standard_normals(seed, 7, extra + dense, m)
    cand = np.vstack([axes, rand[:extra]])
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    if dense:
        scan = rand[extra:] / np.linalg.norm(rand[extra:], axis=1, keepdims=True)
        cand = np.vstack([cand, scan])
    radii = exit_radii(domain, z, np.array([_to_complex(x) for x in cand]))
    best = float(np.min(radii))
    for k, idx in enumerate(np.argsort(radii)[:3]):
        best = min(best, _refine_direction(domain, z, cand[idx], float(radii[idx]), seed + k))
    return best


def uniform_inclusion_margin(S, V):
    """Infimum of the boundary distance over the points of ``S``."""
    pts, _ = as_points(S)
    if pts.shape[0] == 0:
        raise ValueError("S must be nonempty")
    d = V.inner(pts)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        listed = [pts[i].tolist() for i in bad[:5]]
        raise ValueError(f"{bad.size} point(s) of S lie outside {V.name}: {listed}")
    return float(np.min(d))


@dataclass(frozen=True)
class SublevelSet:
    field: object
    level: float
    domain: Domain
    open: bool = False

    def contains(self, Z):
        Z = np.asarray(Z, dtype=np.complex128)
        inside = self.domain.inner(Z) > 0
        vals = np.full(Z.shape[0], np.inf)
        if np.any(inside):
            vals[inside] = self.field.evaluate(Z[inside])
        return inside & ((vals < self.level) if self.open else (vals <= self.level))


def sublevel(field, t, V, open=False):
    return SublevelSet(field, float(t), V, open)


def sample_sublevel(sset, count, spec, n=None, stream=20, min_acceptance=1e-4,
                    max_proposals=400_000, lower_bound=None, upper_bound=None):
    """Rejection-sample ``count`` points of a sublevel set.

    Proposals come from an isotropic Gaussian around the domain center, cut
    to the domain, then filtered by the level.  ``lower_bound`` and
    ``upper_bound`` are optional cheap fields bracketing the sublevel field;
    they decide most proposals before the (possibly expensive) field is
    evaluated.  ``lower_bound`` may be a sequence, applied cheapest first.
    """
    check_count(count, "count")
    lowers = () if lower_bound is None else (
        tuple(lower_bound) if isinstance(lower_bound, (list, tuple)) else (lower_bound,))
    n = spec.truncation if n is None else n
    n = max(n, sset.domain.min_dim)
    V = sset.domain
    sigma = V.proposal_scale(n)
    center = np.zeros(n, dtype=np.complex128)
    if V.center is not None:
        center[:min(n, V.center.size)] = V.center[:n]
    accepted = []
    got = proposed = 0
    batch = max(4 * count, 4096)
    block = 0
    while got < count:
        g = standard_normals(spec.seed, stream * 1000 + block, batch, 2 * n)
        block += 1
        Z = center + sigma * (g[:, :n] + 1j * g[:, n:])
        proposed += batch
        Z = Z[V.inner(Z) > 0]
        for lb_field in lowers:
            if not Z.size:
                break
            lb = lb_field.evaluate(Z)
            Z = Z[(lb < sset.level) if sset.open else (lb <= sset.level)]
        if Z.size:
            keep = np.zeros(Z.shape[0], dtype=bool)
            todo = np.ones(Z.shape[0], dtype=bool)
            if upper_bound is not None:
                ub = upper_bound.evaluate(Z)
                keep = (ub < sset.level) if sset.open else (ub <= sset.level)
                todo = ~keep
            if np.any(todo):
                vals = sset.field.evaluate(Z[todo])
                keep[todo] = (vals < sset.level) if sset.open else (vals <= sset.level)
            if np.any(keep):
                accepted.append(Z[keep])
                got += int(keep.sum())
        if got < count and proposed >= max_proposals:
            rate = got / proposed
            if rate < min_acceptance or got == 0:
                raise ThinSublevelError(
                    f"sublevel {{{sset.field.name} <= {sset.level}}} of {V.name} is empty "
                    f"or thin: {got} of {proposed} proposals accepted"
                )
            batch = max(batch, int(2 * (count - got) / max(rate, min_acceptance)))
            max_proposals = proposed + batch * 4
    return np.concatenate(accepted)[:count]

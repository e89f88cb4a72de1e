"""Smooth auxiliary functions, Gaussian mollification and the Lasry-Lions envelope.

Contents:

* the three-piece cutoff ``cutoff(tau, t)``, equal to 1 for ``t <= tau`` and
  0 for ``t >= tau + 1``, and the uniform bound ``K0`` on ``|cutoff'|``;
* the plateau bump ``theta`` and the radial kernel ``vartheta(z) = theta(||z||^2)``;
* ``psi`` with ``psi'' (t) = exp(-1/t)`` for ``t > 0`` and ``psi = 0`` for ``t <= 0``;
* :func:`mollify`, integration of translates against ``vartheta dP`` with a
  frozen, rotation-symmetrized sample set;
* :func:`lasry_lions`, the inf-convolution with ``||z - w||^2 / (2t)``;
* :func:`estimate_modulus`, a subadditive modulus-of-continuity table.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate as sp_integrate
from scipy.optimize import minimize_scalar
from scipy.special import exp1

from ._validation import as_points, check_count, check_positive
from .calculus import sample_directions
from .fields import ScalarField
from .records import CertificationReport, CheckRecord, make_record
from .space_measure import integrate, sample_gaussian, standard_normals


# ---------------------------------------------------------------- cutoff

def _middle(x):
    u = np.exp(1.0 / (x - 1.0))
    return (u - 1.0) * np.exp(-u / x) + 1.0


def _middle_deriv(x):
    u = np.exp(1.0 / (x - 1.0))
    log_scale = 1.0 / (x - 1.0) - u / x - 2 * np.log(x) - 2 * np.log1p(-x)
    return np.exp(log_scale) * (-2 * x ** 2 + x + u * (x ** 2 - x + 1) - 1)


def eval_cutoff(tau, t):
    """1 on ``(-inf, tau]``, 0 on ``[tau+1, inf)``, smooth and decreasing between."""
    t = np.asarray(t, dtype=float)
    x = t - tau
    out = np.where(x <= 0, 1.0, 0.0)
    mid = (x > 0) & (x < 1)
    if np.any(mid):
        out = out.astype(float)
        out[mid] = _middle(x[mid])
    return out if out.ndim else float(out)


def eval_cutoff_deriv(tau, t):
    t = np.asarray(t, dtype=float)
    x = t - tau
    out = np.zeros_like(x, dtype=float)
    mid = (x > 0) & (x < 1)
    if np.any(mid):
        out[mid] = _middle_deriv(x[mid])
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def compute_K0(grid=20001):
    """``max |cutoff'|`` on ``(0, 1)``: dense grid, then golden-section refinement."""
    x = np.linspace(0, 1, grid)[1:-1]
    vals = np.abs(_middle_deriv(x))
    i = int(np.argmax(vals))
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
    res = minimize_scalar(lambda s: -abs(_middle_deriv(s)), bracket=(lo, x[i], hi),
                          method="golden", tol=1e-12)
    return float(max(vals[i], -res.fun))


# ---------------------------------------------------------------- bump and kernel

def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(x):
    """``g(x) / (g(x) + g(1-x))`` with ``g(x) = exp(-1/x)`` for ``x > 0``."""
    a, b = _g(x), _g(1.0 - np.asarray(x, dtype=float))
    return a / (a + b)


def theta(t):
    """Smooth plateau: 1 for ``|t| <= 1/4``, 0 for ``|t| >= 1``."""
    t = np.asarray(t, dtype=float)
    out = smoothstep((1.0 - np.abs(t)) / 0.75)
    return out if out.ndim else float(out)


def vartheta(Z):
    Z = np.asarray(Z, dtype=np.complex128)
    return theta(np.sum(Z.real ** 2 + Z.imag ** 2, axis=-1))


# ---------------------------------------------------------------- psi

def eval_psi(t):
    """``(psi, psi', psi'')`` with ``psi'' = exp(-1/t)``, all vanishing for ``t <= 0``.

    Closed forms via the exponential integral ``E1``:
    ``psi'(t) = t e^{-1/t} - E1(1/t)`` and
    ``psi(t) = (t^2 + t) e^{-1/t} / 2 - (t + 1/2) E1(1/t)``.
    """
    t = np.asarray(t, dtype=float)
    p0 = np.zeros_like(t)
    p1 = np.zeros_like(t)
    p2 = np.zeros_like(t)
    pos = t > 0
    if np.any(pos):
        tp = t[pos]
        e = np.exp(-1.0 / tp)
        E = exp1(1.0 / tp)
        p2[pos] = e
        p1[pos] = tp * e - E
        p0[pos] = 0.5 * (tp * tp + tp) * e - (tp + 0.5) * E
    if t.ndim == 0:
        return float(p0), float(p1), float(p2)
    return p0, p1, p2


def psi(t):
    return eval_psi(t)[0]


def psi_by_quadrature(t):
    """Independent evaluation of ``(psi, psi')`` by adaptive quadrature."""
    if t <= 0:
        return 0.0, 0.0
    w = lambda u: np.exp(-1.0 / u) if u > 0 else 0.0
    p1 = sp_integrate.quad(w, 0, t, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    p0 = sp_integrate.quad(lambda u: (t - u) * w(u), 0, t, epsabs=1e-15, epsrel=1e-13,
                           limit=200)[0]
    return p0, p1


# ---------------------------------------------------------------- kit

@dataclass(frozen=True)
class CutoffKit:
    """Constants shared by the constructions: ``K0`` and ``c = 1 / int vartheta dP``."""

    K0: float
    c: float
    c_std_error: float
    kernel_mass: float

    @classmethod
    def build(cls, spec, budget=1_000_000, stream=60):
        mass, se = integrate(ScalarField(vartheta, name="vartheta"), spec, budget, stream=stream)
        if mass <= 0:
            raise ValueError("kernel has zero mass under the measure")
        return cls(compute_K0(), 1.0 / mass, se / mass ** 2, mass)

    cutoff = staticmethod(eval_cutoff)
    cutoff_deriv = staticmethod(eval_cutoff_deriv)
    psi = staticmethod(eval_psi)

    def to_dict(self):
        return {"K0": self.K0, "c": self.c, "c_std_error": self.c_std_error,
                "kernel_mass": self.kernel_mass}


def localized(eta, tau, domain=None, cutoff_of=None):
    """The field ``cutoff(tau, g(z)) * eta(z)`` on the domain, zero outside.

    ``cutoff_of`` is the field ``g`` driving the cutoff (default ``eta``) and
    must dominate ``eta``.  When it exposes ``bounds(Z, tau)`` returning a
    cheap ``(lower, upper)`` bracket, ``g`` itself is evaluated only where the
    bracket leaves the cutoff undecided.
    """
    g = eta if cutoff_of is None else cutoff_of

    def func(Z):
        out = np.zeros(Z.shape[0])
        inside = np.ones(Z.shape[0], dtype=bool) if domain is None else domain.inner(Z) > 0
        if not np.any(inside):
            return out
        zi = Z[inside]
        e = eta.evaluate(zi)
        if g is eta:
            cut = eval_cutoff(tau, e)
        else:
            cut = np.zeros(zi.shape[0])
            # g >= eta, so g only matters where eta is below the cutoff's upper end
            idx = np.flatnonzero(e < tau + 1)
            if idx.size and hasattr(g, "bounds"):
                lo, hi = g.bounds(zi[idx], tau)
                cut[idx[hi <= tau]] = 1.0
                idx = idx[(hi > tau) & (lo < tau + 1)]
            if idx.size:
                cut[idx] = eval_cutoff(tau, g.evaluate(zi[idx]))
        out[inside] = cut * e
        return out

    return ScalarField(func, provenance="localized", name=f"I[{tau:g}]*{eta.name}")


# ---------------------------------------------------------------- mollifier

@dataclass(frozen=True, eq=False)
class KernelSamples:
    """Frozen draws ``zeta_m`` with their kernel weights."""

    points: np.ndarray
    weights: np.ndarray
    mass: float
    base_count: int
    rotations: int

    @classmethod
    def draw(cls, spec, count=64, rotations=8, stream=50, normalize=True):
        check_count(count, "count")
        check_count(rotations, "rotations")
        base = sample_gaussian(spec, count, stream)
        phases = np.exp(2j * np.pi * np.arange(rotations) / rotations)
        pts = (phases[:, None, None] * base[None, :, :]).reshape(-1, spec.truncation)
        w = vartheta(pts)
        mass = float(np.mean(w))
        keep = w > 0
        pts, w = pts[keep], w[keep]
        w = w / w.sum() if normalize else w / (count * rotations)
        return cls(pts, w, mass, count, rotations)


def mollify(f, eps, spec, count=64, rotations=8, normalize=True, stream=50, samples=None,
            chunk=None):
    """Smooth ``f`` by integrating ``f(z - eps*zeta) vartheta(zeta) dP(zeta)``.

    The sample set is drawn once and frozen (common random numbers) and is
    symmetrized under the common phase rotation ``zeta -> e^{i theta} zeta``,
    which leaves the measure and the kernel invariant.  With ``normalize``
    the weights sum to one, the sample analogue of multiplying by ``c``.
    """
    eps = check_positive(eps, "eps")
    ks = samples if samples is not None else KernelSamples.draw(spec, count, rotations, stream,
                                                                normalize)
    zeta = ks.points
    K, nz = zeta.shape
    chunk = chunk or max(1, 262144 // K)

    def func(Z):
        n = max(Z.shape[1], nz)
        if Z.shape[1] < n:
            Z = np.pad(Z, ((0, 0), (0, n - Z.shape[1])))
        shift = np.zeros((K, n), dtype=np.complex128)
        shift[:, :nz] = eps * zeta
        out = np.empty(Z.shape[0])
        for i in range(0, Z.shape[0], chunk):
            zc = Z[i:i + chunk]
            pts = (zc[:, None, :] - shift[None, :, :]).reshape(-1, n)
            vals = f.evaluate(pts).reshape(zc.shape[0], K)
            out[i:i + chunk] = vals @ ks.weights
        if not np.all(np.isfinite(out)):
            raise ValueError(f"mollified {f.name} is not finite")
        return out

    field_ = ScalarField(func, provenance="mollified", name=f"moll[{eps:g}]({f.name})")
    field_.eps = eps
    field_.samples = ks
    return field_


def certify_mollifier(f, eps, spec, points, lipschitz, mollified=None, slack=0.05,
                      anchor="mollifier.error_bound", **kw):
    """Check ``|f_eps - f| <= eps * r * L * int|c vartheta| dP * (1 + slack)`` with ``r = 1``."""
    P, _ = as_points(points)
    fe = mollified if mollified is not None else mollify(f, eps, spec, **kw)
    err = np.abs(fe.evaluate(P) - f.evaluate(P))
    bound = eps * 1.0 * lipschitz * (1 + slack)
    rec = make_record(anchor, err - bound, 0.0, P, spec.seed, eps=eps, lipschitz=lipschitz,
                      max_error=float(err.max()))
    return CertificationReport([rec]), float(err.max())


# ---------------------------------------------------------------- Lasry-Lions envelope

@dataclass(frozen=True)
class EnvelopeSpec:
    """Parameters of the inner minimization for ``U_t f``.

    Steps of projected gradient descent start at ``t`` and adapt between
    ``1e-16 t`` and ``max_step * t``.
    """

    t: float
    sup_f: float
    search_radius: float = None
    n_starts: int = 16
    max_iter: int = 500
    grad_tol: float = 1e-8
    fd_step: float = 1e-6
    seed: int = 0
    max_step: float = 4.0

    def __post_init__(self):
        check_positive(self.t, "t")
        check_positive(self.sup_f, "sup_f", allow_zero=True)
        need = np.sqrt(4 * self.t * self.sup_f)
        radius = self.search_radius
        if radius is None:
            radius = 1.05 * need + 1e-9
        if radius < need:
            raise ValueError(f"search_radius {radius} below sqrt(4 t sup|f|) = {need}")
        object.__setattr__(self, "search_radius", float(radius))

    @classmethod
    def for_field(cls, f, t, points, **kw):
        """Bound ``sup|f|`` by sampling ``f`` on ``points``."""
        P, _ = as_points(points)
        return cls(t, float(np.max(np.abs(f.evaluate(P)))), **kw)


def _real_grad(f, X, h):
    if f.grad is not None:
        return 2 * np.conj(np.asarray(f.grad(X), dtype=np.complex128))
    N, n = X.shape
    E = np.concatenate([np.eye(n), 1j * np.eye(n)])
    pts = np.concatenate([X[:, None, :] + h * E[None], X[:, None, :] - h * E[None]], axis=1)
    vals = f.evaluate(pts.reshape(-1, n)).reshape(N, 4 * n)
    d = (vals[:, :2 * n] - vals[:, 2 * n:]) / (2 * h)
    return d[:, :n] + 1j * d[:, n:]


@lru_cache(maxsize=64)
def _start_offsets(seed, count, n):
    g = standard_normals(seed, 70, count, 2 * n)
    return g[:, :n] + 1j * g[:, n:]


def minimize_envelope(f, Z, env):
    """Solve ``min_w f(w) + ||z - w||^2 / (2t)`` over ``||w - z|| <= R`` for each row.

    Returns ``(values, minimizers, diagnostics)``.  Every query starts at
    ``z`` itself, so each value is at most ``f(z)``.
    """
    Z = np.asarray(Z, dtype=np.complex128)
    Q, n = Z.shape
    S = env.n_starts
    t, R = env.t, env.search_radius
    X0 = np.repeat(Z[:, None, :], S, axis=1)
    if S > 1:
        X0[:, 1:, :] += _start_offsets(env.seed, S - 1, n) * (R / (2 * np.sqrt(2 * n)))
    X = X0.reshape(-1, n)
    anchor = np.repeat(Z, S, axis=0)

    def project(W):
        d = W - anchor_a
        nr = np.linalg.norm(d, axis=1, keepdims=True)
        scale = np.where(nr > R, R / np.maximum(nr, 1e-300), 1.0)
        return anchor_a + d * scale

    def objective(W, A):
        return f.evaluate(W) + np.sum(np.abs(W - A) ** 2, axis=1) / (2 * t)

    anchor_a = anchor
    X = project(X)
    val = objective(X, anchor)
    step = np.full(X.shape[0], t)
    active = np.ones(X.shape[0], dtype=bool)
    gnorm = np.full(X.shape[0], np.inf)
    iters = 0
    while np.any(active) and iters < env.max_iter:
        iters += 1
        idx = np.flatnonzero(active)
        x, a, s = X[idx], anchor[idx], step[idx]
        grad = _real_grad(f, x, env.fd_step) + (x - a) / t
        anchor_a = a
        trial = project(x - s[:, None] * grad)
        move = trial - x
        tv = objective(trial, a)
        model = val[idx] + np.real(np.sum(np.conj(grad) * move, axis=1)) \
            + np.sum(np.abs(move) ** 2, axis=1) / (2 * s)
        ok = tv <= model + 1e-15 * np.abs(val[idx])
        gm = np.linalg.norm(move, axis=1) / s
        acc = idx[ok]
        X[acc] = trial[ok]
        val[acc] = tv[ok]
        gnorm[acc] = gm[ok]
        step[acc] = np.minimum(s[ok] * 1.5, env.max_step * t)
        step[idx[~ok]] = s[~ok] * 0.5
        done = (ok & (gm <= env.grad_tol)) | (step[idx] < 1e-16 * t)
        active[idx[done]] = False
    anchor_a = anchor
    vals = val.reshape(Q, S)
    best = np.argmin(vals, axis=1)
    rows = np.arange(Q)
    values = vals[rows, best]
    mins = X.reshape(Q, S, n)[rows, best]
    gbest = gnorm.reshape(Q, S)[rows, best]
    gbest = np.where(np.isfinite(gbest), gbest, 0.0)
    diag = {
        "iterations": iters,
        "unconverged": int(np.sum(gbest > env.grad_tol)),
        "max_grad_norm": float(np.max(gbest)) if Q else 0.0,
        # suboptimality of a strongly convex model with modulus 1/(2t)
        "solver_gap": float(np.max(gbest) ** 2 * t) if Q else 0.0,
        "start_spread": float(np.max(vals.max(axis=1) - values)) if Q else 0.0,
    }
    return values, mins, diag


def lasry_lions(f, env, chunk=4096):
    """The envelope ``U_t f(z) = inf_w f(w) + ||z - w||^2 / (2t)`` as a field.

    Values are upper bounds on the true infimum; the last call's solver
    diagnostics are kept on ``field.diagnostics``.
    """

    def func(Z):
        out = np.empty(Z.shape[0])
        diags = []
        for i in range(0, Z.shape[0], chunk):
            v, _, d = minimize_envelope(f, Z[i:i + chunk], env)
            out[i:i + chunk] = v
            diags.append(d)
        if diags:
            field_.diagnostics = {
                "iterations": max(d["iterations"] for d in diags),
                "unconverged": sum(d["unconverged"] for d in diags),
                "max_grad_norm": max(d["max_grad_norm"] for d in diags),
                "solver_gap": max(d["solver_gap"] for d in diags),
            }
        return out

    field_ = ScalarField(func, provenance="envelope", name=f"U[{env.t:g}]({f.name})")
    field_.env = env
    field_.diagnostics = {}
    return field_


# ---------------------------------------------------------------- modulus of continuity

@dataclass
class ModulusTable:
    """Piecewise-linear concave majorant of sampled ``|f(z) - f(w)|`` versus ``||z - w||``."""

    t: np.ndarray
    w: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.t, self.w, left=0.0, right=self.w[-1])
        return out if out.ndim else float(out)


def _concave_majorant(x, y):
    hull = []
    for p in zip(x, y):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) <= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    hx, hy = np.array(hull).T
    return np.interp(x, hx, hy)


def estimate_modulus(f, S, grid=64):
    """Empirical modulus table, made monotone and subadditive (via concavity)."""
    P, _ = as_points(S)
    if P.shape[0] < 2:
        raise ValueError("need at least two points")
    vals = f.evaluate(P)
    iu = np.triu_indices(P.shape[0], 1)
    dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)[iu]
    diff = np.abs(vals[:, None] - vals[None, :])[iu]
    order = np.argsort(dist)
    dist, diff = dist[order], np.maximum.accumulate(diff[order])
    knots = np.unique(np.concatenate([[0.0], np.quantile(dist, np.linspace(0, 1, grid))]))
    raw = np.concatenate([[0.0], diff[np.searchsorted(dist, knots[1:], side="right") - 1]])
    w = _concave_majorant(knots, raw)
    w = np.maximum.accumulate(np.maximum(w, raw))
    return ModulusTable(knots, w)


# ---------------------------------------------------------------- envelope certificates

def certify_envelope(f, env, points, pairs=None, circles=None, modulus=None, gap_floor=1e-9,
                     radii=(0.05, 0.01), m=64, anchor="envelope"):
    """Sandwich, Lipschitz-quotient and anti-plurisubharmonicity checks for ``U_t f``."""
    from .calculus import circle_means

    P, _ = as_points(points)
    U = lasry_lions(f, env)
    report = CertificationReport()
    u = U.evaluate(P)
    gap = max(U.diagnostics.get("solver_gap", 0.0), gap_floor)
    fv = f.evaluate(P)
    w = modulus if modulus is not None else estimate_modulus(f, P)
    lower = fv - w(2 * np.sqrt(env.t * env.sup_f))
    report.add(make_record(f"{anchor}.sandwich_upper", u - fv, gap, P, env.seed))
    report.add(make_record(f"{anchor}.sandwich_lower", lower - u, gap, P, env.seed))
    if pairs is not None:
        Zp, Wp = pairs
        uz, uw = U.evaluate(Zp), U.evaluate(Wp)
        dist = np.linalg.norm(Zp - Wp, axis=1)
        q = np.abs(uz - uw) / dist
        bound = (4 * np.sqrt(env.t * env.sup_f) + dist) / (2 * env.t)
        report.add(make_record(f"{anchor}.lipschitz_quotient", q - bound, 2 * gap / dist.min(),
                               Zp, env.seed))
    if circles is not None:
        A, B = circles
        g = ScalarField(lambda Z: U.evaluate(Z) - np.sum(np.abs(Z) ** 2, axis=1) / (2 * env.t))
        g0 = g.evaluate(A)
        viol = []
        for r in radii:
            viol.append(circle_means(g, A, B, r, m) - g0)
        viol = np.max(np.array(viol), axis=0)
        report.add(make_record(f"{anchor}.anti_psh_circle_mean", viol,
                               2 * max(U.diagnostics.get("solver_gap", 0.0), gap_floor), A,
                               env.seed, radii=list(radii)))
    return report

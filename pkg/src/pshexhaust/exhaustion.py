"""Constructive exhaustion pipelines.

* :func:`lipschitz_exhaustion` is ``||z||^2 - ln d(z) + c0`` (``1 + ||z||^2`` on
  the full space).
* :func:`smooth_exhaustion` is a locally finite series of mollified cutoffs of
  a Lipschitz exhaustion.
* :func:`semi_anti_psh_exhaustion` has the same series shape built from
  Lasry-Lions envelopes.  It is evaluated lazily, so the series is exact.
* :func:`psh_exhaustion` weights regularized copies of the Lipschitz
  exhaustion against sampled Hessian infima.

Every "for all z" inside a construction becomes a sampled check.  The chosen
constants and the margins that justified them are kept on a
:class:`PipelineState`.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_points
from .calculus import (_loc, _safe_eval, certify_psh, certify_semi_anti_psh, estimate_lipschitz,
                       mixed_hessians, real_derivatives, sample_directions)
from .domain import Domain, ThinSublevelError, sample_sublevel, sublevel
from .fields import ScalarField, norm_sq_field
from .records import CertificationReport, CheckRecord, _plain, make_record
from .regularize import (CutoffKit, EnvelopeSpec, eval_cutoff, eval_psi, localized,
                         minimize_envelope, mollify)
from .space_measure import GaussianSpec, standard_normals

SAFETY = 2.0
STAGES = ("lipschitz_eta", "smooth_Psi", "semi_anti_Psi", "psh_eta")
PSI1, DPSI1, _ = eval_psi(1.0)
MIN_EPS = 1e-12


class PipelineAbort(RuntimeError):
    """A construction step failed a sampled check; ``point`` is the offending point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = None if point is None else np.asarray(point)


class DomainResolutionError(PipelineAbort):
    """The mollification radius would have to drop below ``MIN_EPS``."""


@dataclass(frozen=True)
class PipelineState:
    """Constants chosen by a pipeline and the checks that validated them.

    ``handles`` keeps the live fields (for :func:`lambda_of`) and is left out
    of serialization.
    """

    stage: str
    c0: float = 0.0
    truncation_K: int = 0
    lipschitz_table: dict = field(default_factory=dict)
    eps_seq: dict = field(default_factory=dict)
    lambda_table: dict = field(default_factory=dict)
    t_seq: dict = field(default_factory=dict)
    alpha_seq: dict = field(default_factory=dict)
    s_seq: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    handles: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")

    def to_dict(self):
        keys = ("stage", "c0", "truncation_K", "lipschitz_table", "eps_seq", "lambda_table",
                "t_seq", "alpha_seq", "s_seq", "extra")
        return {k: _plain(getattr(self, k)) for k in keys}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k != "handles"})


class ConstructedField(ScalarField):
    """A series field ``sum_j term_j`` together with its pipeline state.

    ``base`` is the Lipschitz exhaustion the series dominates.  The series
    agrees with its infinite version on ``{base <= exact_level}``.
    """

    def __init__(self, terms, state, base, domain, exact_level, name, lower_terms=None):
        self.terms = list(terms)
        self.state = state
        self.base = base
        self.domain = domain
        self.exact_level = exact_level
        self.K = state.truncation_K or len(self.terms)
        self._lower_terms = lower_terms
        super().__init__(self._sum(self.terms[:self.K]), provenance=state.stage, name=name)

    def _sum(self, terms):
        V = self.domain

        def func(Z):
            inside = V.inner(Z) > 0
            out = np.full(Z.shape[0], np.inf)
            zi = Z[inside]
            acc = np.zeros(zi.shape[0])
            for term in terms:
                acc += term.evaluate(zi)
            out[inside] = acc
            return out

        return func

    def partial(self, k):
        """The sum of the first ``k`` terms."""
        if not 0 <= k <= len(self.terms):
            raise ValueError(f"only {len(self.terms)} terms were built, asked for {k}")
        return ScalarField(self._sum(self.terms[:k]), provenance=self.provenance,
                           name=f"{self.name}[:{k}]")

    def exhaustion_view(self):
        """``max(series, base)``: equal to the full series on the exact region and a
        lower bound for it elsewhere, so its sublevel sets contain the full series'."""
        series, base = self, self.base

        def func(Z):
            return np.maximum(series.evaluate(Z), base.evaluate(Z))

        view = ScalarField(func, provenance=self.provenance, name=f"max({self.name},base)")
        lower = self._lower_view()
        view.lower_bound = [base] if lower is None else [base, lower]
        return view

    def _lower_view(self):
        if self._lower_terms is None:
            return None
        low = self._sum(self._lower_terms[:self.K])
        base = self.base
        return ScalarField(lambda Z: np.maximum(low(Z), base.evaluate(Z)), name="lower")


# ---------------------------------------------------------------- Lipschitz exhaustion

def lipschitz_exhaustion(V, c0=0.0):
    """``||z||^2 - ln d(z) + c0`` on ``V`` (``+inf`` outside); ``1 + ||z||^2`` on the full space."""
    c0 = float(c0)
    if V.is_full_space:
        f = ScalarField(lambda Z: 1.0 + np.sum(np.abs(Z) ** 2, axis=1), name="1+|z|^2",
                        provenance="lipschitz")
    else:
        def func(Z):
            d = V.inner(Z)
            out = np.full(Z.shape[0], np.inf)
            ok = d > 0
            out[ok] = np.sum(np.abs(Z[ok]) ** 2, axis=1) - np.log(d[ok]) + c0
            return out

        f = ScalarField(func, name=f"|z|^2-ln d+{c0:g}", provenance="lipschitz")
    f.domain = V
    f.c0 = c0
    f.lipschitz_bound = lambda S: lipschitz_bound(V, S)
    return f


def lipschitz_bound(V, S):
    """Gradient bound ``1/min d + 2 max ||z||`` of the Lipschitz exhaustion on points ``S``."""
    P, _ = as_points(S)
    radius = float(np.max(np.linalg.norm(P, axis=1)))
    if V.is_full_space:
        return 2 * radius
    d = V.boundary_distance(P)
    return float(1.0 / np.min(d) + 2 * radius)


def _proposals(V, spec, n, count, stream):
    sigma = V.proposal_scale(n)
    center = np.zeros(n, dtype=np.complex128)
    if V.center is not None:
        center[:min(n, V.center.size)] = V.center[:n]
    g = standard_normals(spec.seed, stream, count, 2 * n)
    Z = center + sigma * (g[:, :n] + 1j * g[:, n:])
    return Z[V.inner(Z) > 0]


def sampled_inf_log_term(V, spec, n=None, count=20_000, stream=90):
    """Sampled infimum of ``||z||^2 - ln d`` over ``V``."""
    n = _dim(V, spec, n)
    Z = _proposals(V, spec, n, count, stream)
    if Z.shape[0] == 0:
        raise ValueError(f"no proposals landed in {V.name}")
    return float(np.min(np.sum(np.abs(Z) ** 2, axis=1) - np.log(V.inner(Z))))


def choose_c0(V, spec, n=None, **kw):
    """Shift making the Lipschitz exhaustion at least 2 on the samples."""
    if V.is_full_space:
        return 0.0
    return max(0.0, 1.0 - sampled_inf_log_term(V, spec, n, **kw)) + 1.0


def _dim(V, spec, n):
    return max(spec.truncation if n is None else int(n), V.min_dim)


# ---------------------------------------------------------------- sampled geometry

def _sublevel_samples(f, V, level, spec, count, stream, n, lower=None, upper=None,
                      max_proposals=200_000):
    try:
        return sample_sublevel(sublevel(f, level, V), count, spec, n=n, stream=stream,
                               lower_bound=lower, upper_bound=upper,
                               max_proposals=max_proposals)
    except ThinSublevelError:
        return np.empty((0, n), dtype=np.complex128)


def _screened(f, V, X, level):
    """Values of ``f`` that decide ``f <= level`` correctly, exact only where needed.

    With a ``bounds`` bracket, points whose upper bound is at most ``level``
    get that upper bound.  Points whose lower bound exceeds ``level`` get
    the lower bound.  So ``level - value`` never overstates a margin, and
    its sign is always right.
    """
    if not hasattr(f, "bounds"):
        return _safe_eval(f, V, X)
    out = np.full(X.shape[0], np.inf)
    inside = V.inner(X) > 0
    if not inside.any():
        return out
    lo, hi = f.bounds(X[inside])
    vals = np.where(hi <= level, hi, lo)
    und = (hi > level) & (lo <= level)
    if und.any():
        vals[und] = f.evaluate(X[inside][und])
    out[inside] = vals
    return out


def _unit_gradient(f, Z, h=1e-7):
    g, _ = real_derivatives(f, Z, h, richardson=False, second=False)
    n = Z.shape[1]
    v = g[:, :n] + 1j * g[:, n:]
    norm = np.linalg.norm(v, axis=1)
    return v / np.maximum(norm, 1e-300)[:, None], norm


def _level_points(f, V, Z, level, guide, iters=32):
    """Move each point along the gradient of ``guide`` to where ``f`` first exceeds ``level``.

    Returned points satisfy ``f <= level`` and lie within ``2**-iters`` of the
    crossing (relative to the bracket).
    """
    if Z.shape[0] == 0:
        return Z
    Z = Z[_screened(f, V, Z, level) <= level]
    if Z.shape[0] == 0:
        return Z
    u, _ = _unit_gradient(guide, Z)
    extent = 1.0 if V.extent is None else V.extent
    lo = np.zeros(Z.shape[0])
    hi = np.full(Z.shape[0], 1e-3 * extent)
    below = np.ones(Z.shape[0], dtype=bool)
    for _ in range(60):
        below = _screened(f, V, Z + hi[:, None] * u, level) <= level
        if not below.any():
            break
        lo = np.where(below, hi, lo)
        hi = np.where(below, 2 * hi, hi)
    keep = ~below
    Z, u, lo, hi = Z[keep], u[keep], lo[keep], hi[keep]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = _screened(f, V, Z + mid[:, None] * u, level) <= level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return Z + lo[:, None] * u


def _top(f, Z, k):
    if Z.shape[0] <= k:
        return Z
    return Z[np.argsort(-f.evaluate(Z), kind="stable")[:k]]


def _ball_margin(f, V, centers, upper, eps, directions, guide):
    """Smallest ``upper - f`` over sampled points of the closed balls ``B(center, eps)``."""
    if centers.shape[0] == 0:
        return float("inf"), None
    g, _ = _unit_gradient(guide, centers)
    D = np.concatenate([np.broadcast_to(directions, (centers.shape[0],) + directions.shape),
                        g[:, None, :]], axis=1)
    pts = np.concatenate([centers[:, None, :] + eps * D, centers[:, None, :] + 0.5 * eps * D],
                         axis=1).reshape(-1, centers.shape[1])
    margin = upper - _screened(f, V, pts, upper)
    idx = int(np.argmin(margin))
    return float(margin[idx]), pts[idx]


def select_eps(f, V, start, checks, directions, guide, min_eps=MIN_EPS, max_halvings=None):
    """Halve ``eps`` from ``start`` until every ``B(z, eps)`` with ``z`` in a check's
    centers lies in ``{f < upper}``.

    ``checks`` is a list of ``(centers, upper, label)``.  Returns
    ``(eps, halvings, margins)``.
    """
    eps, halvings = float(start), 0
    while True:
        if eps < min_eps or (max_halvings is not None and halvings > max_halvings):
            raise DomainResolutionError(
                f"domain resolution exceeded: mollification radius fell to {eps:g} after "
                f"{halvings} halvings", worst)
        margins, ok, worst = {}, True, None
        for centers, upper, label in checks:
            m, where = _ball_margin(f, V, centers, upper, eps, directions, guide)
            margins[label] = {"centers": int(centers.shape[0]), "margin": m}
            if not m > 0:
                ok, worst = False, where
        if ok:
            return eps, halvings, margins
        eps *= 0.5
        halvings += 1


def _lipschitz_estimate(f, P, h=1e-7):
    """Largest of the sampled gradient norm and pairwise difference quotient."""
    if P.shape[0] == 0:
        return 0.0
    _, gn = _unit_gradient(f, P, h)
    est = float(np.max(gn))
    if P.shape[0] >= 2:
        est = max(est, estimate_lipschitz(f, P[:512]))
    return est


# ---------------------------------------------------------------- smooth exhaustion

def _psi_term(inner, weight, shift):
    def func(Z):
        return weight * eval_psi(inner.evaluate(Z) + shift)[0]

    return ScalarField(func, provenance="series-term", name=f"{weight:g}*psi({inner.name}+{shift:g})")


def smooth_exhaustion(V, kit, spec, max_level=4, safety=SAFETY, eta=None, c0=None,
                      samples=300, boundary_samples=24, mollifier_count=16, rotations=8,
                      n_directions=12, extra_terms=2, eps_halvings=None, n=None):
    """Smooth exhaustion from mollified cutoffs of a Lipschitz exhaustion.

    Term ``j`` is ``w_j psi(eta_j + C_j eps_j + 2 - j)`` where
    ``eta_j = mollify(cutoff(j+1, eta) eta, eps_j)``, ``C_j`` is the safety
    scaled Lipschitz estimate of ``eta`` on ``{eta <= j + 1/2}``, and
    ``w_j = sup_{eta <= j} eta / psi(1)``.  The returned field keeps
    ``max_level + 2`` terms and is exact on ``{eta <= max_level}``.
    """
    if V.is_full_space:
        raise ValueError("the full space needs no construction: use ||z||^2 directly")
    n = _dim(V, spec, n)
    if eta is None:
        c0 = _smooth_c0(V, spec, n) if c0 is None else c0
        eta = lipschitz_exhaustion(V, c0)
    c0 = getattr(eta, "c0", c0)
    K = max_level + 2
    dirs = sample_directions(n, n_directions, spec.seed, stream=31)
    terms, lip, eps_seq, weights = [], {}, {}, {}
    for j in range(1, K + extra_terms + 1):
        S_half = _sublevel_samples(eta, V, j + 0.5, spec, samples, 100 + j, n)
        rim = _level_points(eta, V, _top(eta, S_half, boundary_samples), j + 0.5, eta)
        C = max(j + 0.5, safety * _lipschitz_estimate(eta, np.concatenate([S_half, rim])))
        lip[j + 0.5] = C
        S_j = S_half[eta.evaluate(S_half) <= j] if S_half.size else S_half
        checks = [(_level_points(eta, V, _top(eta, S_j, boundary_samples), j, eta), j + 0.5,
                   f"B(V_{j},eps) in V_{j}.5")]
        S_j2 = _sublevel_samples(eta, V, j + 2, spec, boundary_samples, 150 + j, n)
        checks.append((_level_points(eta, V, _top(eta, S_j2, boundary_samples), j + 2, eta),
                       j + 3, f"B(V_{j + 2},eps) in V_{j + 3}"))
        eps, halvings, margins = select_eps(eta, V, 0.99 / (2 * C), checks, dirs, eta,
                                           max_halvings=eps_halvings)
        eps_seq[j] = {"eps": eps, "halvings": halvings, "bound": 1 / (2 * C), "checks": margins}
        weight = float(j) if S_j.shape[0] else 0.0
        weights[j] = weight / PSI1
        smoothed = mollify(localized(eta, j + 1, V), eps, spec, mollifier_count, rotations,
                           stream=200 + j)
        term = _psi_term(smoothed, weight / PSI1, C * eps + 2 - j)
        term.smoothed, term.shift = smoothed, C * eps
        terms.append(term)
    state = PipelineState("smooth_Psi", c0=c0, truncation_K=K, lipschitz_table=lip,
                          eps_seq=eps_seq,
                          extra={"weights": weights, "safety": safety, "kit": kit.to_dict(),
                                 "mollifier": {"count": mollifier_count, "rotations": rotations},
                                 "exact_level": max_level},
                          handles={"eta": eta, "domain": V, "spec": spec, "n": n})
    return ConstructedField(terms, state, eta, V, max_level, "smooth_exhaustion")


def _smooth_c0(V, spec, n):
    # the smooth series only needs a nonnegative exhaustion; a small margin keeps low levels nonempty
    return max(0.0, -sampled_inf_log_term(V, spec, n)) + 0.1


# ---------------------------------------------------------------- semi-anti-psh exhaustion

@dataclass(frozen=True)
class TermParams:
    """Envelope parameters of one series term.

    ``t`` is the envelope time and ``L``, ``kappa`` are safety-scaled sampled
    Lipschitz and Hessian-norm bounds of the localized field.  ``delta``
    bounds ``f - U_t f`` from above.
    """

    t: float
    L: float
    kappa: float
    delta: float
    t_bisect: float
    halvings: int
    sample_count: int
    sandwich_margin: float
    fd_step: float = 1e-6


class SemiAntiPshField(ScalarField):
    """``sum_j (j / psi(1)) psi(U_{t_j}(f_j) + 3 - j)`` with ``f_j = cutoff(j, eta) eta``.

    Evaluated exactly.  Terms with ``eta <= j - 3`` vanish.  Terms with
    ``eta >= j + 1`` are the constants ``(j / psi(1)) psi(3 - j)``, because
    ``f_j`` vanishes there and is nonnegative.  So only the terms with
    ``eta`` in ``(j - 3, j + 1)`` need an envelope solve.  Term parameters
    are chosen on first use and cached.
    """

    def __init__(self, eta, V, spec, n, safety=SAFETY, samples=256, n_starts=1,
                 delta_target=0.02, max_terms=60, max_halvings=60):
        self.eta, self.domain, self.spec, self.n = eta, V, spec, n
        self.safety, self.samples, self.n_starts = safety, samples, n_starts
        self.delta_target, self.max_terms, self.max_halvings = delta_target, max_terms, max_halvings
        self._params, self._local = {}, {}
        self.solver_gap = 0.0
        super().__init__(lambda Z: self._series(Z, "exact"), provenance="semi_anti_Psi",
                         name="semi_anti_exhaustion")
        self.upper = ScalarField(lambda Z: self._series(Z, "high"), name="semi_anti_upper")
        self.lower = ScalarField(lambda Z: self._series(Z, "low"), name="semi_anti_lower")
        self.base = eta

    @staticmethod
    def coefficient(j):
        return j / PSI1

    def local(self, j):
        if j not in self._local:
            self._local[j] = localized(self.eta, j, self.domain)
        return self._local[j]

    def _eta(self, Z):
        return _safe_eval(self.eta, self.domain, Z)

    def _series(self, Z, mode, e=None):
        """The series with ``U f_j`` replaced according to ``mode``.

        ``"exact"`` solves the envelope, ``"high"`` uses ``f_j``, ``"low"``
        uses ``f_j - delta_target`` and ``"both"`` returns the low and high
        sums from one pass.
        """
        e = self._eta(Z) if e is None else e
        both = mode == "both"
        out = np.zeros(Z.shape[0])
        inside = np.isfinite(e)
        out[~inside] = np.inf
        low = out.copy() if both else None
        if not inside.any():
            return (low, out) if both else out
        for j in (1, 2):
            const = self.coefficient(j) * eval_psi(3.0 - j)[0]
            m = inside & (e >= j + 1)
            out[m] += const
            if both:
                low[m] += const
        jmax = int(np.floor(np.max(e[inside]))) + 3
        if mode == "exact" and jmax > self.max_terms:
            raise PipelineAbort(f"series needs term {jmax} beyond max_terms={self.max_terms}",
                                Z[int(np.argmax(np.where(inside, e, -np.inf)))])
        for j in range(1, jmax + 1):
            m = inside & (e < j + 1) & (e > j - 3)
            if not m.any():
                continue
            f = eval_cutoff(j, e[m]) * e[m]
            c = self.coefficient(j)
            if mode == "high":
                u = f
            elif mode == "low":
                # every chosen t_j obeys t_j L_j^2 / 2 <= delta_target
                u = f - self.delta_target
            elif both:
                low[m] += c * eval_psi(f - self.delta_target + 3.0 - j)[0]
                u = f
            else:
                u = self.envelope(j, Z[m])
            out[m] += c * eval_psi(u + 3.0 - j)[0]
        return (low, out) if both else out

    def bounds(self, Z, tau=None):
        """Cheap ``(lower, upper)`` bracket, from ``f_j - delta <= U f_j <= f_j``."""
        return self._series(Z, "both")

    def envelope(self, j, X):
        p = self.params(j)
        if p.t is None:
            return np.zeros(X.shape[0])
        # value error is about t * |gradient mapping|^2, so stop once that is below 1e-14
        tol = max(1e-8, math.sqrt(2e-14 / p.t))
        # t kappa <= 1/4 makes the inner problem strongly convex with condition <= 5/3,
        # so the natural step t is near optimal
        env = EnvelopeSpec(p.t, float(j + 1), n_starts=self.n_starts, max_iter=500, seed=j,
                           grad_tol=tol, fd_step=p.fd_step, max_step=1.0)
        vals, _, diag = minimize_envelope(self.local(j), X, env)
        self.solver_gap = max(self.solver_gap, diag["solver_gap"])
        return vals

    def params(self, j):
        if j not in self._params:
            self._params[j] = self._choose_params(j)
        return self._params[j]

    def _choose_params(self, j):
        V, eta, n = self.domain, self.eta, self.n
        f = self.local(j)
        S = _sublevel_samples(eta, V, j + 1, self.spec, self.samples, 300 + j, n)
        if S.shape[0] == 0:
            # f_j vanishes on every sampled point, so its envelope is 0
            return TermParams(None, 0.0, 0.0, 0.0, None, 0, 0, 0.0)
        rims = [_level_points(eta, V, _top(eta, S, 24), j + s, eta) for s in (0.0, 0.25, 0.5, 0.75)]
        P = np.concatenate([S] + rims)
        d_min = float(np.min(V.inner(P)))
        fd = float(np.clip(1e-4 * d_min, 1e-12, 1e-7))
        _, gn = _unit_gradient(f, P, fd)
        L = self.safety * max(float(gn.max()), estimate_lipschitz(f, P[:512]))
        h = float(np.clip(1e-3 * d_min, 1e-7, 1e-4))
        H = real_derivatives(f, P[np.argsort(-gn)[:128]], h, richardson=True)[1]
        kappa = self.safety * float(np.max(np.abs(np.linalg.eigvalsh(H))))
        T = P[np.argsort(-gn)[:64]]
        fT = f.evaluate(T)

        def margin(t):
            env = EnvelopeSpec(t, float(j + 1), n_starts=self.n_starts, max_iter=300, seed=j,
                               grad_tol=max(1e-8, math.sqrt(1e-10 / t)), fd_step=fd)
            u, _, _ = minimize_envelope(f, T, env)
            return float(np.min(u - (fT - 1.0)))

        t, halvings = 1.0, 0
        while margin(t) <= 1e-9:
            t *= 0.5
            halvings += 1
            if halvings > self.max_halvings:
                raise PipelineAbort(f"envelope time for term {j} not found after "
                                    f"{self.max_halvings} halvings", T[0])
        if halvings:
            lo, hi = t, 2 * t
            for _ in range(8):
                mid = math.sqrt(lo * hi)
                lo, hi = (mid, hi) if margin(mid) > 1e-9 else (lo, mid)
            t = lo
        t_bisect = t
        caps = [t_bisect]
        if kappa > 0:
            caps.append(0.25 / kappa)
        if L > 0:
            caps.append(2 * self.delta_target / L ** 2)
        t = min(caps)
        delta = min(1.0, t * L * L / 2)
        return TermParams(t, L, kappa, delta, t_bisect, halvings, int(P.shape[0]), margin(t), fd)

    def partial(self, k):
        """Exact sum of the first ``k`` terms."""
        full = self

        def func(Z):
            e = full._eta(Z)
            out = np.zeros(Z.shape[0])
            inside = np.isfinite(e)
            out[~inside] = np.inf
            for j in range(1, k + 1):
                m = inside & (e > j - 3)
                if not m.any():
                    continue
                u = np.zeros(m.sum())
                live = e[m] < j + 1
                if live.any():
                    u[live] = full.envelope(j, Z[m][live])
                out[m] += full.coefficient(j) * eval_psi(u + 3.0 - j)[0]
            return out

        return ScalarField(func, provenance=self.provenance, name=f"{self.name}[:{k}]")

    def exhaustion_view(self):
        view = ScalarField(self.func, provenance=self.provenance, name=self.name)
        view.lower_bound = [self.lower]
        return view

    def state(self):
        return PipelineState(
            "semi_anti_Psi", c0=getattr(self.eta, "c0", 0.0),
            t_seq={j: p.t for j, p in sorted(self._params.items())},
            extra={"terms": {j: _params_dict(p) for j, p in sorted(self._params.items())},
                   "safety": self.safety, "delta_target": self.delta_target,
                   "n_starts": self.n_starts, "solver_gap": self.solver_gap},
            handles={"eta": self.eta, "domain": self.domain, "spec": self.spec, "n": self.n})


def _params_dict(p):
    return {"t": p.t, "L": p.L, "kappa": p.kappa, "delta": p.delta, "t_bisect": p.t_bisect,
            "halvings": p.halvings, "sample_count": p.sample_count,
            "sandwich_margin": p.sandwich_margin, "fd_step": p.fd_step}


def semi_anti_psh_exhaustion(V, kit, spec, eta=None, c0=None, safety=SAFETY, samples=256,
                             n_starts=1, delta_target=0.02, max_terms=60, prepare_levels=None,
                             max_halvings=60, n=None):
    """Lipschitz semi-anti-psh exhaustion ``sum_j (j/psi(1)) psi(U_{t_j}(f_j) + 3 - j)``.

    ``prepare_levels`` chooses the parameters of terms ``1..prepare_levels``
    up front (the rest are chosen on first use).
    """
    n = _dim(V, spec, n)
    if eta is None:
        c0 = choose_c0(V, spec, n) if c0 is None else c0
        eta = lipschitz_exhaustion(V, c0)
    field_ = SemiAntiPshField(eta, V, spec, n, safety, samples, n_starts, delta_target, max_terms,
                              max_halvings)
    for j in range(1, (prepare_levels or 0) + 1):
        field_.params(j)
    field_.kit = kit
    return field_


# ---------------------------------------------------------------- psh exhaustion

def lambda_value(rho, Psi, V, t, spec, n, count=200, stream=400, rim=16):
    """``1 + max(t, sup Psi)`` over samples and boundary points of ``{rho <= t}``."""
    S = _sublevel_samples(rho, V, t, spec, count, stream, n)
    if S.shape[0] == 0:
        return t + 1.0, 0
    B = _level_points(rho, V, _top(rho, S, rim), t, rho)
    P = np.concatenate([S, B])
    return 1.0 + max(t, float(np.max(Psi.evaluate(P)))), int(P.shape[0])


def lambda_of(state, t):
    """The level function at ``t``, recomputed from the live fields on ``state``.

    Clipped below by the tabulated values at smaller arguments so the result
    is increasing in ``t``.
    """
    h = state.handles
    if "rho" not in h or "Psi" not in h:
        raise ValueError("state holds no live fields; rebuild the pipeline")
    value, _ = lambda_value(h["rho"], h["Psi"], h["domain"], float(t), h["spec"], h["n"],
                            stream=400 + int(1000 * t) % 997)
    below = [v for s, v in state.lambda_table.items() if float(s) < t]
    if below:
        value = max(value, max(below) + 1e-9)
    return value


def _rho_smoothed(rho, Psi, V, tau, eps, spec, count, rotations, stream):
    """``mollify(cutoff(tau, Psi) rho, eps) + eps ||z||^2`` with cheap bracketing copies."""
    exact = mollify(localized(rho, tau, V, cutoff_of=Psi), eps, spec, count, rotations,
                    stream=stream)
    ks = exact.samples
    hi = mollify(localized(rho, tau, V, cutoff_of=Psi.lower), eps, spec, samples=ks)
    lo = mollify(localized(rho, tau, V, cutoff_of=Psi.upper), eps, spec, samples=ks)

    def with_quadratic(m):
        return lambda Z: m.evaluate(Z) + eps * np.sum(np.abs(Z) ** 2, axis=1)

    out = ScalarField(with_quadratic(exact), provenance="psh-regularized",
                      name=f"rho[{tau:g},{eps:.3g}]")
    out.upper = ScalarField(with_quadratic(hi), name="upper")
    out.lower = ScalarField(with_quadratic(lo), name="lower")
    out.mollified, out.eps = exact, eps
    return out


def _psh_term(rho_j, alpha, j):
    """``alpha psi(rho_j + 2 - j)``, skipping the exact regularization where its upper
    bracket already makes the term vanish."""

    def func(Z):
        out = np.zeros(Z.shape[0])
        if j >= 3:
            live = rho_j.upper.evaluate(Z) + 2 - j > 0
        else:
            live = np.ones(Z.shape[0], dtype=bool)
        if live.any():
            out[live] = alpha * eval_psi(rho_j.evaluate(Z[live]) + 2.0 - j)[0]
        return out

    def lower(Z):
        return alpha * eval_psi(rho_j.lower.evaluate(Z) + 2.0 - j)[0]

    term = ScalarField(func, provenance="series-term", name=f"{alpha:.4g}*psi(rho_{j}+{2 - j})")
    term.lower = ScalarField(lower, name="lower")
    return term


def _plateau_circle_check(f, g, V, P, D, radii, level, seed, anchor, m=32, tol=1e-3):
    """Sub-mean-value check of ``f`` on circles whose nodes all satisfy ``g <= level``.

    The smoothed terms are only psh where their cutoff is identically one, so
    circles reaching into the cutoff window are dropped rather than tested.
    """
    A = np.repeat(P, D.shape[0], axis=0)
    B = np.tile(D, (P.shape[0], 1))
    f0 = np.repeat(f.evaluate(P), D.shape[0])
    worst, loc, used = float("-inf"), None, 0
    theta = np.exp(2j * np.pi * np.arange(m) / m)
    for r in radii:
        nodes = A[:, None, :] + r * theta[None, :, None] * B[:, None, :]
        flat = nodes.reshape(-1, P.shape[1])
        inside = V.inner(flat) > 0
        gv = np.full(flat.shape[0], np.inf)
        gv[inside] = g.evaluate(flat[inside])
        ok = np.all((gv <= level).reshape(A.shape[0], m), axis=1)
        if not np.any(ok):
            continue
        means = f.evaluate(flat.reshape(A.shape[0], m, -1)[ok].reshape(-1, P.shape[1]))
        defect = f0[ok] - means.reshape(-1, m).mean(axis=1)
        used += int(ok.sum())
        i = int(np.argmax(defect))
        if defect[i] > worst:
            worst = float(defect[i])
            loc = {"point": A[ok][i], "direction": B[ok][i], "radius": r}
    return CheckRecord(anchor, bool(worst <= tol), used, tol, worst, _loc(loc), seed,
                       {"radii": list(radii), "nodes": m, "level": level})


def _psi_sublevel(Psi, V, level, spec, count, stream, n):
    return _sublevel_samples(Psi, V, level, spec, count, stream, n, lower=Psi.lower,
                             upper=Psi.upper)


def psh_exhaustion(V, kit, spec, max_level=4, safety=SAFETY, samples=160, rim=16,
                   mollifier_count=4, rotations=8, n_directions=12, shell_samples=120,
                   semi_anti=None, c0=None, n_starts=1, delta_target=0.02, dims=None,
                   check_tol=1e-9, step2_points=40, eps_halvings=None, t_halvings=60, n=None):
    """Smooth plurisubharmonic exhaustion, following four steps.

    1. Take ``rho = ||z||^2 - ln d + c0`` and the semi-anti-psh series ``Psi``.
       Tabulate the levels ``lambda(j)``.  Choose ``eps_j`` and build
       ``rho_j = mollify(cutoff(lambda(j)+1, Psi) rho, eps_j) + eps_j ||z||^2``.
    2. Estimate the Hessian upper bounds of ``-rho_j``.
    3. Check ``rho <= rho_j <= rho + 1`` on ``{Psi <= lambda(j)}`` and abort on
       a violation.
    4. Sum ``alpha_j psi(rho_j + 2 - j)``, with each weight large enough to
       beat the sampled Hessian infimum of the partial sum on the next shell.

    The returned field keeps ``max_level + 2`` terms and is exact on
    ``{rho <= max_level}``.
    """
    n = _dim(V, spec, n)
    if V.is_full_space:
        f = norm_sq_field()
        state = PipelineState("psh_eta", truncation_K=1, extra={"note": "full space: ||z||^2"})
        return ConstructedField([f], state, f, V, math.inf, "norm_sq")
    dims = list(range(1, n + 1)) if dims is None else sorted(dims)
    if semi_anti is None:
        c0 = choose_c0(V, spec, n) if c0 is None else c0
        rho = lipschitz_exhaustion(V, c0)
        Psi = semi_anti_psh_exhaustion(V, kit, spec, eta=rho, n=n, safety=safety,
                                       n_starts=n_starts, delta_target=delta_target,
                                       max_halvings=t_halvings)
    else:
        Psi, rho = semi_anti, semi_anti.eta
        c0 = getattr(rho, "c0", 0.0)
    K = max_level + 2
    dirs = sample_directions(n, n_directions, spec.seed, stream=32)
    nsq = norm_sq_field()

    # Step 1: levels and regularized copies
    lam, lam_counts = {}, {}
    for j in range(1, K + 1):
        value, count = lambda_value(rho, Psi, V, float(j), spec, n, stream=400 + j)
        if j > 1:
            value = max(value, lam[j - 1] + 1e-9)
        lam[j], lam_counts[j] = value, count
    lip, eps_seq, rho_js, region = {}, {}, {}, {}
    checks = []
    for j in range(1, K + 1):
        a = lam[j]
        SA = _psi_sublevel(Psi, V, a, spec, samples, 500 + j, n)
        BA = _level_points(Psi, V, _top(rho, SA, rim), a, rho)
        BH = _level_points(Psi, V, _top(rho, SA, rim), a + 0.5, rho)
        P = np.concatenate([SA, BA, BH])
        C = max(a + 0.5, safety * (float(np.max(_unit_gradient(rho, P)[1])) if P.size else 0.0))
        lip[a + 0.5] = C
        zmax = float(np.max(np.sum(np.abs(np.concatenate([SA, BA])) ** 2, axis=1))) if SA.size else 0.0
        bound = 1.0 / (1.0 + zmax + C)
        tests = [(BA, a + 0.5, f"B(Psi<={a:.6g},eps) in Psi<{a + 0.5:.6g}")]
        for off in (2, 4):
            S_off = _psi_sublevel(Psi, V, a + off, spec, rim, 550 + 10 * j + off, n)
            tests.append((_level_points(Psi, V, _top(rho, S_off, rim), a + off, rho), a + off + 1,
                          f"B(Psi<={a + off:.6g},eps) in Psi<{a + off + 1:.6g}"))
        eps, halvings, margins = select_eps(Psi, V, 0.99 * bound, tests, dirs, rho,
                                           max_halvings=eps_halvings)
        eps_seq[j] = {"eps": eps, "halvings": halvings, "bound": bound, "checks": margins}
        rho_j = _rho_smoothed(rho, Psi, V, a + 1, eps, spec, mollifier_count, rotations,
                              stream=600 + j)
        rho_js[j] = rho_j
        region[j] = np.concatenate([SA, BA])

        # Step 3: sandwich and psh-ness of the mollified part
        R = region[j]
        if R.shape[0]:
            r, rj = rho.evaluate(R), rho_j.evaluate(R)
            tol = check_tol * (1 + np.abs(r))
            low_v, up_v = r - rj - tol, rj - r - 1 - tol
            for name, v in (("lower", low_v), ("upper", up_v)):
                rec = make_record(f"psh_pipeline.step3_sandwich_{name}", v, 0.0, R, spec.seed,
                                  level=j)
                checks.append(rec)
                if not rec.passed:
                    raise PipelineAbort(f"sandwich ({name}) violated for term {j} by "
                                        f"{rec.worst_violation:.3g}", R[int(np.argmax(v))])
            checks.append(_plateau_circle_check(
                rho_j.mollified, Psi.upper, V, R[:48], dirs[:4], (1e-2, 1e-3, 1e-4), a, spec.seed,
                f"psh_pipeline.step3_mollified_psh[{j}].circle_mean"))

    # Lipschitz bound of Psi on its top sublevel, for distances to the truncation edge
    edge = _level_points(Psi, V, _top(rho, region[K], rim), lam[K], rho)
    probe = np.concatenate([region[K], edge])
    psi_lip = safety * float(np.max(_unit_gradient(Psi, probe, 1e-7)[1])) if probe.size else 0.0

    # Step 2: Hessian upper bounds of -rho_j on the top region
    top = region[K][:step2_points]
    C_jk = {}
    if top.shape[0]:
        for j in range(1, K + 1):
            res = certify_semi_anti_psh(-rho_js[j], V, top, dims=dims,
                                        anchor=f"psh_pipeline.step2_semi_anti[{j}]")
            C_jk[j] = {"C": res.C_estimate, "by_dim": res.by_dim}

    # Step 4: weights
    def sup_rho(k):
        R = region[k]
        if R.shape[0] == 0:
            return lam[k], "level"
        return min(lam[k], safety * float(np.max(rho.evaluate(R)))), "sampled"

    alpha, s_seq, s_detail, terms = {}, {}, {}, []
    sup1, how = sup_rho(1)
    alpha[1] = sup1 / PSI1
    terms.append(_psh_term(rho_js[1], alpha[1], 1))
    for k in range(1, K):
        eta_k = ScalarField(_sum_terms(terms), name=f"eta_{k}")
        Q = _shell_points(Psi, rho, V, lam, k, rho_js, spec, n, shell_samples, rim)
        if Q.shape[0]:
            H = mixed_hessians(eta_k, Q, local_steps(Psi, V, Q))
            by_dim = {d: float(np.min(np.linalg.eigvalsh(H[:, :d, :d])[:, 0])) for d in dims}
            s_k = min(by_dim.values())
        else:
            by_dim, s_k = {}, 0.0
        s_seq[k] = s_k
        s_detail[k] = {"by_dim": by_dim, "points": int(Q.shape[0])}
        eps_next = eps_seq[k + 1]["eps"]
        sup_next, _ = sup_rho(k + 1)
        alpha[k + 1] = max(safety * max(0.0, -s_k) / (eps_next * DPSI1), sup_next / PSI1)
        terms.append(_psh_term(rho_js[k + 1], alpha[k + 1], k + 1))

    state = PipelineState(
        "psh_eta", c0=c0, truncation_K=K, lipschitz_table=lip, eps_seq=eps_seq,
        lambda_table=lam, t_seq={j: p.t for j, p in sorted(Psi._params.items())},
        alpha_seq=alpha, s_seq=s_seq,
        extra={"s_detail": s_detail, "C_jk": C_jk, "lambda_samples": lam_counts,
               "checks": [r.to_dict() for r in checks], "safety": safety,
               "psi_lipschitz": psi_lip,
               "kit": kit.to_dict(), "exact_level": max_level,
               "mollifier": {"count": mollifier_count, "rotations": rotations},
               "semi_anti": Psi.state().extra},
        handles={"rho": rho, "Psi": Psi, "domain": V, "spec": spec, "n": n,
                 "rho_j": rho_js, "region": region})
    out = ConstructedField(terms, state, rho, V, max_level, "psh_exhaustion",
                           lower_terms=[t.lower for t in terms])
    out.checks = checks
    return out


def local_steps(Psi, V, Q, cap=1e-4, frac=0.02, floor=1e-8):
    """Finite-difference steps resolving the cutoff windows of the series.

    The windows have width about ``1 / |grad Psi|``, so the step is a small
    fraction of that.  Steps are rounded down to powers of two so that
    nearby points share a stencil size.
    """
    _, gn = _unit_gradient(Psi, Q, 1e-7)
    h = np.minimum(cap, frac / np.maximum(gn, 1e-300))
    h = np.minimum(h, 0.1 * V.inner(Q))
    h = np.maximum(h, floor)
    return 2.0 ** np.floor(np.log2(h))


def level_of_base(Psi, top, step=1e-4):
    """Largest ``r`` with ``upper(Psi) < top`` wherever the base field is below ``r``.

    The upper bracket of the semi-anti series depends on the point only
    through the base field, so this is a scan of a scalar function.
    """
    r_max = 8.0
    while True:
        grid = np.arange(0.0, r_max, step)
        g = Psi._series(np.zeros((grid.size, 1)), "high", grid)
        hit = np.flatnonzero(g >= top)
        if hit.size:
            return float(grid[hit[0]] - step)
        if r_max > 4 * Psi.max_terms:
            raise ValueError(f"upper bracket stays below {top} on [0, {r_max}]")
        r_max *= 2


def psh_region(F, spec=None):
    """An open subset of ``{Psi < lambda(K)}``, where the truncated field is psh.

    It is ``{rho < r*}``, with ``r*`` from :func:`level_of_base`.  ``inner``
    lower-bounds the distance to its boundary by ``(r* - rho) / L``.  Here
    ``L = exp(r* - c0) + 2 R`` bounds ``|grad rho|`` on the set, because
    ``d >= exp(c0 - r*)`` there, and ``R`` is the safety-scaled sampled radius.
    """
    st = F.state
    V = F.domain
    if V.is_full_space:
        return V
    h = st.handles
    Psi, rho = h["Psi"], h["rho"]
    r_star = level_of_base(Psi, st.lambda_table[st.truncation_K])
    spec = spec or h["spec"]
    S = _sublevel_samples(rho, V, r_star, spec, 400, 810, h["n"])
    radius = st.extra["safety"] * float(np.max(np.linalg.norm(S, axis=1))) if S.size else 0.0
    L = math.exp(r_star - rho.c0) + 2 * radius

    def inner(Z):
        out = V.inner(Z)
        ok = out > 0
        if ok.any():
            out[ok] = np.minimum(out[ok], (r_star - rho.evaluate(Z[ok])) / L)
        return out

    region = Domain(f"psh_region({V.name})", inner, min_dim=V.min_dim, center=V.center,
                    extent=V.extent, params={"base_level": r_star, "lipschitz": L})
    return region


def certification_points(F, count, spec, stream=800, n=None):
    """Samples of the region where the truncated series is exact."""
    V = F.domain
    n = _dim(V, spec, n)
    if V.is_full_space:
        return _sublevel_samples(F.base, V, 4.0, spec, count, stream, n)
    return _sublevel_samples(F.base, V, F.exact_level, spec, count, stream, n)


def certify_constructed_psh(F, points, tol=1e-3, radii=(1e-2, 1e-3), m=16,
                            n_directions=8, dims=None, seed=0, anchor="psh_exhaustion.final"):
    """Plurisubharmonicity of a constructed field inside its psh region.

    Circles must stay in :func:`psh_region`.  Hessians use :func:`local_steps`.
    Violations are measured relative to ``max(1, |F|)``, because the series
    weights reach magnitudes where an absolute tolerance is below rounding.
    """
    P, _ = as_points(points)
    V = F.domain
    if V.is_full_space:
        return certify_psh(F, None, P, radii=radii, tol=tol, dims=dims, m=m,
                           n_directions=n_directions, seed=seed, anchor=anchor)
    R = psh_region(F)
    P = P[R.inner(P) > 0]
    h = local_steps(F.state.handles["Psi"], R, P)
    return certify_psh(F, R, P, radii=radii, tol=tol, dims=dims, m=m, h=h,
                       n_directions=n_directions, seed=seed, relative=True, anchor=anchor)


def _sum_terms(terms):
    def func(Z):
        acc = np.zeros(Z.shape[0])
        for t in terms:
            acc += t.evaluate(Z)
        return acc

    return func


def _shell_points(Psi, rho, V, lam, k, rho_js, spec, n, count, rim):
    """Samples of ``lambda(k) < Psi <= lambda(k+1)`` plus points straddling the cutoff
    window of term ``k``, where its Hessian is least controlled."""
    lo, hi = lam[k], lam[k + 1]
    S = _psi_sublevel(Psi, V, hi, spec, count, 700 + k, n)
    if S.shape[0]:
        S = S[Psi.evaluate(S) > lo]
    eps = rho_js[k].eps
    extra = []
    for s, frac in enumerate((1.25, 1.5, 1.75)):
        base = _psi_sublevel(Psi, V, lo + frac, spec, rim, 750 + 10 * k + s, n)
        B = _level_points(Psi, V, _top(rho, base, max(rim // 2, 4)), lo + frac, rho)
        if B.shape[0] == 0:
            continue
        u, _ = _unit_gradient(rho, B)
        for off in (-1.0, -0.5, 0.0, 0.5, 1.0):
            extra.append(B + off * eps * u)
    P = np.concatenate([S] + extra) if extra else S
    return P[V.inner(P) > 0] if P.size else P


# ---------------------------------------------------------------- sampled invariants

def _rel(x):
    return np.maximum(1.0, np.abs(x))


def check_sandwich(F, points, tol=1e-9):
    """Each smoothed term stays within its Lipschitz allowance of the base field.

    Smooth series, on ``{eta <= j}``: ``eta <= eta_j + C eps <= eta + 2 C eps``.
    Psh series, on ``{upper(Psi) <= lambda(j)}``: ``rho <= rho_j <= rho + 1``.
    """
    P, _ = as_points(points)
    report = CertificationReport()
    base = F.base.evaluate(P)
    st = F.state
    if st.stage == "smooth_Psi":
        for j, term in enumerate(F.terms, 1):
            m = base <= j
            Q, e = P[m], base[m]
            ej = term.smoothed.evaluate(Q) if Q.size else e
            report.add(make_record("smooth_exhaustion.sandwich_lower",
                                   (e - ej - term.shift) / _rel(e), tol, Q, term=j,
                                   shift=term.shift))
            report.add(make_record("smooth_exhaustion.sandwich_upper",
                                   (ej - e - term.shift) / _rel(e), tol, Q, term=j,
                                   allowance=2 * term.shift))
        return report
    if st.stage != "psh_eta":
        raise ValueError(f"no sandwich for stage {st.stage}")
    if F.domain.is_full_space:
        return report
    Psi, rho_js = st.handles["Psi"], st.handles["rho_j"]
    upper = Psi.upper.evaluate(P)
    for j, rj in sorted(rho_js.items()):
        m = upper <= st.lambda_table[j]
        Q, e = P[m], base[m]
        v = rj.evaluate(Q) if Q.size else e
        report.add(make_record("psh_exhaustion.step3_lower", (e - v) / _rel(e), tol, Q, term=j))
        report.add(make_record("psh_exhaustion.step3_upper", (v - e - 1) / _rel(e), tol, Q, term=j))
    return report


def check_domination(F, points, tol=1e-9):
    """The constructed field dominates its base field on the exact region."""
    P, _ = as_points(points)
    e = F.base.evaluate(P)
    v = F.evaluate(P)
    return CertificationReport([make_record(f"{F.name}.domination", (e - v) / _rel(e), tol, P,
                                            stage=F.state.stage)])


def check_truncation(F, points):
    """On ``{base <= k}`` every term after ``k + 2`` vanishes, so partial sums agree."""
    P, _ = as_points(points)
    e = F.base.evaluate(P)
    report = CertificationReport()
    K = len(F.terms)
    for k in range(1, int(min(F.exact_level, K - 3)) + 1):
        Q = P[e <= k]
        tail = np.zeros(Q.shape[0])
        for term in F.terms[k + 2:]:
            if Q.size:
                tail = np.maximum(tail, np.abs(term.evaluate(Q)))
        report.add(make_record(f"{F.name}.truncation_exact", tail, 0.0, Q, level=k,
                               terms_checked=K - k - 2))
    return report


def check_semi_anti(Psi, points, tol=0.0):
    """Positivity of the semi-anti series and domination of its base, per annulus."""
    P, _ = as_points(points)
    v = Psi.evaluate(P)
    e = Psi.eta.evaluate(P)
    report = CertificationReport()
    report.add(make_record("semi_anti_psh.positivity", -v, -np.finfo(float).tiny, P))
    ring = np.maximum(0, np.ceil(e)).astype(int)
    for i in np.unique(ring):
        m = ring == i
        report.add(make_record("semi_anti_psh.annular_domination", (e[m] - v[m]) / _rel(e[m]),
                               tol, P[m], annulus=int(i)))
    return report


def dimension_stability(result, rel_tol=0.2):
    """``|C(n') - C(n_max)| <= rel_tol * |C(n_max)|`` across a dimension sweep."""
    by_dim = result.by_dim
    top = by_dim[max(by_dim)]
    dev = {k: abs(v - top) / max(abs(top), 1e-300) for k, v in by_dim.items()}
    worst = max(dev, key=dev.get)
    return CheckRecord("semi_anti_psh.dimension_stability", bool(dev[worst] <= rel_tol),
                       len(by_dim), rel_tol, dev[worst], {"dim": worst}, None,
                       {"C_by_dim": by_dim})


# ---------------------------------------------------------------- estimators

class _PipelineEstimator(BaseEstimator):
    """``fit(domain)`` runs the construction; ``predict(Z)`` evaluates the field."""

    def _spec(self):
        return self.spec if self.spec is not None else GaussianSpec.default()

    def _kit(self, spec):
        return self.kit if self.kit is not None else CutoffKit.build(spec)

    def predict(self, Z):
        check_is_fitted(self, "field_")
        pts, _ = as_points(Z)
        return self.field_.evaluate(pts)

    def _finish(self, field_, state):
        self.field_ = field_
        self.state_ = state
        return self


class LipschitzExhaustion(_PipelineEstimator):
    def __init__(self, c0=None, spec=None):
        self.c0 = c0
        self.spec = spec

    def fit(self, X, y=None):
        spec = self._spec()
        c0 = choose_c0(X, spec) if self.c0 is None else self.c0
        f = lipschitz_exhaustion(X, c0)
        return self._finish(f, PipelineState("lipschitz_eta", c0=c0))


class SmoothExhaustion(_PipelineEstimator):
    def __init__(self, max_level=4, safety=SAFETY, mollifier_count=16, rotations=8,
                 spec=None, kit=None):
        self.max_level = max_level
        self.safety = safety
        self.mollifier_count = mollifier_count
        self.rotations = rotations
        self.spec = spec
        self.kit = kit

    def fit(self, X, y=None):
        spec = self._spec()
        f = smooth_exhaustion(X, self._kit(spec), spec, self.max_level, self.safety,
                              mollifier_count=self.mollifier_count, rotations=self.rotations)
        return self._finish(f, f.state)


class SemiAntiPshExhaustion(_PipelineEstimator):
    def __init__(self, safety=SAFETY, n_starts=1, delta_target=0.02, prepare_levels=4,
                 spec=None, kit=None):
        self.safety = safety
        self.n_starts = n_starts
        self.delta_target = delta_target
        self.prepare_levels = prepare_levels
        self.spec = spec
        self.kit = kit

    def fit(self, X, y=None):
        spec = self._spec()
        f = semi_anti_psh_exhaustion(X, self._kit(spec), spec, safety=self.safety,
                                     n_starts=self.n_starts, delta_target=self.delta_target,
                                     prepare_levels=self.prepare_levels)
        return self._finish(f, f.state())


class PshExhaustion(_PipelineEstimator):
    def __init__(self, max_level=4, safety=SAFETY, mollifier_count=4, rotations=8,
                 spec=None, kit=None):
        self.max_level = max_level
        self.safety = safety
        self.mollifier_count = mollifier_count
        self.rotations = rotations
        self.spec = spec
        self.kit = kit

    def fit(self, X, y=None):
        spec = self._spec()
        f = psh_exhaustion(X, self._kit(spec), spec, self.max_level, self.safety,
                           mollifier_count=self.mollifier_count, rotations=self.rotations)
        return self._finish(f, f.state)


PIPELINES = {
    "lipschitz": LipschitzExhaustion,
    "smooth": SmoothExhaustion,
    "semi_anti_psh": SemiAntiPshExhaustion,
    "psh": PshExhaustion,
}

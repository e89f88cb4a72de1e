"""Truncated sequence-space vectors and the anisotropic Gaussian product measure.

The measure puts independent centered normals with variance ``a_i**2`` on the
real and imaginary part of coordinate ``i``.  Sampling is driven by a
counter-based generator (Philox) split into fixed-size blocks; block ``b`` of
stream ``s`` is generated from its own jumped key, so any shard of blocks can
be produced independently and the concatenation never depends on order.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_points, check_count, check_finite
from .fields import ScalarField
from .records import CertificationReport, CheckRecord

BLOCK = 1 << 14


@dataclass(frozen=True, eq=False)
class CVec:
    """A point of truncated sequence space; trailing zeros are immaterial."""

    entries: tuple
    ambient_dim: int = None

    def __post_init__(self):
        entries = tuple(complex(e) for e in self.entries)
        dim = self.ambient_dim if self.ambient_dim is not None else len(entries)
        if dim < 1 or len(entries) > dim:
            raise ValueError(f"entries of length {len(entries)} exceed ambient_dim {dim}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "ambient_dim", int(dim))

    def to_array(self, n=None):
        n = self.ambient_dim if n is None else n
        out = np.zeros(max(n, len(self.entries)), dtype=np.complex128)
        out[:len(self.entries)] = self.entries
        return out

    def _trimmed(self):
        e = list(self.entries)
        while e and e[-1] == 0:
            e.pop()
        return tuple(e)

    def __eq__(self, other):
        if not isinstance(other, CVec):
            return NotImplemented
        return self._trimmed() == other._trimmed()

    def __hash__(self):
        return hash(self._trimmed())

    def norm(self):
        return norm(self)


def norm(v):
    """Euclidean norm of a point (or row-wise norms of a point array)."""
    pts, single = as_points(v)
    out = np.sqrt(np.sum(pts.real ** 2 + pts.imag ** 2, axis=1))
    return float(out[0]) if single else out


def default_weights(n):
    return tuple(2.0 ** -(i + 1) for i in range(1, n + 1))


@dataclass(frozen=True)
class GaussianSpec:
    """Weights ``a_1..a_n`` (sum < 1), truncation, seed and default budget."""

    weights: tuple = field(default_factory=lambda: default_weights(6))
    seed: int = 0
    sample_budget: int = 200_000

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        if not w:
            raise ValueError("at least one weight is required")
        if any(not np.isfinite(a) or a <= 0 for a in w):
            raise ValueError(f"weights must be positive, got {w}")
        if sum(w) >= 1:
            raise ValueError(
                f"weights must satisfy sum(a_i) < 1 (standing hypothesis on the "
                f"Gaussian product measure); got sum = {sum(w)!r}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "seed", int(self.seed) & (2 ** 64 - 1))
        check_count(self.sample_budget, "sample_budget")

    @classmethod
    def default(cls, n=6, seed=0, sample_budget=200_000):
        return cls(default_weights(n), seed, sample_budget)

    @property
    def truncation(self):
        return len(self.weights)

    @property
    def scales(self):
        return np.asarray(self.weights)

    def with_seed(self, seed):
        return GaussianSpec(self.weights, seed, self.sample_budget)

    def truncated(self, n):
        return GaussianSpec(self.weights[:n], self.seed, self.sample_budget)

    def to_dict(self):
        return {"weights": list(self.weights), "seed": self.seed,
                "sample_budget": self.sample_budget}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["weights"]), d.get("seed", 0), d.get("sample_budget", 200_000))


def block_generator(seed, stream, block):
    """Generator for one block of one stream; independent of every other block."""
    bitgen = np.random.Philox(key=[seed, stream & (2 ** 64 - 1)])
    if block:
        bitgen = bitgen.jumped(block)
    return np.random.Generator(bitgen)


def standard_normals(seed, stream, count, width):
    """``count`` rows of ``width`` iid N(0,1) values, assembled block by block."""
    rows = []
    for b in range(-(-count // BLOCK)):
        take = min(BLOCK, count - b * BLOCK)
        rows.append(block_generator(seed, stream, b).standard_normal((BLOCK, width))[:take])
    return np.concatenate(rows) if rows else np.empty((0, width))


def sample_gaussian(spec, count, stream=0):
    """``count`` samples of the product measure, shape ``(count, n)``."""
    check_count(count, "count")
    n = spec.truncation
    g = standard_normals(spec.seed, stream, count, 2 * n)
    return spec.scales * (g[:, :n] + 1j * g[:, n:])


def integrate(f, spec, count=None, stream=0, chunk=65536):
    """Monte-Carlo estimate of the integral of ``f`` and its standard error."""
    count = spec.sample_budget if count is None else check_count(count, "count")
    values = np.empty(count)
    for start in range(0, count, chunk):
        length = min(chunk, count - start)
        pts = _sample_slice(spec, stream, start, length)
        vals = np.asarray(f.evaluate(pts) if isinstance(f, ScalarField) else f(pts), float)
        check_finite(vals, pts)
        values[start:start + length] = vals
    mean = float(np.mean(values))
    if count < 2:
        return mean, float("inf")
    return mean, float(np.std(values, ddof=1) / np.sqrt(count))


def _sample_slice(spec, stream, start, length):
    """Rows ``start:start+length`` of the stream without materializing the prefix."""
    n = spec.truncation
    out = []
    b0, b1 = start // BLOCK, (start + length - 1) // BLOCK
    for b in range(b0, b1 + 1):
        g = block_generator(spec.seed, stream, b).standard_normal((BLOCK, 2 * n))
        lo = max(start, b * BLOCK) - b * BLOCK
        hi = min(start + length, (b + 1) * BLOCK) - b * BLOCK
        out.append(g[lo:hi])
    g = np.concatenate(out)
    return spec.scales * (g[:, :n] + 1j * g[:, n:])


def project_fn(f, n, spec, count=None, stream=1):
    """Average ``f`` over the tail coordinates ``n+1..N``.

    The tail sample set is drawn once and frozen, so the returned field is a
    deterministic function of the first ``n`` coordinates.
    """
    if not 0 <= n < spec.truncation:
        raise ValueError(f"n must lie in [0, {spec.truncation}), got {n}")
    count = min(spec.sample_budget, 20_000) if count is None else count
    tail = sample_gaussian(spec, count, stream)[:, n:]
    N = spec.truncation

    def projected(Z):
        Z = np.asarray(Z, dtype=np.complex128)
        head = np.zeros((Z.shape[0], n), dtype=np.complex128)
        head[:, :min(n, Z.shape[1])] = Z[:, :n]
        out = np.empty(Z.shape[0])
        for i, zh in enumerate(head):
            pts = np.empty((count, N), dtype=np.complex128)
            pts[:, :n] = zh
            pts[:, n:] = tail
            out[i] = np.mean(f.evaluate(pts))
        return out

    return ScalarField(projected, provenance=f"projected-{n}", name=f"proj{n}({f.name})")


def rotate(points, thetas):
    """Multiply coordinate ``i`` by ``exp(1j*thetas[i])`` (missing angles are 0)."""
    angles = np.zeros(points.shape[1])
    k = min(len(thetas), points.shape[1])
    angles[:k] = np.asarray(thetas, float)[:k]
    return points * np.exp(1j * angles)


def check_rotation_invariance(f, thetas, spec, count=None, n_sigma=3.0, anchor="measure.rotation_invariance"):
    """Compare the integral of ``f`` with that of ``f`` after a diagonal rotation.

    The two integrals use independent sample streams; the check passes when
    their difference is within ``n_sigma`` combined standard errors.
    """
    count = spec.sample_budget if count is None else count
    plain, se0 = integrate(f, spec, count, stream=10)
    rotated_field = ScalarField(lambda Z: f.evaluate(rotate(Z, thetas)))
    turned, se1 = integrate(rotated_field, spec, count, stream=11)
    diff = abs(plain - turned)
    combined = float(np.hypot(se0, se1))
    tol = n_sigma * combined + 1e-12
    rep = CertificationReport()
    rep.add(CheckRecord(anchor, bool(diff <= tol), 2 * count, tol, diff,
                        [float(t) for t in thetas], spec.seed,
                        {"integral": plain, "rotated_integral": turned, "combined_se": combined}))
    return rep

"""Real-valued fields on truncated complex sequence space."""

import numpy as np

from ._validation import as_points


class ScalarField:
    """A vectorized real function of complex points.

    ``func`` receives a complex array of shape ``(count, width)`` and must
    return ``count`` reals.  Fields treat missing trailing coordinates as
    zeros, so ``func`` should accept any width.

    Optional ``grad`` returns the Wirtinger derivatives ``d_j f`` (complex,
    same shape as the input) and ``hessian`` returns the mixed matrices
    ``d_i dbar_j f`` with shape ``(count, width, width)``.
    """

    def __init__(self, func, *, grad=None, hessian=None, provenance="raw", name=None):
        self.func = func
        self.grad = grad
        self.hessian = hessian
        self.provenance = provenance
        self.name = name or getattr(func, "__name__", "field")

    def __call__(self, z):
        pts, single = as_points(z)
        out = np.asarray(self.func(pts), dtype=float).reshape(pts.shape[0])
        return float(out[0]) if single else out

    def evaluate(self, points, chunk=65536):
        """Evaluate on a 2-D point array in bounded-memory chunks."""
        points = np.asarray(points, dtype=np.complex128)
        if points.shape[0] <= chunk:
            return np.asarray(self.func(points), dtype=float).reshape(points.shape[0])
        parts = [
            np.asarray(self.func(points[i:i + chunk]), dtype=float).reshape(-1)
            for i in range(0, points.shape[0], chunk)
        ]
        return np.concatenate(parts)

    def __repr__(self):
        return f"ScalarField({self.name!r}, provenance={self.provenance!r})"

    # light algebra, enough to build test fields like -f or 2f + g
    def __neg__(self):
        return self._combine(lambda Z: -self.func(Z), "neg")

    def __mul__(self, scale):
        scale = float(scale)
        return self._combine(lambda Z: scale * np.asarray(self.func(Z)), f"{scale}*")

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return self._combine(lambda Z: np.asarray(self.func(Z)) + other.func(Z), "sum")
        shift = float(other)
        return self._combine(lambda Z: np.asarray(self.func(Z)) + shift, "shift")

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, ScalarField) else -float(other))

    def _combine(self, func, tag):
        return ScalarField(func, provenance=self.provenance, name=f"{tag}({self.name})")


def norm_sq_field():
    """The field ||z||^2 with its closed-form derivatives."""

    def grad(Z):
        return np.conj(Z)

    def hess(Z):
        return np.broadcast_to(np.eye(Z.shape[1], dtype=complex), (Z.shape[0],) + (Z.shape[1],) * 2).copy()

    return ScalarField(
        lambda Z: np.sum(np.abs(Z) ** 2, axis=1), grad=grad, hessian=hess, name="norm_sq"
    )


def constant_field(value):
    value = float(value)
    return ScalarField(lambda Z: np.full(Z.shape[0], value), name=f"const({value})")

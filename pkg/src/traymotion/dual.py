"""Forward-mode automatic differentiation on dual scalars.

All dynamics and constraint kernels in this package are written against
plain arithmetic plus the math helpers below (`sin`, `cos`, ...), so a
single implementation serves both ordinary evaluation (floats or numpy
arrays) and exact derivative evaluation (``Dual``).

A ``Dual`` carries a value of arbitrary batch shape ``S`` together with a
tangent array of shape ``S + (W,)`` where ``W`` is the seed width.  Seeding
a batch of points and evaluating a kernel once therefore yields the values
and the full per-point Jacobian blocks in a single vectorized pass.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _col(v):
    """Append a trailing axis so a value broadcasts against a tangent."""
    return v[..., None] if isinstance(v, np.ndarray) else v


class Dual:
    """First-order dual scalar with a vector tangent.

    The value channel reproduces plain floating-point arithmetic exactly:
    evaluating a function with duals gives bitwise the same values as
    evaluating it with the raw numbers.
    """

    __slots__ = ("value", "deriv")

    # Make ndarray <op> Dual defer to the reflected Dual methods instead of
    # producing object arrays.
    __array_ufunc__ = None

    def __init__(self, value, deriv):
        self.value = value
        self.deriv = deriv

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.deriv * _col(other.value) + other.deriv * _col(self.value),
            )
        return Dual(self.value * other, self.deriv * _col(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, (self.deriv - other.deriv * _col(q)) / _col(other.value))
        return Dual(self.value / other, self.deriv / _col(other))

    def __rtruediv__(self, other):
        q = other / self.value
        return Dual(q, self.deriv * _col(-q / self.value))

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            raise TypeError("dual-valued exponents are not supported")
        v = self.value**exponent
        return Dual(v, self.deriv * _col(exponent * self.value ** (exponent - 1)))


def value_of(x):
    """Value channel of a scalar, dual or plain."""
    return x.value if isinstance(x, Dual) else x


def sin(x):
    if isinstance(x, Dual):
        return Dual(np.sin(x.value), x.deriv * _col(np.cos(x.value)))
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(np.cos(x.value), x.deriv * _col(-np.sin(x.value)))
    return np.cos(x)


def tan(x):
    if isinstance(x, Dual):
        c = np.cos(x.value)
        return Dual(np.tan(x.value), x.deriv / _col(c * c))
    return np.tan(x)


def sqrt(x):
    """Square root; a negative argument propagates as NaN, never masked."""
    if isinstance(x, Dual):
        s = np.sqrt(x.value)
        return Dual(s, x.deriv / _col(2.0 * s))
    return np.sqrt(x)


def atan2(y, x):
    yv, xv = value_of(y), value_of(x)
    v = np.arctan2(yv, xv)
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        return v
    denom = xv * xv + yv * yv
    d = 0.0
    if isinstance(y, Dual):
        d = y.deriv * _col(xv / denom)
    if isinstance(x, Dual):
        d = d - x.deriv * _col(yv / denom)
    return Dual(v, d)


def seed(x, width: int | None = None, offset: int = 0) -> list[Dual]:
    """Wrap the entries of a point as dual scalars with unit tangents.

    ``width``/``offset`` allow block seeding: a kernel whose inputs occupy a
    sub-block of a larger variable vector gets tangents of the full width
    with its own columns seeded.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if width is None:
        width = n
    out = []
    for i in range(n):
        d = np.zeros(width)
        d[offset + i] = 1.0
        out.append(Dual(float(x[i]), d))
    return out


def seed_batch(X: np.ndarray, width: int | None = None, offset: int = 0) -> list[Dual]:
    """Batched block seeding: column ``j`` of ``X`` (shape ``(B, n)``)
    becomes one dual scalar with value shape ``(B,)`` and a constant unit
    tangent in slot ``offset + j``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("seed_batch expects a 2-D array of points")
    n = X.shape[1]
    if width is None:
        width = n
    out = []
    for j in range(n):
        d = np.zeros((1, width))
        d[0, offset + j] = 1.0
        out.append(Dual(X[:, j].copy(), d))
    return out


def constant_batch(c: float, batch: int) -> np.ndarray:
    """Plain batched constant, convenience for mixing with seeded duals."""
    return np.full(batch, float(c))


def tangent_of(y, width: int, batch: int | None = None) -> np.ndarray:
    """Tangent of a kernel output, densified to the seed width.

    Outputs that do not depend on any seeded input come back as plain
    numbers; those get an all-zero tangent.
    """
    if isinstance(y, Dual):
        d = np.asarray(y.deriv, dtype=float)
        if batch is not None:
            d = np.broadcast_to(d, (batch, width)).copy() if d.shape != (batch, width) else d
        return d
    shape = (width,) if batch is None else (batch, width)
    return np.zeros(shape)


def jacobian(f: Callable[[list[Dual]], Sequence], x) -> np.ndarray:
    """Dense Jacobian of a vector function built from supported primitives.

    ``f`` maps a list of scalars to a sequence of scalars.  The result is
    exact to floating-point roundoff.  Sparse block seeding is available
    through :func:`seed` / :func:`seed_batch` for callers that manage their
    own layout.
    """
    x = np.asarray(x, dtype=float).ravel()
    ys = f(seed(x))
    return np.vstack([tangent_of(y, x.size) for y in ys])


def gradient(f: Callable[[list[Dual]], object], x) -> np.ndarray:
    """Gradient of a scalar function of several variables."""
    return jacobian(lambda s: [f(s)], x)[0]

"""Truncated derivative jets of tensor fields at a point.

A :class:`Jet` of order ``r`` stores a tensor value together with its first
``r`` iterated derivatives, each appended as trailing axes::

    coeffs[0][..]            T
    coeffs[1][.., m]         T_,m
    coeffs[2][.., m, p]      (T_,m)_,p

Products follow the Leibniz rule, so any polynomial tensor expression built
with :func:`einsum`, sums, transpositions and brackets is differentiated
exactly.  The same machinery serves two derivative notions: partial
derivatives (used to assemble curvature from connection coefficients) and
covariant derivatives (the formula builders), since both obey Leibniz and
commute with contractions.  Which one a jet holds is up to its producer.

Plain numpy arrays mixed into the operations are treated as constant
(parallel) tensors such as the Kronecker delta.
"""
from __future__ import annotations

import itertools
import string
from typing import Sequence

import numpy as np

from .tensor import alt as _alt, cyc as _cyc, sym2 as _sym2

_DERIV_LETTERS = "ABCDEFGH"


class Jet:
    __slots__ = ("coeffs", "exact")

    def __init__(self, coeffs: Sequence[np.ndarray], exact: bool = False):
        self.coeffs = tuple(np.asarray(c, dtype=float) for c in coeffs)
        # exact: derivatives beyond the stored ones vanish identically
        self.exact = exact

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, arr) -> "Jet":
        return cls((np.asarray(arr, dtype=float),), exact=True)

    @classmethod
    def prolong(cls, value, derivative: "Jet | np.ndarray") -> "Jet":
        """Jet with value ``value`` whose derivative is the jet ``derivative``.

        A bare array for ``derivative`` gives an order-1 jet (nothing is
        claimed about higher derivatives).
        """
        value = np.asarray(value, dtype=float)
        if not isinstance(derivative, Jet):
            return cls((value, np.asarray(derivative, dtype=float)))
        return cls((value,) + derivative.coeffs, exact=derivative.exact)

    # properties -----------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def rank(self) -> int:
        return self.coeffs[0].ndim

    def coeff(self, k: int) -> np.ndarray | None:
        if k < len(self.coeffs):
            return self.coeffs[k]
        if self.exact:
            return None  # identically zero
        raise ValueError(f"jet of order {self.order} has no derivative of order {k}")

    def truncate(self, r: int) -> "Jet":
        if r > self.order and not self.exact:
            raise ValueError(f"cannot extend a jet of order {self.order} to {r}")
        return Jet(self.coeffs[: r + 1], exact=self.exact and r >= self.order)

    def D(self) -> "Jet":
        """Derivative jet: the new trailing tensor axis is the derivative index."""
        if len(self.coeffs) == 1:
            if self.exact:
                n = self.coeffs[0].shape[0] if self.rank else None
                if n is None:
                    raise ValueError("cannot differentiate a constant scalar without a dimension")
                return Jet.constant(np.zeros(self.coeffs[0].shape + (n,)))
            raise ValueError("jet of order 0 cannot be differentiated")
        return Jet(self.coeffs[1:], exact=self.exact)

    # tensor-axis operations ----------------------------------------------
    def _map(self, fn) -> "Jet":
        return Jet([fn(c) for c in self.coeffs], exact=self.exact)

    def transpose(self, perm: Sequence[int]) -> "Jet":
        perm = list(perm)

        def f(c):
            return np.transpose(c, perm + list(range(len(perm), c.ndim)))

        return self._map(f)

    def cyc(self, axes: Sequence[int]) -> "Jet":
        return self._map(lambda c: _cyc(c, axes))

    def sym2(self, a: int, b: int) -> "Jet":
        return self._map(lambda c: _sym2(c, a, b))

    def alt(self, a: int, b: int) -> "Jet":
        return self._map(lambda c: _alt(c, a, b))

    def __add__(self, other) -> "Jet":
        return _combine(self, as_jet(other), 1.0)

    def __radd__(self, other) -> "Jet":
        return _combine(as_jet(other), self, 1.0)

    def __sub__(self, other) -> "Jet":
        return _combine(self, as_jet(other), -1.0)

    def __rsub__(self, other) -> "Jet":
        return _combine(as_jet(other), self, -1.0)

    def __mul__(self, c: float) -> "Jet":
        c = float(c)
        return self._map(lambda a: c * a)

    __rmul__ = __mul__

    def __neg__(self) -> "Jet":
        return self * -1.0

    def __truediv__(self, c: float) -> "Jet":
        return self * (1.0 / float(c))

    def __repr__(self) -> str:
        return f"Jet(shape={self.coeffs[0].shape}, order={self.order}, exact={self.exact})"


def as_jet(x) -> Jet:
    return x if isinstance(x, Jet) else Jet.constant(x)


def _combine(a: Jet, b: Jet, sign: float) -> Jet:
    if a.coeffs[0].shape != b.coeffs[0].shape:
        raise ValueError(f"shape mismatch {a.coeffs[0].shape} vs {b.coeffs[0].shape}")
    if a.exact and b.exact:
        r = max(a.order, b.order)
    elif a.exact:
        r = b.order
    elif b.exact:
        r = a.order
    else:
        r = min(a.order, b.order)
    out = []
    for k in range(r + 1):
        ca, cb = a.coeff(k), b.coeff(k)
        if ca is None:
            out.append(sign * cb)
        elif cb is None:
            out.append(ca.copy())
        else:
            out.append(ca + sign * cb)
    return Jet(out, exact=a.exact and b.exact)


def einsum(spec: str, *operands) -> Jet:
    """Leibniz-rule einsum over jets; ``spec`` must use an explicit ``->``."""
    jets = [as_jet(op) for op in operands]
    lhs, out = spec.replace(" ", "").split("->")
    terms = lhs.split(",")
    if len(terms) != len(jets):
        raise ValueError(f"einsum spec {spec!r} has {len(terms)} operands, got {len(jets)}")
    if any(ch in _DERIV_LETTERS for ch in spec):
        raise ValueError(f"einsum spec {spec!r} uses reserved letters {_DERIV_LETTERS}")
    variable = [j for j in jets if not j.exact]
    all_exact = not variable
    if all_exact:
        r = 0
    else:
        r = min(j.order for j in variable)
    coeffs = []
    optimize = len(jets) > 2
    for k in range(r + 1):
        dl = _DERIV_LETTERS[:k]
        total = None
        for assign in itertools.product(range(len(jets)), repeat=k):
            subs = []
            arrays = []
            skip = False
            for i, (term, jet) in enumerate(zip(terms, jets)):
                mine = "".join(dl[t] for t in range(k) if assign[t] == i)
                c = jet.coeff(len(mine))
                if c is None:
                    skip = True
                    break
                subs.append(term + mine)
                arrays.append(c)
            if skip:
                continue
            val = np.einsum(",".join(subs) + "->" + out + dl, *arrays, optimize=optimize)
            total = val if total is None else total + val
        if total is None:
            shape0 = coeffs[0].shape if coeffs else None
            if shape0 is None:
                raise ValueError("empty einsum result")
            n = _infer_dim(jets)
            total = np.zeros(shape0 + (n,) * k)
        coeffs.append(total)
    return Jet(coeffs, exact=all_exact)


def _infer_dim(jets: Sequence[Jet]) -> int:
    for j in jets:
        if j.coeffs[0].ndim:
            return j.coeffs[0].shape[0]
    raise ValueError("cannot infer dimension from scalar-only operands")


def trace(j: Jet, a: int, b: int) -> Jet:
    """Contract tensor axes ``a`` and ``b``."""
    letters = string.ascii_lowercase
    rank = j.rank
    sub = list(letters[:rank])
    sub[b] = sub[a]
    out = "".join(s for i, s in enumerate(sub) if i not in (a, b))
    return einsum("".join(sub) + "->" + out, j)


def inverse(g: Jet) -> Jet:
    """Jet of the matrix inverse, via (g^-1)_,m = -g^-1 g_,m g^-1."""
    ginv0 = np.linalg.inv(g.value)
    if g.order == 0:
        return Jet([ginv0], exact=g.exact)
    lower = inverse(g.truncate(g.order - 1))
    d = -einsum("ia,abm,bj->ijm", lower, g.D(), lower)
    return Jet.prolong(ginv0, d)


def zeros(shape, n: int, order: int) -> Jet:
    return Jet([np.zeros(tuple(shape) + (n,) * k) for k in range(order + 1)])

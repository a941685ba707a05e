"""Dense index tensors and the bracket operations used by every formula.

Bracket conventions (fixed for the whole package):

* round brackets ``t_(ijk)`` are the *cyclic sum* over the bracketed
  indices, with no normalizing coefficient;
* square brackets ``t_[lm]`` are the two-term difference ``t_lm - t_ml``,
  again without a 1/2.

Public :class:`Tensor` operations take **1-based** slot numbers, so that
``cyclic_sym(t, (2, 3, 4))`` reads like ``t^h_(ijk)``.  The array-level
helpers (``cyc``, ``alt``, ``sym2``) work on raw numpy axes and are 0-based;
they are what the formula builders use internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

UPPER = "u"
LOWER = "l"


class TensorError(ValueError):
    """Raised for shape, valence or slot errors."""


# ---------------------------------------------------------------------------
# array-level helpers (0-based axes)
# ---------------------------------------------------------------------------

def cyc(arr: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Cyclic sum of ``arr`` over ``axes`` (0-based, no coefficient).

    For axes (p0, p1, p2) the result at index (.., i, j, k, ..) is
    ``arr[.., i, j, k, ..] + arr[.., j, k, i, ..] + arr[.., k, i, j, ..]``.
    """
    axes = list(axes)
    k = len(axes)
    out = np.zeros_like(arr)
    for s in range(k):
        perm = list(range(arr.ndim))
        for u in range(k):
            perm[axes[u]] = axes[(u - s) % k]
        out = out + np.transpose(arr, perm)
    return out


def sym2(arr: np.ndarray, a: int, b: int) -> np.ndarray:
    """Two-index cyclic sum ``t_(ab) = t_ab + t_ba``."""
    return arr + np.swapaxes(arr, a, b)


def alt(arr: np.ndarray, a: int, b: int) -> np.ndarray:
    """Alternation ``t_[ab] = t_ab - t_ba`` (no 1/2)."""
    return arr - np.swapaxes(arr, a, b)


# ---------------------------------------------------------------------------
# Tensor value type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tensor:
    """Dense tensor with declared valence.

    ``valence`` holds one of ``"u"``/``"l"`` per slot; ``data`` has shape
    ``(dim,) * len(valence)``.  Instances are treated as immutable: the array
    is copied and flagged read-only on construction.
    """

    dim: int
    valence: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        valence = tuple(self.valence)
        if self.dim < 2:
            raise TensorError(f"dimension must be >= 2, got {self.dim}")
        for pos, kind in enumerate(valence, start=1):
            if kind not in (UPPER, LOWER):
                raise TensorError(f"slot {pos}: kind must be 'u' or 'l', got {kind!r}")
        data = np.array(self.data, dtype=float)
        expected = (self.dim,) * len(valence)
        if data.shape != expected:
            raise TensorError(f"data shape {data.shape} does not match {expected}")
        if not np.all(np.isfinite(data)):
            raise TensorError("tensor entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "valence", valence)
        object.__setattr__(self, "data", data)

    @property
    def rank(self) -> int:
        return len(self.valence)

    def __getitem__(self, index):
        """Component access with 1-based indices, e.g. ``t[1, 2, 2]``."""
        if not isinstance(index, tuple):
            index = (index,)
        if len(index) != self.rank:
            raise TensorError(f"expected {self.rank} indices, got {len(index)}")
        for pos, i in enumerate(index, start=1):
            if not 1 <= i <= self.dim:
                raise TensorError(f"index {i} at slot {pos} outside 1..{self.dim}")
        return float(self.data[tuple(i - 1 for i in index)])

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, c: float) -> "Tensor":
        return scale(self, c)

    __rmul__ = __mul__

    def allclose(self, other: "Tensor", atol: float = 1e-12) -> bool:
        return (
            self.dim == other.dim
            and self.valence == other.valence
            and bool(np.allclose(self.data, other.data, rtol=0.0, atol=atol))
        )

    def norm(self) -> float:
        """Max-norm of the components."""
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def __repr__(self) -> str:
        return f"Tensor(dim={self.dim}, valence={''.join(self.valence) or 'scalar'})"


def tensor(data, valence: str | Sequence[str], dim: int | None = None) -> Tensor:
    """Convenience constructor: ``tensor(arr, "ull")``."""
    data = np.asarray(data, dtype=float)
    valence = tuple(valence)
    if dim is None:
        if data.ndim == 0:
            raise TensorError("dim is required for rank-0 tensors")
        dim = data.shape[0]
    return Tensor(dim, valence, data)


def _check_slots(t: Tensor, slots: Sequence[int]) -> list[int]:
    axes = []
    for s in slots:
        if not 1 <= s <= t.rank:
            raise TensorError(f"slot {s} out of range 1..{t.rank}")
        axes.append(s - 1)
    if len(set(axes)) != len(axes):
        raise TensorError(f"repeated slot in {tuple(slots)}")
    return axes


def _check_same_kind(t: Tensor, axes: Sequence[int]) -> None:
    kinds = {t.valence[a] for a in axes}
    if len(kinds) != 1:
        named = ", ".join(f"{a + 1}:{t.valence[a]}" for a in axes)
        raise TensorError(f"bracketed slots mix upper and lower kinds ({named})")


def cyclic_sym(t: Tensor, slots: Sequence[int]) -> Tensor:
    """Cyclic sum over ``slots`` (1-based); other slots are untouched."""
    if len(slots) < 2:
        raise TensorError("cyclic_sym needs at least two slots")
    axes = _check_slots(t, slots)
    _check_same_kind(t, axes)
    return Tensor(t.dim, t.valence, cyc(t.data, axes))


def alternate(t: Tensor, pair: Sequence[int]) -> Tensor:
    """``t_[ab] = t_ab - t_ba`` over the given pair of 1-based slots."""
    if len(pair) != 2:
        raise TensorError("alternate needs exactly two slots")
    a, b = _check_slots(t, pair)
    _check_same_kind(t, (a, b))
    return Tensor(t.dim, t.valence, alt(t.data, a, b))


def contract(t: Tensor, upper: int, lower: int) -> Tensor:
    """Trace over one upper and one lower slot (1-based)."""
    a, b = _check_slots(t, (upper, lower))
    if t.valence[a] == t.valence[b]:
        raise TensorError(
            f"cannot contract slots {upper} and {lower}: both are {t.valence[a]!r}"
        )
    data = np.trace(t.data, axis1=a, axis2=b)
    valence = tuple(k for i, k in enumerate(t.valence) if i not in (a, b))
    return Tensor(t.dim, valence, data)


def add(t1: Tensor, t2: Tensor) -> Tensor:
    if t1.dim != t2.dim or t1.valence != t2.valence:
        raise TensorError(
            f"cannot add tensors of dim/valence {t1.dim}/{''.join(t1.valence)} "
            f"and {t2.dim}/{''.join(t2.valence)}"
        )
    return Tensor(t1.dim, t1.valence, t1.data + t2.data)


def scale(t: Tensor, c: float) -> Tensor:
    return Tensor(t.dim, t.valence, float(c) * t.data)


def outer_product(t1: Tensor, t2: Tensor) -> Tensor:
    if t1.dim != t2.dim:
        raise TensorError(f"dimension mismatch {t1.dim} vs {t2.dim}")
    return Tensor(t1.dim, t1.valence + t2.valence, np.multiply.outer(t1.data, t2.data))


def kronecker(n: int) -> Tensor:
    """Kronecker delta with valence (upper, lower)."""
    if n < 2:
        raise TensorError(f"dimension must be >= 2, got {n}")
    return Tensor(n, (UPPER, LOWER), np.eye(n))


def zeros(n: int, valence: str | Sequence[str]) -> Tensor:
    valence = tuple(valence)
    return Tensor(n, valence, np.zeros((n,) * len(valence)))

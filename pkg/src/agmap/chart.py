"""Coordinate charts: connection, optional metric and candidate fields as Exprs.

A chart document is a JSON object::

    {
      "dimension": 2,
      "coordinates": ["theta", "phi"],
      "domain": [[0.3, 2.8], [-3.0, 3.0]],
      "connection": {"1,2,2": "-sin(theta)*cos(theta)",
                     "2,1,2": "cos(theta)/sin(theta)",
                     "2,2,1": "cos(theta)/sin(theta)"},
      "metric": {"1,1": "1", "2,2": "sin(theta)^2"},
      "fields": {"P": {"valence": "ull", "components": {"1,1,1": "2"}}}
    }

Component keys are 1-based comma separated indices; omitted entries are zero.
For the fields ``P`` (valence ``ull``) and ``a`` (``ll``) the ``valence`` key
may be dropped and the components given directly.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .expr import ZERO, EvaluationError, Expr, ExprError, eval_field, parse_expr

SYMMETRY_TOL = 1e-12
DET_TOL = 1e-9

DEFAULT_VALENCE = {"P": "ull", "a": "ll", "b": "l"}


class ChartError(ValueError):
    """Invalid chart document or failed validation."""


@dataclass(frozen=True)
class FieldSpec:
    """Named tensor field given componentwise as Exprs."""

    valence: str
    components: np.ndarray  # object array of Expr, shape (n,)*rank


@dataclass(frozen=True)
class ChartSpec:
    dim: int
    coordinates: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]
    connection: np.ndarray  # object array (n, n, n): Gamma^h_ij
    metric: np.ndarray | None = None  # object array (n, n): g_ij
    fields: Mapping[str, FieldSpec] = field(default_factory=dict)

    def contains(self, x) -> bool:
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.domain))

    def center(self) -> np.ndarray:
        return np.array([(lo + hi) / 2 for lo, hi in self.domain])

    def sample_points(self, count: int, seed: int = 0, margin: float = 0.05) -> np.ndarray:
        """``count`` uniform random points, kept ``margin`` (relative) away from the box edges."""
        rng = np.random.default_rng(seed)
        lo = np.array([a for a, _ in self.domain])
        hi = np.array([b for _, b in self.domain])
        pad = margin * (hi - lo)
        return rng.uniform(lo + pad, hi - pad, size=(count, self.dim))

    def grid(self, per_axis: int = 3) -> list[np.ndarray]:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.domain]
        return [np.array(p) for p in itertools.product(*axes)]


def zero_exprs(n: int, rank: int) -> np.ndarray:
    arr = np.empty((n,) * rank, dtype=object)
    arr.fill(ZERO)
    return arr


def eval_array(exprs: np.ndarray, x) -> np.ndarray:
    """Evaluate an object array of Exprs at ``x``."""
    out = np.empty(exprs.shape, dtype=float)
    for idx, e in np.ndenumerate(exprs):
        out[idx] = eval_field(e, x)
    return out


def _parse_index(key: str, n: int, rank: int, where: str) -> tuple[int, ...]:
    try:
        idx = tuple(int(p) for p in str(key).split(","))
    except ValueError:
        raise ChartError(f"{where}: bad component key {key!r}") from None
    if len(idx) != rank:
        raise ChartError(f"{where}: key {key!r} needs {rank} indices")
    for i in idx:
        if not 1 <= i <= n:
            raise ChartError(f"{where}: index {i} in key {key!r} outside 1..{n}")
    return tuple(i - 1 for i in idx)


def _parse_components(entries: Any, n: int, rank: int, names, where: str) -> np.ndarray:
    if not isinstance(entries, Mapping):
        raise ChartError(f"{where}: expected an object of components")
    arr = zero_exprs(n, rank)
    for key, text in entries.items():
        idx = _parse_index(key, n, rank, where)
        try:
            arr[idx] = parse_expr(text, names)
        except ExprError as exc:
            raise ChartError(f"{where}[{key}]: {exc}") from None
    return arr


def parse_chart_spec(document: str | Mapping[str, Any], validate: bool = True) -> ChartSpec:
    """Parse and validate a chart document (JSON text or already-decoded mapping)."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ChartError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(document, Mapping):
        raise ChartError("chart document must be a JSON object")
    try:
        n = int(document["dimension"])
    except (KeyError, TypeError, ValueError):
        raise ChartError("missing or invalid 'dimension'") from None
    if n < 2:
        raise ChartError(f"dimension must be >= 2, got {n}")
    names = tuple(document.get("coordinates") or [f"x{i + 1}" for i in range(n)])
    if len(names) != n or len(set(names)) != n:
        raise ChartError(f"'coordinates' must list {n} distinct names")
    for name in names:
        if not name.isidentifier() or name in ("sin", "cos", "exp", "pi"):
            raise ChartError(f"invalid coordinate name {name!r}")
    dom = document.get("domain")
    if not isinstance(dom, list) or len(dom) != n:
        raise ChartError(f"'domain' must be a list of {n} [lo, hi] intervals")
    domain = []
    for k, iv in enumerate(dom, start=1):
        try:
            lo, hi = (float(v) for v in iv)
        except (TypeError, ValueError):
            raise ChartError(f"domain[{k}]: expected [lo, hi]") from None
        if not lo < hi:
            raise ChartError(f"domain[{k}]: need lo < hi, got [{lo}, {hi}]")
        domain.append((lo, hi))
    conn = _parse_components(document.get("connection", {}), n, 3, names, "connection")
    metric = None
    if document.get("metric") is not None:
        metric = _parse_components(document["metric"], n, 2, names, "metric")
    fields = {}
    for fname, spec in (document.get("fields") or {}).items():
        if isinstance(spec, Mapping) and "components" in spec:
            valence = str(spec.get("valence", DEFAULT_VALENCE.get(fname, "")))
            comps = spec["components"]
        else:
            valence = DEFAULT_VALENCE.get(fname)
            comps = spec
            if valence is None:
                raise ChartError(f"fields.{fname}: 'valence' is required")
        if any(c not in "ul" for c in valence):
            raise ChartError(f"fields.{fname}: valence must be a string over 'u'/'l'")
        arr = _parse_components(comps, n, len(valence), names, f"fields.{fname}")
        fields[fname] = FieldSpec(valence, arr)
    chart = ChartSpec(n, names, tuple(domain), conn, metric, fields)
    if validate:
        validate_chart(chart)
    return chart


def validate_chart(chart: ChartSpec, per_axis: int = 3) -> None:
    """Torsion-free and metric checks on a ``per_axis``^n grid over the domain box."""
    n = chart.dim
    for x in chart.grid(per_axis):
        at = ", ".join(f"{v:.6g}" for v in x)
        try:
            gam = eval_array(chart.connection, x)
        except EvaluationError as exc:
            raise ChartError(f"connection not evaluable at ({at}): {exc}") from None
        asym = np.abs(gam - np.swapaxes(gam, 1, 2))
        if asym.max() > SYMMETRY_TOL:
            h, i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
            raise ChartError(
                f"connection is not torsion-free: Gamma^{h + 1}_{i + 1}{j + 1} != "
                f"Gamma^{h + 1}_{j + 1}{i + 1} at ({at})"
            )
        if chart.metric is not None:
            try:
                g = eval_array(chart.metric, x)
            except EvaluationError as exc:
                raise ChartError(f"metric not evaluable at ({at}): {exc}") from None
            if np.abs(g - g.T).max() > SYMMETRY_TOL:
                raise ChartError(f"metric is not symmetric at ({at})")
            if abs(np.linalg.det(g)) <= DET_TOL:
                raise ChartError(f"metric is degenerate at ({at}): |det g| <= {DET_TOL:g}")
        for fname, f in chart.fields.items():
            try:
                eval_array(f.components, x)
            except EvaluationError as exc:
                raise ChartError(f"fields.{fname} not evaluable at ({at}): {exc}") from None
    if n != len(chart.coordinates):
        raise ChartError("coordinate names do not match the dimension")


def _components_to_doc(arr: np.ndarray, names) -> dict[str, str]:
    out = {}
    for idx, e in np.ndenumerate(arr):
        if not e.is_zero():
            out[",".join(str(i + 1) for i in idx)] = e.to_string(names)
    return out


def serialize_chart(chart: ChartSpec) -> dict[str, Any]:
    """Inverse of :func:`parse_chart_spec` (zero components are omitted)."""
    doc: dict[str, Any] = {
        "dimension": chart.dim,
        "coordinates": list(chart.coordinates),
        "domain": [list(iv) for iv in chart.domain],
        "connection": _components_to_doc(chart.connection, chart.coordinates),
    }
    if chart.metric is not None:
        doc["metric"] = _components_to_doc(chart.metric, chart.coordinates)
    if chart.fields:
        doc["fields"] = {
            name: {"valence": f.valence, "components": _components_to_doc(f.components, chart.coordinates)}
            for name, f in chart.fields.items()
        }
    return doc


def load_chart(path: str | Path, validate: bool = True) -> ChartSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ChartError(f"cannot read chart file {path}: {exc.strerror}") from None
    return parse_chart_spec(text, validate=validate)


def with_connection(chart: ChartSpec, connection: np.ndarray) -> ChartSpec:
    """Same chart, different connection coefficients."""
    return ChartSpec(chart.dim, chart.coordinates, chart.domain, connection, chart.metric, chart.fields)

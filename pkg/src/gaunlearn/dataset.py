"""Synthetic datasets, assumption audits and JSON persistence.

Every generated row ``i`` is drawn from its own PCG64 stream keyed by
``SeedSequence(seed, spawn_key=(0, i))``.  Growing ``m`` therefore never
changes earlier rows, and the first coordinates of a row drawn at a larger
``d`` are the same standard normals (before the ``1/sqrt(d)`` scaling).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError, ParseError, PartitionError, ValidationError

KINDS = ("isotropic", "mixture", "orthonormal")
_ROW_STREAM = 0
_MAX_SEED = 2**64


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    kind: str
    seed: int | None = None
    alpha: float | None = None
    # positions of these rows in the dataset they were split from
    index: tuple = field(default=())

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim != 2:
            raise DimensionError(f"X must be a matrix, got shape {X.shape}")
        m, d = X.shape
        if m < 1 or d < 1:
            raise DimensionError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
        if y.shape != (m,):
            raise DimensionError(f"y has shape {y.shape}, expected ({m},)")
        bad = np.flatnonzero((y != 1.0) & (y != -1.0))
        if bad.size:
            raise ValidationError(f"label {y[bad[0]]!r} at index {bad[0]} is not -1 or +1")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        index = tuple(int(i) for i in self.index) if self.index else tuple(range(m))
        if len(index) != m:
            raise DimensionError("index mapping length differs from m")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "index", index)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.seed == other.seed
            and self.alpha == other.alpha
            and self.index == other.index
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or not 0 <= seed < _MAX_SEED:
        raise ParameterError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def _row_rng(seed, i):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_ROW_STREAM, i))))


def _check_labels(labels, m):
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (m,):
        raise DimensionError(f"expected {m} labels, got {labels.shape[0] if labels.ndim else 'scalar'}")
    return labels


def gen_isotropic(m: int, d: int, seed: int, labels: Sequence[int] | None = None) -> Dataset:
    """Rows i.i.d. N(0, I/d); labels are fair signs unless ``labels`` is given."""
    if m < 2 or d < 1:
        raise DimensionError(f"need m >= 2 and d >= 1, got m={m}, d={d}")
    seed = _check_seed(seed)
    X = np.empty((m, d))
    y = np.empty(m)
    scale = 1.0 / math.sqrt(d)
    for i in range(m):
        rng = _row_rng(seed, i)
        y[i] = 1.0 if rng.integers(2) else -1.0
        X[i] = rng.standard_normal(d) * scale
    if labels is not None:
        y = _check_labels(labels, m)
    return Dataset(X, y, "isotropic", seed=seed)


def mixture_mean(d: int, alpha: float) -> np.ndarray:
    """Positive cluster mean: ``d**-alpha`` times the first basis vector."""
    mu = np.zeros(d)
    mu[0] = d ** (-alpha)
    return mu


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 0.25):
        raise ParameterError(f"alpha must lie in (0, 0.25), got {alpha!r}")
    return float(alpha)


def sample_mixture(n: int, d: int, alpha: float, seed: int, stream: int = _ROW_STREAM):
    """Draw ``n`` labeled points from the two-cluster mixture.

    ``stream`` selects an independent family of row streams so that test
    draws never reuse training rows for the same seed.
    """
    alpha = _check_alpha(alpha)
    mu = mixture_mean(d, alpha)
    scale = 1.0 / math.sqrt(d)
    X = np.empty((n, d))
    y = np.empty(n)
    for i in range(n):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, i))))
        y[i] = 1.0 if rng.integers(2) else -1.0
        X[i] = y[i] * mu + rng.standard_normal(d) * scale
    return X, y


def gen_mixture(m: int, d: int, alpha: float, seed: int) -> Dataset:
    if m < 2 or d < 1:
        raise DimensionError(f"need m >= 2 and d >= 1, got m={m}, d={d}")
    seed = _check_seed(seed)
    X, y = sample_mixture(m, d, alpha, seed)
    return Dataset(X, y, "mixture", seed=seed, alpha=float(alpha))


def gen_orthonormal(m: int, d: int, labels: Sequence[int]) -> Dataset:
    if m < 2 or d < 1:
        raise DimensionError(f"need m >= 2 and d >= 1, got m={m}, d={d}")
    if m > d:
        raise DimensionError(f"orthonormal data needs m <= d, got m={m}, d={d}")
    return Dataset(np.eye(m, d), _check_labels(labels, m), "orthonormal")


@dataclass(frozen=True)
class AssumptionReport:
    psi: float
    phi: float
    m: int

    @property
    def eps_d_linear(self) -> float:
        return 4 * self.m * self.phi

    def eps_d_twolayer(self, n: int) -> float:
        return 4 * self.m * n * self.phi

    def holds_linear(self, psi0: float, eps_d: float) -> bool:
        return self.psi <= psi0 and self.phi <= eps_d / (4 * self.m)

    def holds_twolayer(self, psi0: float, eps_d: float, n: int) -> bool:
        return self.psi <= psi0 and self.phi <= eps_d / (4 * self.m * n)

    def to_dict(self):
        return {"psi": self.psi, "phi": self.phi, "m": self.m, "eps_d_linear": self.eps_d_linear}


def audit(ds: Dataset) -> AssumptionReport:
    """Exact norm deviation ``psi`` and worst pairwise inner product ``phi``."""
    G = ds.X @ ds.X.T
    psi = float(np.max(np.abs(np.diag(G) - 1.0)))
    off = np.abs(G)
    np.fill_diagonal(off, -np.inf)
    phi = float(np.max(off)) if ds.m > 1 else 0.0
    return AssumptionReport(psi=psi, phi=max(phi, 0.0), m=ds.m)


def split_forget(ds: Dataset, forget: Iterable[int]) -> tuple[Dataset, Dataset]:
    """Partition into (retain, forget) views that remember original indices."""
    chosen = sorted({int(i) for i in forget})
    if not chosen:
        raise PartitionError("forget set is empty")
    if chosen[0] < 0 or chosen[-1] >= ds.m:
        raise PartitionError(f"forget indices must lie in [0, {ds.m})")
    if len(chosen) == ds.m:
        raise PartitionError("forget set covers the whole dataset")
    mask = np.zeros(ds.m, dtype=bool)
    mask[chosen] = True
    idx = np.asarray(ds.index)

    def view(sel):
        return Dataset(ds.X[sel], ds.y[sel], ds.kind, ds.seed, ds.alpha, tuple(idx[sel]))

    return view(~mask), view(mask)


# ---------------------------------------------------------------- persistence


def to_json(ds: Dataset) -> dict:
    return {
        "kind": ds.kind,
        "m": ds.m,
        "d": ds.d,
        "seed": ds.seed,
        "alpha": ds.alpha,
        "labels": [int(v) for v in ds.y],
        "X": ds.X.tolist(),
    }


def save(ds: Dataset, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_json(ds), allow_nan=False))
    return path


def _field(doc, name, types):
    if name not in doc:
        raise ParseError(f"field {name!r}: missing")
    value = doc[name]
    if not isinstance(value, types):
        raise ParseError(f"field {name!r}: expected {types}, got {type(value).__name__}")
    return value


def from_json(doc) -> Dataset:
    if not isinstance(doc, dict):
        raise ParseError("dataset document must be a JSON object")
    kind = _field(doc, "kind", str)
    m = _field(doc, "m", int)
    d = _field(doc, "d", int)
    seed = _field(doc, "seed", (int, type(None)))
    alpha = _field(doc, "alpha", (int, float, type(None)))
    labels = _field(doc, "labels", list)
    X = _field(doc, "X", list)
    if len(labels) != m:
        raise ParseError(f"field 'labels': {len(labels)} entries, expected m={m}")
    for i, v in enumerate(labels):
        if isinstance(v, bool) or v not in (-1, 1):
            raise ValidationError(f"field 'labels[{i}]': label {v!r} is not -1 or +1")
    if len(X) != m:
        raise ParseError(f"field 'X': {len(X)} rows, expected m={m}")
    for i, row in enumerate(X):
        if not isinstance(row, list) or len(row) != d:
            raise ParseError(f"field 'X[{i}]': expected a list of {d} numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"field 'X[{i}][{j}]': not a number")
    return Dataset(
        np.array(X, dtype=float).reshape(m, d),
        np.array(labels, dtype=float),
        kind,
        seed=seed,
        alpha=None if alpha is None else float(alpha),
    )


def load(path) -> Dataset:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_json(doc)

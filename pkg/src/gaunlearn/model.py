"""Homogeneous predictors: linear ``w.x`` and two-layer ReLU with a fixed output layer.

Both models are 1-homogeneous in their trainable parameters.  ``theta`` is
the flat trainable vector (``w`` itself, or ``W`` flattened row-major by
neuron).  The ReLU derivative at exactly zero is taken to be 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError, ParseError, VariantError


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearParams:
    w: np.ndarray

    variant = "linear"

    def __post_init__(self):
        w = _frozen(self.w)
        if w.ndim != 1 or w.size < 1:
            raise DimensionError(f"w must be a nonempty vector, got shape {w.shape}")
        object.__setattr__(self, "w", w)

    @property
    def d(self):
        return self.w.size

    @property
    def theta(self) -> np.ndarray:
        return self.w

    def with_theta(self, theta) -> "LinearParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.w.shape:
            raise DimensionError(f"theta has shape {theta.shape}, expected {self.w.shape}")
        return LinearParams(theta)

    def __eq__(self, other):
        return isinstance(other, LinearParams) and np.array_equal(self.w, other.w)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TwoLayerParams:
    W: np.ndarray
    u: np.ndarray

    variant = "twolayer"

    def __post_init__(self):
        W = _frozen(self.W)
        u = _frozen(self.u)
        if W.ndim != 2 or min(W.shape) < 1:
            raise DimensionError(f"W must be a nonempty matrix, got shape {W.shape}")
        if u.shape != (W.shape[0],):
            raise DimensionError(f"u has shape {u.shape}, expected ({W.shape[0]},)")
        mag = 1.0 / math.sqrt(W.shape[0])
        if not np.all(np.abs(u) == mag):
            raise ParameterError(f"output weights must be exactly +-1/sqrt(n) = +-{mag!r}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "u", u)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return self.W.reshape(-1)

    def with_theta(self, theta) -> "TwoLayerParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.W.size,):
            raise DimensionError(f"theta has shape {theta.shape}, expected ({self.W.size},)")
        return TwoLayerParams(theta.reshape(self.W.shape), self.u)

    def __eq__(self, other):
        return (
            isinstance(other, TwoLayerParams)
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.u, other.u)
        )

    __hash__ = None


ModelParams = LinearParams | TwoLayerParams


def _as_rows(params, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.d:
        raise DimensionError(f"input dimension {X.shape[1]} does not match model dimension {params.d}")
    return X, single


def preactivations(params: TwoLayerParams, X) -> np.ndarray:
    """``Z[i, j] = <w_j, x_i>`` for a batch of rows."""
    X, _ = _as_rows(params, X)
    return X @ params.W.T


def forward(params, X):
    """Network output for one input vector or each row of a matrix."""
    X, single = _as_rows(params, X)
    if params.variant == "linear":
        out = X @ params.w
    else:
        out = np.maximum(X @ params.W.T, 0.0) @ params.u
    return float(out[0]) if single else out


def margins(params, ds) -> np.ndarray:
    return ds.y * forward(params, ds.X)


def grad_params(params, x) -> np.ndarray:
    """Gradient of the output (not the loss) with respect to ``theta``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("grad_params takes a single input vector")
    return grad_matrix(params, x[None, :])[0]


def grad_matrix(params, X) -> np.ndarray:
    """Row ``i`` holds the output gradient at ``X[i]`` (shape ``(m, len(theta))``)."""
    X, _ = _as_rows(params, X)
    if params.variant == "linear":
        return X.copy()
    gate = (X @ params.W.T >= 0.0) * params.u  # (m, n)
    return (gate[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)


def activation_map(params, ds) -> np.ndarray:
    """Boolean ``(m, n)`` matrix of ``<w_j, x_i> >= 0``."""
    if params.variant != "twolayer":
        raise VariantError("activation maps exist only for the two-layer model")
    return preactivations(params, ds.X) >= 0.0


def scale(params, c: float):
    if not c > 0:
        raise ParameterError(f"scale factor must be positive, got {c!r}")
    return params.with_theta(params.theta * c)


def init_linear(d: int):
    return LinearParams(np.zeros(d))


def init_twolayer(n: int, d: int, init_scale: float, seed: int) -> TwoLayerParams:
    """Gaussian first layer times ``init_scale``; output signs are fair coins."""
    if n < 1 or d < 1:
        raise DimensionError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not init_scale > 0:
        raise ParameterError(f"init_scale must be positive, got {init_scale!r}")
    ss = np.random.SeedSequence(seed)
    w_ss, u_ss = ss.spawn(2)
    W = np.random.Generator(np.random.PCG64(w_ss)).standard_normal((n, d)) * init_scale
    signs = np.random.Generator(np.random.PCG64(u_ss)).integers(2, size=n)
    u = np.where(signs == 1, 1.0, -1.0) / math.sqrt(n)
    return TwoLayerParams(W, u)


# ---------------------------------------------------------------- persistence


def to_json(params) -> dict:
    if params.variant == "linear":
        return {"variant": "linear", "w": params.w.tolist()}
    return {"variant": "twolayer", "d": params.d, "n": params.n, "u": params.u.tolist(), "W": params.W.tolist()}


def from_json(doc):
    if not isinstance(doc, dict) or "variant" not in doc:
        raise ParseError("params document must be an object with a 'variant' field")
    try:
        if doc["variant"] == "linear":
            return LinearParams(np.array(doc["w"], dtype=float))
        if doc["variant"] == "twolayer":
            W = np.array(doc["W"], dtype=float)
            if W.shape != (doc["n"], doc["d"]):
                raise ParseError(f"field 'W': shape {W.shape} does not match n={doc['n']}, d={doc['d']}")
            return TwoLayerParams(W, np.array(doc["u"], dtype=float))
    except KeyError as exc:
        raise ParseError(f"field {exc.args[0]!r}: missing") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"params: {exc}") from None
    raise ParseError(f"field 'variant': unknown value {doc['variant']!r}")


def save(params, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_json(params), allow_nan=False))
    return path


def load(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_json(doc)

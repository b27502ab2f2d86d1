"""Full-batch gradient descent and the linear max-margin oracle."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionError, DivergenceError, OracleError, ParameterError
from .model import init_linear, margins

log = logging.getLogger(__name__)

LOSSES = ("logistic", "exponential")


def _check_loss(loss):
    if loss not in LOSSES:
        raise ParameterError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def loss_value(loss: str, q):
    _check_loss(loss)
    q = np.asarray(q, dtype=float)
    if loss == "logistic":
        return np.logaddexp(0.0, -q)
    return np.exp(-q)


def loss_derivative(loss: str, q):
    """Derivative of the per-sample loss in the margin; strictly negative."""
    _check_loss(loss)
    q = np.asarray(q, dtype=float)
    out = -expit(-q) if loss == "logistic" else -np.exp(-q)
    return float(out) if out.ndim == 0 else out


def empirical_loss(params, ds, loss: str) -> float:
    return float(np.mean(loss_value(loss, margins(params, ds))))


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "logistic"
    lr: float = 1.0
    epochs: int = 1000
    weight_decay: float = 0.0
    loss_threshold: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        _check_loss(self.loss)
        # lr = 0 is accepted as a no-op run
        if not self.lr >= 0:
            raise ParameterError(f"lr must be nonnegative, got {self.lr!r}")
        if not (isinstance(self.epochs, int) and self.epochs >= 0):
            raise ParameterError(f"epochs must be a nonnegative integer, got {self.epochs!r}")
        if not self.weight_decay >= 0:
            raise ParameterError(f"weight_decay must be nonnegative, got {self.weight_decay!r}")
        if not self.loss_threshold > 0:
            raise ParameterError(f"loss_threshold must be positive, got {self.loss_threshold!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    final_loss: float
    epochs_run: int
    min_margin: float
    loss_curve: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _loss_and_grad(params, X, y, loss):
    """Mean loss and its gradient in ``theta`` for a batch."""
    m = X.shape[0]
    if params.variant == "linear":
        q = y * (X @ params.w)
        coef = loss_derivative(loss, q) * y / m
        grad = coef @ X
    else:
        Z = X @ params.W.T
        q = y * (np.maximum(Z, 0.0) @ params.u)
        coef = loss_derivative(loss, q) * y / m
        grad = (((Z >= 0.0) * coef[:, None]) * params.u).T @ X
        grad = grad.reshape(-1)
    return float(np.mean(loss_value(loss, q))), grad


def train_gd(params, ds, cfg: TrainConfig):
    """Run GD with optional weight decay; stop early once the loss drops below the threshold."""
    if params.d != ds.d:
        raise DimensionError(f"model dimension {params.d} does not match data dimension {ds.d}")
    X, y = ds.X, ds.y
    theta = params.theta.copy()
    current = params
    stride = max(1, cfg.epochs // 200)
    curve = []
    epoch = 0
    value = None
    while True:
        # overflow is detected just below and reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            value, grad = _loss_and_grad(current, X, y, cfg.loss)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise DivergenceError(epoch, value)
        if epoch % stride == 0:
            curve.append([epoch, value])
        if epoch >= cfg.epochs or value < cfg.loss_threshold:
            break
        if cfg.lr:
            theta = theta - cfg.lr * (grad + cfg.weight_decay * theta)
            current = params.with_theta(theta)
        epoch += 1
    if curve[-1][0] != epoch:
        curve.append([epoch, value])
    report = TrainReport(
        final_loss=value,
        epochs_run=epoch,
        min_margin=float(np.min(margins(current, ds))),
        loss_curve=curve,
    )
    return current, report


def train_maxmargin_linear(ds, tol: float = 1e-8, max_sweeps: int = 200_000) -> np.ndarray:
    """Hard-margin linear classifier without bias, by dual coordinate ascent.

    Maximizes ``sum(a) - |sum_i a_i y_i x_i|^2 / 2`` over ``a >= 0`` one
    coordinate at a time, cycling in index order, until every projected
    dual gradient is below ``tol``.
    """
    Z = ds.y[:, None] * ds.X
    sq = np.einsum("ij,ij->i", Z, Z)
    if np.any(sq == 0):
        raise OracleError("a zero sample vector cannot be separated with a positive margin")
    m = Z.shape[0]
    a = np.zeros(m)
    w = np.zeros(ds.d)
    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        for i in range(m):
            new = max(0.0, a[i] + (1.0 - Z[i] @ w) / sq[i])
            if new != a[i]:
                w += (new - a[i]) * Z[i]
                a[i] = new
        w = a @ Z
        gap = 1.0 - Z @ w
        residual = float(np.max(np.where(a > 0, np.abs(gap), np.maximum(gap, 0.0))))
        if residual < tol:
            log.debug("dual coordinate ascent converged in %d sweeps", sweep)
            return w
        if not np.isfinite(residual) or a.max() > 1e12:
            break
    raise OracleError(
        f"max-margin oracle did not converge after {sweep} sweeps "
        f"(KKT residual {residual:.3e}, max dual weight {a.max():.3e}); data may be non-separable"
    )


def maxmargin_linear_gd(ds, epochs: int = 200_000, lr: float = 1.0) -> np.ndarray:
    """Cross-check for the oracle: long logistic GD, rescaled to unit minimum margin."""

    params, report = train_gd(init_linear(ds.d), ds, TrainConfig(lr=lr, epochs=epochs, loss_threshold=1e-300))
    return params.w / report.min_margin

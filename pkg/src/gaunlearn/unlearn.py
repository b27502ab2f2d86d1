"""Gradient-ascent unlearning and the activation-preserving correction for two-layer nets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NotApplicableError, PartitionError, SolverError, ValidationError
from .model import forward, grad_matrix, margins, preactivations
from .trainer import loss_derivative


@dataclass(frozen=True, eq=False)
class UnlearnResult:
    forget: tuple
    lam: tuple
    beta: tuple
    theta_hat: object
    theta_tilde: object = None
    c: float = 0.0
    rescale_factor: float = 1.0

    def with_witness(self, theta_tilde, c, rescale_factor=1.0) -> "UnlearnResult":
        return replace(self, theta_tilde=theta_tilde, c=c, rescale_factor=rescale_factor)


def _forget_indices(ds, forget):
    idx = sorted({int(i) for i in forget})
    if not idx:
        raise PartitionError("forget set is empty")
    if idx[0] < 0 or idx[-1] >= ds.m:
        raise PartitionError(f"forget index out of range [0, {ds.m})")
    if len(idx) == ds.m:
        raise PartitionError("cannot forget every training point")
    return idx


def step_size(params, ds, l: int, lambda_l: float, loss: str) -> float:
    """Ascent step that cancels the loss derivative: ``-lambda_l / loss'(margin_l)``."""
    if lambda_l < 0:
        raise ValidationError(f"multiplier must be nonnegative, got {lambda_l!r}")
    if lambda_l == 0:
        return 0.0
    q = float(ds.y[l] * forward(params, ds.X[l]))
    slope = loss_derivative(loss, q)
    if slope == 0.0:
        raise SolverError(f"loss derivative underflows at margin {q!r}")
    return -lambda_l / slope


def unlearn_kga(params, ds, forget, lam, loss: str) -> UnlearnResult:
    """One ascent step on the summed loss of the forget set, each point with its own step size."""
    idx = _forget_indices(ds, forget)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (ds.m,):
        raise ValidationError(f"expected {ds.m} multipliers, got shape {lam.shape}")
    theta = params.theta
    q = margins(params, ds)
    grads = grad_matrix(params, ds.X[idx])
    betas = [step_size(params, ds, r, float(lam[r]), loss) for r in idx]

    update = np.zeros_like(theta)
    reference = np.zeros_like(theta)
    for beta, r, g in zip(betas, idx, grads):
        # gradient of the per-sample loss is loss'(q) * y * grad N
        update += beta * loss_derivative(loss, q[r]) * ds.y[r] * g
        reference += lam[r] * ds.y[r] * g
    theta_hat = theta + update
    gap = np.linalg.norm(theta_hat - (theta - reference))
    if gap > 1e-12 * max(np.linalg.norm(theta), np.linalg.norm(reference)):
        raise SolverError(f"ascent step deviates from the multiplier form by {gap:.3e}")
    return UnlearnResult(
        forget=tuple(idx),
        lam=tuple(float(lam[r]) for r in idx),
        beta=tuple(betas),
        theta_hat=params.with_theta(theta_hat),
    )


def unlearn_ga(params, ds, l: int, lam, loss: str) -> UnlearnResult:
    if not 0 <= l < ds.m:
        raise PartitionError(f"forget index {l} out of range [0, {ds.m})")
    return unlearn_kga(params, ds, [l], lam, loss)


def build_correction(params_original, result: UnlearnResult, ds, eps_d: float):
    """Witness parameters whose activation pattern on the retain set matches the original.

    Each neuron ``j`` of the ascent output is moved along
    ``Delta_j = c * sum_{k in retain} sign(<x_k, w_j>) x_k`` with
    ``c = eps_d / (2 m n)``, weighted by ``|u_j| * sum_l lam_l * gate(l, j)``.
    Signs and gates come from the original weights; ``sign(0) = +1``.
    """
    if params_original.variant != "twolayer":
        raise NotApplicableError("the correction is defined only for the two-layer model")
    if eps_d < 0:
        raise ValidationError(f"eps_d must be nonnegative, got {eps_d!r}")
    m, n = ds.m, params_original.n
    c = eps_d / (2 * m * n)
    forget = list(result.forget)
    retain = np.setdiff1d(np.arange(m), forget)
    Xr = ds.X[retain]
    signs = np.where(preactivations(params_original, Xr) >= 0.0, 1.0, -1.0)  # (m_r, n)
    delta = c * (signs.T @ Xr)  # (n, d)
    gates = preactivations(params_original, ds.X[forget]) >= 0.0  # (k, n)
    weight = np.abs(params_original.u) * (np.asarray(result.lam) @ gates)
    W_tilde = result.theta_hat.W + weight[:, None] * delta
    return type(params_original)(W_tilde, params_original.u)


@dataclass(frozen=True)
class ViolationReport:
    count: int
    total: int
    pairs: tuple  # (neuron, retained row) for the first few flips

    def to_dict(self):
        return {"count": self.count, "total": self.total, "pairs": [list(p) for p in self.pairs]}


def verify_activation_preserved(params_original, params_tilde, retain, keep: int = 20) -> ViolationReport:
    before = preactivations(params_original, retain.X) >= 0.0
    after = preactivations(params_tilde, retain.X) >= 0.0
    rows, cols = np.nonzero(before != after)
    pairs = tuple((int(j), int(r)) for r, j in zip(rows[:keep], cols[:keep]))
    return ViolationReport(count=int(rows.size), total=int(before.size), pairs=pairs)


def margin_shift(params_original, params_tilde, retain) -> np.ndarray:
    return retain.y * (forward(params_tilde, retain.X) - forward(params_original, retain.X))

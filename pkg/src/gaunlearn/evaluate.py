"""Success metrics for unlearning: similarity, certified triples and theorem bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import sample_mixture
from .errors import DimensionError, OrderingError, ParameterError, UndefinedSimilarityError, ValidationError
from .model import forward, margins

WITNESS_KINDS = ("corrected_rescaled", "retrained_linear_maxmargin", "retrained_gd")


def _vec(v):
    return np.asarray(getattr(v, "theta", v), dtype=float).reshape(-1)


def cosine_similarity(a, b) -> float:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("cosine similarity of a zero vector is undefined")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class TheoremTriple:
    eps: float
    delta: float
    tau: float


def _ratio(num, den):
    return num / den if den > 0 else math.inf


def linear_theorem(eps1, delta1, eps_d, m, k=1) -> TheoremTriple:
    """Guarantee for (batch) ascent on a linear predictor; ``k = 1`` is the single-point case."""
    den = m / k - eps_d
    return TheoremTriple(
        eps=eps1 + _ratio(eps1 * eps_d, den),
        delta=delta1 + _ratio(delta1 * eps_d, den) + 7.2 * k * eps_d / m,
        tau=0.0,
    )


def twolayer_theorem(eps1, delta1, eps_d, m, k=1) -> TheoremTriple:
    """Guarantee for (batch) ascent on a two-layer net, witnessed by the corrected parameters."""
    den = m / k - 9 * eps_d
    tau = 82 * eps_d / m if k == 1 else 82 * k * eps_d / (m - k)
    return TheoremTriple(
        eps=eps1 + _ratio(9 * eps_d * eps1, den) + 23 * k * eps_d / math.sqrt(m),
        delta=delta1 + _ratio(9 * eps_d * delta1, den) + 22.6 * k * eps_d / m,
        tau=tau,
    )


def theorem_triple(kind, eps1, delta1, eps_d, m, k=1) -> TheoremTriple:
    if kind == "linear":
        return linear_theorem(eps1, delta1, eps_d, m, k)
    if kind == "twolayer":
        return twolayer_theorem(eps1, delta1, eps_d, m, k)
    raise ParameterError(f"unknown model kind {kind!r}")


@dataclass
class SuccessReport:
    eps_measured: float
    delta_measured: float
    gamma_measured: float
    tau_measured: float
    theorem_eps: float
    theorem_delta: float
    theorem_tau: float
    witness_kind: str
    preconditions_met: bool

    def certifies(self, eps, delta, tau, tol=1e-9) -> bool:
        """True when the witness shows success at level ``(eps, delta, tau)``."""
        return (
            self.gamma_measured <= tol
            and self.eps_measured <= eps + tol
            and self.delta_measured <= delta + tol
            and self.tau_measured <= tau + tol
        )

    def within_theorem(self, slack=0.0, tol=1e-9) -> bool:
        f = 1.0 + slack
        return self.certifies(self.theorem_eps * f, self.theorem_delta * f, self.theorem_tau * f, tol)

    def to_dict(self):
        return asdict(self)


def success_report(
    theta_hat,
    witness,
    witness_cert,
    kind,
    witness_kind,
    *,
    eps1,
    delta1,
    eps_d,
    m,
    k=1,
    preconditions_met=False,
) -> SuccessReport:
    """Measured triple from the witness certificate next to the theorem's predicted triple."""
    if witness_cert is None:
        raise OrderingError("certify the witness on the retain set before reporting success")
    if witness_kind not in WITNESS_KINDS:
        raise ParameterError(f"unknown witness kind {witness_kind!r}")
    bound = theorem_triple(kind, eps1, delta1, eps_d, m, k)
    return SuccessReport(
        eps_measured=witness_cert.eps,
        delta_measured=witness_cert.delta,
        gamma_measured=witness_cert.gamma,
        tau_measured=1.0 - cosine_similarity(theta_hat, witness),
        theorem_eps=bound.eps,
        theorem_delta=bound.delta,
        theorem_tau=bound.tau,
        witness_kind=witness_kind,
        preconditions_met=bool(preconditions_met),
    )


def compare_to_retrain(theta_hat, theta_retrained, retain=None) -> dict:
    """Cosine similarity and, given the retain set, the largest gap between unit-norm margins."""
    out = {"cossim": cosine_similarity(theta_hat, theta_retrained), "margin_max_abs_diff_on_retain": None}
    if retain is not None:
        a = theta_hat.with_theta(theta_hat.theta / np.linalg.norm(theta_hat.theta))
        b = theta_retrained.with_theta(theta_retrained.theta / np.linalg.norm(theta_retrained.theta))
        out["margin_max_abs_diff_on_retain"] = float(np.max(np.abs(margins(a, retain) - margins(b, retain))))
    return out


def identity_baseline(theta_original, witness) -> float:
    """Cosine gap between the untouched model and a retain-set witness."""
    return 1.0 - cosine_similarity(theta_original, witness)


def case2_constant(tau, eps_d, eps1, delta1) -> float:
    """Empirical constant in ``tau <= C (sqrt(eps_d) + sqrt(eps1) + sqrt(delta1))``."""
    scale = math.sqrt(max(eps_d, 0.0)) + math.sqrt(max(eps1, 0.0)) + math.sqrt(max(delta1, 0.0))
    return tau / scale if scale > 0 else math.inf


def generalization_accuracy(params, d: int, alpha: float, n_test: int, seed: int) -> float:
    """Fraction of fresh mixture draws classified strictly correctly."""
    if not (isinstance(n_test, int) and n_test >= 1):
        raise ValidationError(f"n_test must be a positive integer, got {n_test!r}")
    X, y = sample_mixture(n_test, d, alpha, seed, stream=1)
    return float(np.mean(y * forward(params, X) > 0))

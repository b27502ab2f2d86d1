"""Approximate-KKT certificates for the margin-maximization problem.

Multipliers are recovered as the nonnegative least-squares fit of
``theta`` by the signed output gradients ``y_i grad N(x_i)``.  Two modes:
``plain`` uses every point; ``thresholded`` drops points whose margin
exceeds ``1 + kappa`` before the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleRescaleError, ParameterError, ValidationError
from .model import grad_matrix, margins, scale
from .nnls import nnls

MODES = ("plain", "thresholded")
DEFAULT_KAPPA = 0.1


@dataclass(frozen=True, eq=False)
class KktCertificate:
    lam: np.ndarray
    eps: float
    delta: float
    gamma: float
    margins: np.ndarray
    mode: str = "plain"
    kappa: float | None = None

    def to_dict(self):
        return {
            "lambda": self.lam.tolist(),
            "eps": self.eps,
            "delta": self.delta,
            "gamma": self.gamma,
            "margins": self.margins.tolist(),
            "mode": self.mode,
            "kappa": self.kappa,
        }


def _check_mode(mode, kappa):
    if mode not in MODES:
        raise ParameterError(f"unknown certification mode {mode!r}; expected one of {MODES}")
    if mode == "thresholded" and not kappa >= 0:
        raise ParameterError(f"kappa must be nonnegative, got {kappa!r}")


def _signed_columns(params, ds):
    return (ds.y[:, None] * grad_matrix(params, ds.X)).T


def extract_multipliers(params, ds, mode: str = "plain", kappa: float = DEFAULT_KAPPA) -> np.ndarray:
    _check_mode(mode, kappa)
    A = _signed_columns(params, ds)
    keep = np.ones(ds.m, dtype=bool)
    if mode == "thresholded":
        keep = margins(params, ds) <= 1.0 + kappa
    lam = np.zeros(ds.m)
    if keep.any():
        lam[keep] = nnls(A[:, keep], params.theta).x
    return lam


def certify(params, ds, lam=None, mode: str = "plain", kappa: float = DEFAULT_KAPPA) -> KktCertificate:
    """Measure stationarity ``eps``, slackness ``delta`` and feasibility gap ``gamma``."""
    _check_mode(mode, kappa)
    if lam is None:
        lam = extract_multipliers(params, ds, mode, kappa)
    else:
        lam = np.array(lam, dtype=float)
        if lam.shape != (ds.m,):
            raise ValidationError(f"expected {ds.m} multipliers, got shape {lam.shape}")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValidationError("multipliers must be finite and nonnegative")
    q = margins(params, ds)
    residual = params.theta - _signed_columns(params, ds) @ lam
    return KktCertificate(
        lam=lam,
        eps=float(np.linalg.norm(residual)),
        delta=float(np.max(lam * (q - 1.0))),
        gamma=float(max(0.0, 1.0 - np.min(q))),
        margins=q,
        mode=mode,
        kappa=kappa if mode == "thresholded" else None,
    )


def rescale(params, cert: KktCertificate):
    """Scale by ``1/(1-gamma)`` to restore unit margins; return params and the predicted certificate."""
    g = cert.gamma
    if not g < 1:
        raise InfeasibleRescaleError(f"cannot restore feasibility with gamma = {g!r} >= 1")
    if g == 0:
        return params, cert
    C = 1.0 / (1.0 - g)
    predicted = KktCertificate(
        lam=cert.lam * C,
        eps=cert.eps * C,
        delta=float(np.max(cert.lam)) * g * C + cert.delta * C,
        gamma=0.0,
        margins=cert.margins * C,
        mode=cert.mode,
        kappa=cert.kappa,
    )
    return scale(params, C), predicted


def rescaled_delta_bound(cert: KktCertificate) -> float:
    """Slackness bound that holds when the multipliers are scaled along with the parameters.

    With ``C = 1/(1-gamma)`` and multipliers ``C * lam`` the slack of point
    ``i`` is ``C lam_i (C q_i - 1) <= C (C-1) max(lam) + C^2 delta``.
    """
    C = 1.0 / (1.0 - cert.gamma)
    return C * (C - 1.0) * float(np.max(cert.lam)) + C * C * cert.delta


def normalize_margin(params, ds):
    """Scale so the smallest margin on ``ds`` is exactly one (up to rounding)."""
    q_min = float(np.min(margins(params, ds)))
    if not q_min > 0:
        raise InfeasibleRescaleError(f"minimum margin {q_min!r} is not positive; data not separated")
    return scale(params, 1.0 / q_min)


@dataclass
class BoundsReport:
    kind: str
    applicable: bool
    reason: str
    lower: list
    upper: list
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {
            "kind": self.kind,
            "applicable": self.applicable,
            "reason": self.reason,
            "lower": self.lower,
            "upper": self.upper,
            "violations": self.violations,
            "passed": self.passed,
        }


def multiplier_bounds_report(cert, report, kind, *, eps1, delta1, n=None, eps_d=None, sq_norms=None) -> BoundsReport:
    """Check recovered multipliers against the a-priori bounds for each model.

    Linear: ``max lam <= 2.4`` and, per point, the two-sided bound around
    ``1/|x_t|^2`` (needs ``sq_norms``).  Two-layer:
    ``0.9 - 4.64 eps_d/n - 1.92 eps1 <= lam_i <= 20.4 n``.
    Bounds are always evaluated; ``applicable`` says whether the
    data/accuracy preconditions under which they are guaranteed hold.
    """
    lam = np.asarray(cert.lam)
    reasons = []
    if report.psi > 0.1:
        reasons.append(f"psi={report.psi:.4g} > 0.1")
    if kind == "linear":
        if sq_norms is None:
            raise ValidationError("linear bounds need the squared sample norms")
        eps_d = report.eps_d_linear if eps_d is None else eps_d
        if report.phi > eps_d / (4 * report.m):
            reasons.append(f"phi={report.phi:.4g} > eps_d/(4m)")
        for name, v in (("eps_d", eps_d), ("eps", eps1), ("delta", delta1)):
            if v > 0.5:
                reasons.append(f"{name}={v:.4g} > 0.5")
        sq = np.asarray(sq_norms, dtype=float)
        lower = (1.0 - 0.6 * eps_d - 1.1 * eps1) / sq
        upper = np.minimum((1.0 + 1.2 * eps_d + 2.15 * eps1 + 2.2 * delta1) / sq, 2.4)
    elif kind == "twolayer":
        if n is None:
            raise ValidationError("two-layer bounds need the width n")
        eps_d = report.eps_d_twolayer(n) if eps_d is None else eps_d
        if report.phi > eps_d / (4 * report.m * n):
            reasons.append(f"phi={report.phi:.4g} > eps_d/(4mn)")
        for name, v in (("eps_d", eps_d), ("eps", eps1), ("delta", delta1)):
            if not 0 < v <= 1:
                reasons.append(f"{name}={v:.4g} outside (0, 1]")
        lower = np.full(lam.shape, 0.9 - 4.64 * eps_d / n - 1.92 * eps1)
        upper = np.full(lam.shape, 20.4 * n)
    else:
        raise ParameterError(f"unknown model kind {kind!r}")
    bad = np.flatnonzero((lam < lower) | (lam > upper))
    return BoundsReport(
        kind=kind,
        applicable=not reasons,
        reason="; ".join(reasons) if reasons else "preconditions hold",
        lower=lower.tolist(),
        upper=upper.tolist(),
        violations=[int(i) for i in bad],
    )

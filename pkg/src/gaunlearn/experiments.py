"""Seeded experiment runs: pipeline, step-size sweep and generalization.

Every random choice draws from ``derive_seed(master, stage, index)``, the
first eight bytes (big-endian) of ``sha256(f"{master}/{stage}/{index}")``.
Records are plain JSON; only the ``timings`` block varies between reruns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as dsm
from . import kkt
from . import model as mdl
from .errors import NumericalError, ParseError, ValidationError
from .evaluate import (
    case2_constant,
    compare_to_retrain,
    cosine_similarity,
    generalization_accuracy,
    identity_baseline,
    success_report,
    theorem_triple,
)
from .trainer import TrainConfig, train_gd, train_maxmargin_linear
from .unlearn import build_correction, margin_shift, unlearn_kga, verify_activation_preserved

log = logging.getLogger(__name__)

EXPERIMENTS = ("gen", "train", "certify", "unlearn", "sweep", "batch", "generalize", "pipeline")
SWEEP_HEADER = ("forget_index", "fraction", "eps", "delta", "tau", "cossim_witness")
EPS_D_CAP = 0.01
NORMALIZATION_NOTE = (
    "trained parameters are divided by their minimum training margin before certification, "
    "so the smallest margin is 1; the loss itself is not modified"
)


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{master}/{stage}/{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------- configuration


@dataclass
class DatasetSpec:
    kind: str = "isotropic"
    m: int = 10
    d: int = 1000
    alpha: float | None = None
    labels: list | None = None
    path: str | None = None


@dataclass
class ModelSpec:
    variant: str = "linear"
    n: int = 400
    init_scale: float = 1e-5


@dataclass
class ForgetSpec:
    indices: list | None = None
    count: int | None = None


@dataclass
class SweepSpec:
    fractions: list | None = None
    indices: list | None = None


@dataclass
class GeneralizeSpec:
    n_test: int = 1000
    batch: int = 3


@dataclass
class ExperimentConfig:
    seed: int
    experiment: str = "pipeline"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    forget: ForgetSpec = field(default_factory=ForgetSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    generalize: GeneralizeSpec = field(default_factory=GeneralizeSpec)
    eps_d: float | None = None
    mode: str = "plain"
    kappa: float = kkt.DEFAULT_KAPPA
    retrain: bool = False

    def to_dict(self):
        return asdict(self)


def _section(cls, doc, name):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ParseError(f"config field {name!r}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(doc) - known
    if extra:
        raise ParseError(f"config field {name!r}: unknown keys {sorted(extra)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"config field {name!r}: {exc}") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    if "seed" not in doc:
        raise ParseError("config field 'seed': missing (the master seed is mandatory)")
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(doc) - known
    if extra:
        raise ParseError(f"config: unknown keys {sorted(extra)}")
    cfg = ExperimentConfig(
        seed=doc["seed"],
        experiment=doc.get("experiment", "pipeline"),
        dataset=_section(DatasetSpec, doc.get("dataset"), "dataset"),
        model=_section(ModelSpec, doc.get("model"), "model"),
        train=_section(TrainConfig, doc.get("train"), "train"),
        forget=_section(ForgetSpec, doc.get("forget"), "forget"),
        sweep=_section(SweepSpec, doc.get("sweep"), "sweep"),
        generalize=_section(GeneralizeSpec, doc.get("generalize"), "generalize"),
        eps_d=doc.get("eps_d"),
        mode=doc.get("mode", "plain"),
        kappa=doc.get("kappa", kkt.DEFAULT_KAPPA),
        retrain=doc.get("retrain", False),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ValidationError(f"config field 'seed': expected an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.experiment not in EXPERIMENTS:
        raise ValidationError(f"config field 'experiment': unknown value {cfg.experiment!r}")
    if cfg.dataset.kind not in dsm.KINDS:
        raise ValidationError(f"config field 'dataset.kind': unknown value {cfg.dataset.kind!r}")
    if cfg.model.variant not in ("linear", "twolayer"):
        raise ValidationError(f"config field 'model.variant': unknown value {cfg.model.variant!r}")
    if cfg.mode not in kkt.MODES:
        raise ValidationError(f"config field 'mode': expected one of {kkt.MODES}, got {cfg.mode!r}")
    if cfg.eps_d is not None and not cfg.eps_d >= 0:
        raise ValidationError(f"config field 'eps_d': must be nonnegative, got {cfg.eps_d!r}")
    if cfg.forget.indices is not None and cfg.forget.count is not None:
        raise ValidationError("config field 'forget': give either 'indices' or 'count', not both")
    if not (isinstance(cfg.generalize.n_test, int) and cfg.generalize.n_test >= 1):
        raise ValidationError(f"config field 'generalize.n_test': must be a positive integer, got {cfg.generalize.n_test!r}")


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_dict(doc)


# ---------------------------------------------------------------- records


@dataclass
class RunRecord:
    config: dict
    experiment: str
    version: str = __version__
    notes: dict = field(default_factory=dict)
    assumption: dict | None = None
    train: dict | None = None
    certificates: dict = field(default_factory=dict)
    unlearn: dict | None = None
    success: dict | None = None
    metrics: dict = field(default_factory=dict)
    error: dict | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def numeric_view(self) -> dict:
        """Everything except wall-clock timings; equal across reruns with the same seed."""
        out = self.to_dict()
        out.pop("timings")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "run.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


class StageError(Exception):
    """A stage failed; carries the stage name, the cause and the partial record."""

    def __init__(self, stage, cause, record):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.record = record


@contextmanager
def _stage(record: RunRecord, name: str):
    start = time.perf_counter()
    try:
        yield
    except (ValidationError, NumericalError) as exc:
        record.error = {"stage": name, "type": type(exc).__name__, "message": str(exc)}
        raise StageError(name, exc, record) from exc
    finally:
        record.timings[name] = time.perf_counter() - start


# ---------------------------------------------------------------- stages


def build_dataset(cfg: ExperimentConfig) -> dsm.Dataset:
    spec = cfg.dataset
    if spec.path:
        return dsm.load(spec.path)
    seed = derive_seed(cfg.seed, "dataset")
    if spec.kind == "isotropic":
        return dsm.gen_isotropic(spec.m, spec.d, seed, spec.labels)
    if spec.kind == "mixture":
        return dsm.gen_mixture(spec.m, spec.d, spec.alpha, seed)
    labels = spec.labels
    if labels is None:
        rng = np.random.default_rng(derive_seed(cfg.seed, "labels"))
        labels = np.where(rng.integers(2, size=spec.m) == 1, 1, -1).tolist()
    return dsm.gen_orthonormal(spec.m, spec.d, labels)


def initial_params(cfg: ExperimentConfig, d: int):
    if cfg.model.variant == "linear":
        return mdl.init_linear(d)
    return mdl.init_twolayer(cfg.model.n, d, cfg.model.init_scale, derive_seed(cfg.seed, "init"))


def forget_indices(cfg: ExperimentConfig, m: int) -> list:
    if cfg.forget.count is not None:
        k = cfg.forget.count
        if not (isinstance(k, int) and 1 <= k < m):
            raise ValidationError(f"config field 'forget.count': need 1 <= count < m = {m}, got {k!r}")
        rng = np.random.default_rng(derive_seed(cfg.seed, "forget"))
        return sorted(int(i) for i in rng.permutation(m)[:k])
    idx = [0] if cfg.forget.indices is None else cfg.forget.indices
    return sorted({int(i) for i in idx})


def correction_eps_d(cfg: ExperimentConfig, report: dsm.AssumptionReport, n: int) -> float:
    if cfg.eps_d is not None:
        return float(cfg.eps_d)
    audited = report.eps_d_twolayer(n)
    if audited > EPS_D_CAP:
        log.warning("audited eps_d = %.4g exceeds %.2g; clamping the correction target", audited, EPS_D_CAP)
        return EPS_D_CAP
    return audited


def preconditions(kind, report, eps_d, eps1, delta1, n=None) -> bool:
    if kind == "linear":
        return report.holds_linear(0.1, eps_d) and eps_d < 0.1 and 0 < eps1 <= 0.5 and 0 < delta1 <= 0.5
    return report.holds_twolayer(0.1, eps_d, n) and 0 < eps_d <= 0.01 and 0 < eps1 <= 1 and 0 < delta1 <= 1


@dataclass
class Trained:
    ds: dsm.Dataset
    report: dsm.AssumptionReport
    raw: object
    params: object  # normalized to unit minimum margin
    cert: kkt.KktCertificate | None


def prepare(cfg: ExperimentConfig, record: RunRecord, upto: str = "certify") -> Trained:
    """Generate, train, normalize and certify, filling the record as stages complete."""
    record.notes["loss_normalization"] = NORMALIZATION_NOTE
    with _stage(record, "gen"):
        ds = build_dataset(cfg)
        report = dsm.audit(ds)
        record.assumption = report.to_dict()
        if cfg.model.variant == "twolayer":
            record.assumption["eps_d_twolayer"] = report.eps_d_twolayer(cfg.model.n)
        if ds.kind == "mixture":
            record.assumption["mixture_norm"] = ds.d ** (-ds.alpha)
    if upto == "gen":
        return Trained(ds, report, None, None, None)
    with _stage(record, "train"):
        raw, train_report = train_gd(initial_params(cfg, ds.d), ds, cfg.train)
        record.train = train_report.to_dict()
    if upto == "train":
        return Trained(ds, report, raw, None, None)
    with _stage(record, "certify"):
        record.metrics["normalization_scale"] = 1.0 / float(np.min(mdl.margins(raw, ds)))
        params = kkt.normalize_margin(raw, ds)
        cert = kkt.certify(params, ds, mode=cfg.mode, kappa=cfg.kappa)
        record.certificates["original"] = cert.to_dict()
    return Trained(ds, report, raw, params, cert)


def _certify_and_rescale(params, retain, cfg):
    cert = kkt.certify(params, retain, mode=cfg.mode, kappa=cfg.kappa)
    rescaled, predicted = kkt.rescale(params, cert)
    recert = kkt.certify(rescaled, retain, mode=cfg.mode, kappa=cfg.kappa)
    return cert, rescaled, predicted, recert


def _witness_linear(retain, cfg):
    w_star = train_maxmargin_linear(retain)
    witness = mdl.LinearParams(w_star)
    return witness, kkt.certify(witness, retain, mode=cfg.mode, kappa=cfg.kappa)


def run_pipeline(cfg: ExperimentConfig) -> RunRecord:
    """gen, train, certify, unlearn, witness, success report and identity baseline."""
    record = RunRecord(config=cfg.to_dict(), experiment=cfg.experiment)
    t = prepare(cfg, record)
    ds, params, cert = t.ds, t.params, t.cert
    kind = cfg.model.variant
    n = cfg.model.n if kind == "twolayer" else None

    with _stage(record, "unlearn"):
        forget = forget_indices(cfg, ds.m)
        if cfg.experiment == "unlearn" and len(forget) != 1:
            raise ValidationError(f"'unlearn' forgets exactly one point; got {len(forget)} (use 'batch')")
        result = unlearn_kga(params, ds, forget, cert.lam, cfg.train.loss)
        retain, _ = dsm.split_forget(ds, forget)
        k = len(forget)

    with _stage(record, "witness"):
        cert_hat, hat_rescaled, predicted, recert_hat = _certify_and_rescale(result.theta_hat, retain, cfg)
        record.certificates["unlearned_vs_retain"] = cert_hat.to_dict()
        record.certificates["unlearned_rescaled"] = recert_hat.to_dict()
        if kind == "linear":
            witness, witness_cert = _witness_linear(retain, cfg)
            witness_kind = "retrained_linear_maxmargin"
            eps_d = t.report.eps_d_linear if cfg.eps_d is None else float(cfg.eps_d)
        else:
            eps_d_corr = correction_eps_d(cfg, t.report, n)
            tilde = build_correction(params, result, ds, eps_d_corr)
            cert_tilde, witness, _, witness_cert = _certify_and_rescale(tilde, retain, cfg)
            factor = 1.0 / (1.0 - cert_tilde.gamma)
            result = result.with_witness(tilde, eps_d_corr / (2 * ds.m * n), factor)
            violations = verify_activation_preserved(params, tilde, retain)
            shifts = margin_shift(params, tilde, retain)
            record.certificates["corrected"] = cert_tilde.to_dict()
            record.metrics.update(
                correction_eps_d=eps_d_corr,
                activation_violations=violations.to_dict(),
                max_margin_shift=float(np.max(np.abs(shifts))),
                margin_shift_bound=9 * k * eps_d_corr / (ds.m * n),
                correction_norm=float(np.linalg.norm(tilde.theta - result.theta_hat.theta)),
                correction_norm_bound=22 * k * eps_d_corr / np.sqrt(ds.m),
            )
            eps_d = eps_d_corr
            witness_kind = "corrected_rescaled"
        record.certificates["witness"] = witness_cert.to_dict()
        met = preconditions(kind, t.report, eps_d, cert.eps, cert.delta, n)
        report = success_report(
            result.theta_hat, witness, witness_cert, kind, witness_kind,
            eps1=cert.eps, delta1=cert.delta, eps_d=eps_d, m=ds.m, k=k, preconditions_met=met,
        )
        record.success = report.to_dict()
        record.success["eps_d"] = eps_d
        if kind == "linear":
            bound = theorem_triple("linear", cert.eps, cert.delta, eps_d, ds.m, k)
            record.metrics["direction_certificate_within_theorem"] = bool(
                recert_hat.gamma <= 1e-9
                and recert_hat.eps <= bound.eps + 1e-9
                and recert_hat.delta <= bound.delta + 1e-9
            )
            record.metrics["case2_constant"] = case2_constant(report.tau_measured, eps_d, cert.eps, cert.delta)
        record.unlearn = {
            "forget": list(result.forget),
            "lambda": list(result.lam),
            "beta": list(result.beta),
            "c": result.c,
            "rescale_factor": result.rescale_factor,
            "step_norm": float(np.linalg.norm(result.theta_hat.theta - params.theta)),
        }

    with _stage(record, "evaluate"):
        record.metrics["identity_gap"] = identity_baseline(params, witness)
        record.metrics["unlearned_gap"] = report.tau_measured
        if kind == "twolayer" and cfg.retrain:
            retrained, _ = train_gd(initial_params(cfg, ds.d), retain, cfg.train)
            retrained = kkt.normalize_margin(retrained, retain)
            record.metrics["retrained_gd"] = compare_to_retrain(result.theta_hat, retrained, retain)
        elif kind == "linear":
            record.metrics["retrained_maxmargin"] = compare_to_retrain(result.theta_hat, witness, retain)
        sq = np.einsum("ij,ij->i", ds.X, ds.X)
        bounds = kkt.multiplier_bounds_report(
            cert, t.report, kind, eps1=cert.eps, delta1=cert.delta, n=n,
            eps_d=eps_d if kind == "twolayer" else None, sq_norms=sq,
        )
        record.metrics["multiplier_bounds"] = bounds.to_dict()
    return record


def default_fractions():
    return [i / 10 for i in range(16)]


def run_sweep(cfg: ExperimentConfig):
    """Scale the exact ascent step by each fraction and certify against the retain set.

    Returns ``(record, rows)`` where rows follow ``SWEEP_HEADER`` in ``(l, f)`` order.
    """
    record = RunRecord(config=cfg.to_dict(), experiment="sweep")
    t = prepare(cfg, record)
    ds, params, cert = t.ds, t.params, t.cert
    fractions = default_fractions() if cfg.sweep.fractions is None else [float(f) for f in cfg.sweep.fractions]
    indices = list(range(ds.m)) if cfg.sweep.indices is None else [int(i) for i in cfg.sweep.indices]
    other_mode = "thresholded" if cfg.mode == "plain" else "plain"
    rows = []
    eps_sum = np.zeros(len(fractions))
    other_sum = np.zeros(len(fractions))
    with _stage(record, "sweep"):
        for l in indices:
            result = unlearn_kga(params, ds, [l], cert.lam, cfg.train.loss)
            retain, _ = dsm.split_forget(ds, [l])
            step = result.theta_hat.theta - params.theta
            if cfg.model.variant == "linear":
                witness = mdl.LinearParams(train_maxmargin_linear(retain))
            else:
                n = cfg.model.n
                tilde = build_correction(params, result, ds, correction_eps_d(cfg, t.report, n))
                witness, _ = kkt.rescale(tilde, kkt.certify(tilde, retain, mode=cfg.mode, kappa=cfg.kappa))
            for i, f in enumerate(fractions):
                moved = params.with_theta(params.theta + f * step)
                c = kkt.certify(moved, retain, mode=cfg.mode, kappa=cfg.kappa)
                alt = kkt.certify(moved, retain, mode=other_mode, kappa=cfg.kappa)
                cos = cosine_similarity(moved, witness)
                rows.append((l, f, c.eps, c.delta, 1.0 - cos, cos))
                eps_sum[i] += c.eps
                other_sum[i] += alt.eps
    means = eps_sum / len(indices)
    record.metrics["fractions"] = fractions
    record.metrics["eps_mean"] = means.tolist()
    record.metrics[f"eps_mean_{other_mode}"] = (other_sum / len(indices)).tolist()
    record.metrics["argmin_fraction"] = fractions[int(np.argmin(means))]
    return record, rows


def write_sweep_csv(rows, out_dir) -> Path:
    path = Path(out_dir) / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for l, f, eps, delta, tau, cos in rows:
            writer.writerow([l, repr(f), repr(eps), repr(delta), repr(tau), repr(cos)])
    return path


def run_generalize(cfg: ExperimentConfig) -> RunRecord:
    """Test accuracy on fresh mixture draws before and after single and batch unlearning."""
    if cfg.dataset.kind != "mixture":
        raise ValidationError("generalization runs need a mixture dataset")
    record = RunRecord(config=cfg.to_dict(), experiment="generalize")
    t = prepare(cfg, record)
    ds, params, cert = t.ds, t.params, t.cert
    spec = cfg.generalize
    test_seed = derive_seed(cfg.seed, "test")
    with _stage(record, "generalize"):
        acc = lambda p: generalization_accuracy(p, ds.d, ds.alpha, spec.n_test, test_seed)  # noqa: E731
        record.metrics["accuracy_original"] = acc(params)
        indices = list(range(ds.m)) if cfg.forget.indices is None else forget_indices(cfg, ds.m)
        record.metrics["accuracy_single"] = {
            str(l): acc(unlearn_kga(params, ds, [l], cert.lam, cfg.train.loss).theta_hat) for l in indices
        }
        if spec.batch:
            if not 1 <= spec.batch < ds.m:
                raise ValidationError(f"config field 'generalize.batch': need 1 <= batch < m, got {spec.batch}")
            rng = np.random.default_rng(derive_seed(cfg.seed, "forget-batch"))
            batch = sorted(int(i) for i in rng.permutation(ds.m)[: spec.batch])
            record.metrics["batch_forget"] = batch
            record.metrics["accuracy_batch"] = acc(unlearn_kga(params, ds, batch, cert.lam, cfg.train.loss).theta_hat)
    return record


def run_partial(cfg: ExperimentConfig, upto: str):
    """Run gen, train or certify alone; returns the record and the prepared state."""
    record = RunRecord(config=cfg.to_dict(), experiment=upto)
    t = prepare(cfg, record, upto=upto)
    return record, t

import math

import numpy as np
import pytest

from gaunlearn import dataset, kkt, model, trainer
from gaunlearn.errors import DivergenceError, OracleError, ParameterError


class TestLoss:
    def test_zero_margin_logistic(self):
        p = model.LinearParams([0.0, 0.0, 0.0])
        assert trainer.empirical_loss(p, dataset.gen_orthonormal(3, 3, [1, -1, 1]), "logistic") == pytest.approx(math.log(2), abs=1e-15)

    def test_unit_margin_exponential(self, ortho3):
        p = model.LinearParams([1.0, -1.0, 1.0])
        assert trainer.empirical_loss(p, ortho3, "exponential") == pytest.approx(math.exp(-1), abs=1e-15)

    def test_decreases_with_scale(self, ortho3):
        values = [trainer.empirical_loss(model.LinearParams(np.array([1.0, -1.0, 1.0]) * c), ortho3, "logistic") for c in (1, 10, 100)]
        assert values[0] > values[1] > values[2] > 0

    def test_derivative_values(self):
        assert trainer.loss_derivative("logistic", 1.0) == pytest.approx(-1 / (1 + math.e), abs=1e-15)
        assert trainer.loss_derivative("logistic", 1.0) == pytest.approx(-0.268941, abs=1e-6)
        assert trainer.loss_derivative("exponential", 0.0) == -1.0
        for loss in trainer.LOSSES:
            for q in (-5.0, 0.0, 5.0):
                assert trainer.loss_derivative(loss, q) < 0

    def test_derivative_matches_finite_difference(self):
        h = 1e-6
        for loss in trainer.LOSSES:
            for q in (-2.0, 0.3, 4.0):
                fd = (trainer.loss_value(loss, q + h) - trainer.loss_value(loss, q - h)) / (2 * h)
                assert trainer.loss_derivative(loss, q) == pytest.approx(fd, rel=1e-7)

    def test_unknown_loss(self):
        with pytest.raises(ParameterError):
            trainer.loss_derivative("hinge", 0.0)


class TestTrainGd:
    def test_zero_lr_is_noop(self, ortho3):
        p0 = model.LinearParams([0.1, 0.2, 0.3])
        p, rep = trainer.train_gd(p0, ortho3, trainer.TrainConfig(lr=0.0, epochs=25))
        assert p == p0 and rep.epochs_run == 25

    def test_orthonormal_direction(self, ortho3):
        p, rep = trainer.train_gd(model.init_linear(3), ortho3, trainer.TrainConfig(lr=1.0, epochs=3000))
        target = np.array([1.0, -1.0, 1.0]) / math.sqrt(3)
        assert p.w @ target / np.linalg.norm(p.w) >= 0.999
        assert rep.final_loss < 0.01 and rep.epochs_run == 3000

    def test_monotone_loss(self, ortho3):
        p = model.init_linear(3)
        losses = []
        for _ in range(50):
            p, rep = trainer.train_gd(p, ortho3, trainer.TrainConfig(lr=0.5, epochs=1))
            losses.append(rep.final_loss)
        assert all(b <= a for a, b in zip(losses, losses[1:]))

    def test_threshold_stops_early(self, ortho3):
        _, rep = trainer.train_gd(model.init_linear(3), ortho3, trainer.TrainConfig(lr=1.0, epochs=10_000, loss_threshold=0.1))
        assert rep.final_loss < 0.1 and rep.epochs_run < 10_000
        assert rep.loss_curve[-1] == [rep.epochs_run, rep.final_loss]

    def test_twolayer_reaches_low_loss(self):
        ds = dataset.gen_isotropic(6, 200, seed=3)
        p0 = model.init_twolayer(40, 200, 1e-5, seed=1)
        p, rep = trainer.train_gd(p0, ds, trainer.TrainConfig(lr=1.0, epochs=4000, weight_decay=1e-5, loss_threshold=1 / 6))
        assert rep.final_loss < 1 / 6
        assert np.array_equal(p.u, p0.u)

    def test_deterministic(self):
        ds = dataset.gen_isotropic(5, 30, seed=2)
        cfg = trainer.TrainConfig(lr=0.5, epochs=300, weight_decay=1e-4)
        a = trainer.train_gd(model.init_twolayer(8, 30, 1e-3, seed=2), ds, cfg)
        b = trainer.train_gd(model.init_twolayer(8, 30, 1e-3, seed=2), ds, cfg)
        assert a[0] == b[0] and a[1] == b[1]

    def test_divergence(self, ortho3):
        with pytest.raises(DivergenceError) as info:
            trainer.train_gd(model.LinearParams([-800.0, 0.0, 0.0]), ortho3, trainer.TrainConfig(loss="exponential", lr=1.0, epochs=5))
        assert info.value.epoch == 0

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            trainer.TrainConfig(lr=-1.0)
        with pytest.raises(ParameterError):
            trainer.TrainConfig(loss_threshold=0.0)


class TestMaxMargin:
    def test_two_point(self, two_point):
        assert np.allclose(trainer.train_maxmargin_linear(two_point), [1.0, -1.0], atol=1e-12)

    def test_orthonormal(self, ortho3):
        assert np.allclose(trainer.train_maxmargin_linear(ortho3), [1.0, -1.0, 1.0], atol=1e-12)

    def test_duplicate_point(self, two_point):
        dup = dataset.Dataset(np.vstack([two_point.X, two_point.X[:1]]), np.append(two_point.y, 1.0), "isotropic")
        assert np.allclose(trainer.train_maxmargin_linear(dup), [1.0, -1.0], atol=1e-8)

    def test_matches_qp_solution(self):
        # compare with scipy's bounded least squares on the dual's Cholesky form
        from scipy.optimize import minimize

        ds = dataset.gen_isotropic(8, 20, seed=5)
        w = trainer.train_maxmargin_linear(ds)
        Z = ds.y[:, None] * ds.X
        res = minimize(lambda v: 0.5 * v @ v, np.zeros(20), jac=lambda v: v,
                       constraints=[{"type": "ineq", "fun": lambda v: Z @ v - 1.0, "jac": lambda v: Z}],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        assert np.min(Z @ w) == pytest.approx(1.0, abs=1e-8)
        assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(res.x), rel=1e-6)

    def test_certifies_as_exact_kkt(self):
        ds = dataset.gen_isotropic(6, 40, seed=8)
        w = model.LinearParams(trainer.train_maxmargin_linear(ds))
        cert = kkt.certify(w, ds)
        assert cert.eps <= 1e-6 and cert.delta <= 1e-6 and cert.gamma <= 1e-8

    def test_gd_cross_check(self):
        ds = dataset.gen_isotropic(5, 50, seed=4)
        w_dca = trainer.train_maxmargin_linear(ds)
        w_gd = trainer.maxmargin_linear_gd(ds, epochs=20_000)
        cos = w_dca @ w_gd / (np.linalg.norm(w_dca) * np.linalg.norm(w_gd))
        assert cos > 0.999

    def test_non_separable(self):
        ds = dataset.Dataset(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([1.0, -1.0]), "isotropic")
        with pytest.raises(OracleError):
            trainer.train_maxmargin_linear(ds, max_sweeps=2000)

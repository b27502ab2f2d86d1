import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaunlearn import dataset, evaluate, kkt, model, trainer, unlearn
from gaunlearn.errors import DimensionError, OrderingError, UndefinedSimilarityError, ValidationError


class TestCosine:
    def test_examples(self):
        assert evaluate.cosine_similarity([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
        assert evaluate.cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
        assert evaluate.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_accepts_params(self):
        assert evaluate.cosine_similarity(model.LinearParams([1.0, 0.0]), model.LinearParams([1.0, 1.0])) == pytest.approx(1 / math.sqrt(2))

    def test_zero_vector(self):
        with pytest.raises(UndefinedSimilarityError):
            evaluate.cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate.cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scale_invariance_and_range(self, seed, c):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(7), rng.standard_normal(7)
        s = evaluate.cosine_similarity(a, b)
        assert -1.0 <= s <= 1.0
        assert evaluate.cosine_similarity(a, c * b) == pytest.approx(s, abs=1e-14)

    def test_random_high_dimensional_vectors(self):
        sims = [abs(evaluate.cosine_similarity(*np.random.default_rng(s).standard_normal((2, 1000)))) for s in range(100)]
        assert max(sims) < 0.2


class TestTheorem:
    def test_twolayer_spot_check(self):
        t = evaluate.twolayer_theorem(0.01, 0.01, 0.01, 100)
        assert t.eps == pytest.approx(0.0330090, abs=1e-7)
        assert t.tau == pytest.approx(82 * 0.01 / 100)

    def test_linear_formulas(self):
        t = evaluate.linear_theorem(0.1, 0.2, 0.05, 10)
        assert t.eps == pytest.approx(0.1 + 0.1 * 0.05 / (10 - 0.05))
        assert t.delta == pytest.approx(0.2 + 0.2 * 0.05 / (10 - 0.05) + 7.2 * 0.05 / 10)
        assert t.tau == 0.0

    def test_vanishing_inputs(self):
        for kind in ("linear", "twolayer"):
            assert evaluate.theorem_triple(kind, 0.0, 0.0, 0.0, 5) == evaluate.TheoremTriple(0.0, 0.0, 0.0)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.01), st.integers(2, 1000))
    def test_single_is_batch_of_one(self, eps1, delta1, eps_d, m):
        for kind in ("linear", "twolayer"):
            a = evaluate.theorem_triple(kind, eps1, delta1, eps_d, m)
            b = evaluate.theorem_triple(kind, eps1, delta1, eps_d, m, k=1)
            assert a == b

    def test_batch_scaling(self):
        t = evaluate.twolayer_theorem(0.0, 0.0, 0.01, 20, k=3)
        assert t.eps == pytest.approx(23 * 3 * 0.01 / math.sqrt(20))
        assert t.delta == pytest.approx(22.6 * 3 * 0.01 / 20)
        assert t.tau == pytest.approx(82 * 3 * 0.01 / 17)
        lin = evaluate.linear_theorem(0.1, 0.1, 0.5, 10, k=2)
        assert lin.delta == pytest.approx(0.1 + 0.05 / 4.5 + 7.2 * 2 * 0.5 / 10)

    def test_nonpositive_denominator(self):
        assert math.isinf(evaluate.linear_theorem(0.1, 0.1, 10.0, 10).eps)


class TestSuccessReport:
    def ortho_case(self):
        ds = dataset.gen_orthonormal(3, 3, [1, -1, 1])
        p = model.LinearParams([1.0, -1.0, 1.0])
        res = unlearn.unlearn_ga(p, ds, 0, kkt.extract_multipliers(p, ds), "logistic")
        retain, _ = dataset.split_forget(ds, [0])
        witness = model.LinearParams(trainer.train_maxmargin_linear(retain))
        return p, res.theta_hat, witness, retain

    def test_orthonormal_zero(self):
        _, hat, witness, retain = self.ortho_case()
        rep = evaluate.success_report(hat, witness, kkt.certify(witness, retain), "linear",
                                      "retrained_linear_maxmargin", eps1=0.0, delta1=0.0, eps_d=0.0, m=3)
        assert rep.tau_measured == pytest.approx(0.0, abs=1e-12)
        assert (rep.eps_measured, rep.delta_measured) == pytest.approx((0.0, 0.0), abs=1e-12)
        assert rep.within_theorem()
        assert rep.to_dict()["witness_kind"] == "retrained_linear_maxmargin"

    def test_uncertified_witness(self):
        _, hat, witness, _ = self.ortho_case()
        with pytest.raises(OrderingError):
            evaluate.success_report(hat, witness, None, "linear", "retrained_gd", eps1=0, delta1=0, eps_d=0, m=3)

    def test_certifies_thresholds(self):
        rep = evaluate.SuccessReport(0.1, 0.2, 0.0, 0.01, 0.1, 0.2, 0.01, "retrained_gd", True)
        assert rep.certifies(0.1, 0.2, 0.01)
        assert not rep.certifies(0.09, 0.2, 0.01)
        assert not evaluate.SuccessReport(0.1, 0.2, 0.5, 0.0, 1, 1, 1, "retrained_gd", True).certifies(1, 1, 1)

    def test_compare_to_retrain(self):
        _, hat, witness, retain = self.ortho_case()
        out = evaluate.compare_to_retrain(hat, witness, retain)
        assert out["cossim"] == pytest.approx(1.0, abs=1e-12)
        assert out["margin_max_abs_diff_on_retain"] == pytest.approx(0.0, abs=1e-12)
        assert evaluate.compare_to_retrain(model.scale(witness, 3.0), witness)["cossim"] == pytest.approx(1.0)

    def test_identity_baseline(self):
        p, hat, witness, _ = self.ortho_case()
        assert evaluate.identity_baseline(p, witness) == pytest.approx(1 - 2 / math.sqrt(6), abs=1e-12)
        assert evaluate.identity_baseline(p, witness) == pytest.approx(0.1835, abs=1e-4)
        assert evaluate.identity_baseline(witness, witness) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("m", [2, 3, 5, 8, 13])
    def test_identity_gap_family(self, m):
        labels = [1 if i % 2 == 0 else -1 for i in range(m)]
        ds = dataset.gen_orthonormal(m, m, labels)
        p = model.LinearParams(np.array(labels, dtype=float))
        retain, _ = dataset.split_forget(ds, [0])
        witness = model.LinearParams(trainer.train_maxmargin_linear(retain))
        assert evaluate.identity_baseline(p, witness) == pytest.approx(1 - math.sqrt((m - 1) / m), abs=1e-12)


class TestAccuracy:
    def test_zero_params(self):
        assert evaluate.generalization_accuracy(model.init_linear(50), 50, 0.1, 100, seed=1) == 0.0

    def test_mean_direction(self):
        w = model.LinearParams(dataset.mixture_mean(2000, 0.1))
        assert evaluate.generalization_accuracy(w, 2000, 0.1, 500, seed=3) >= 0.99

    def test_invalid_count(self):
        with pytest.raises(ValidationError):
            evaluate.generalization_accuracy(model.init_linear(5), 5, 0.1, 0, seed=1)

    def test_deterministic(self):
        w = model.LinearParams(np.random.default_rng(0).standard_normal(30))
        a = evaluate.generalization_accuracy(w, 30, 0.2, 200, seed=9)
        assert a == evaluate.generalization_accuracy(w, 30, 0.2, 200, seed=9)


def test_case2_constant():
    assert evaluate.case2_constant(0.3, 0.01, 0.04, 0.09) == pytest.approx(0.3 / 0.6)
    assert math.isinf(evaluate.case2_constant(0.1, 0.0, 0.0, 0.0))

import math

import numpy as np
import pytest

from netbell import presets
from netbell.correlations import CorrelatorTable
from netbell.inequality import evaluate
from netbell.network import InputAlphabet, seed_network
from netbell.oracle import (
    BudgetExceeded,
    NLocalModel,
    batch_tables,
    correlators_of,
    deterministic_count,
    deterministic_tables,
    enumerate_deterministic,
    make_rng,
    max_linear,
    random_nlocal,
    sample_models,
    verify_quantified,
)


def all_tables(net, **kw):
    return np.concatenate(list(deterministic_tables(net, **kw)))


class TestModel:
    def test_all_plus(self):
        net = presets.expression("bilocal").network
        m = NLocalModel(net, (np.array([1.0]), np.array([1.0])),
                        tuple(np.ones((2,) + (1,) * len(net.sources_of(p)), dtype=int) for p in range(3)))
        assert np.all(correlators_of(m).values == 1.0)

    def test_chsh_constant_strategy(self):
        chsh = presets.seed_linear("chsh")
        m = NLocalModel(chsh.network, (np.array([1.0]),), (np.ones((2, 1)), np.ones((2, 1))))
        assert chsh.value(correlators_of(m)) == 1.0

    def test_validation(self):
        net = seed_network(2)
        with pytest.raises(ValueError):
            NLocalModel(net, (np.array([0.5, 0.6]),), (np.ones((2, 2)), np.ones((2, 2))))
        with pytest.raises(ValueError):
            NLocalModel(net, (np.array([1.0]),), (np.zeros((2, 1)), np.ones((2, 1))))
        with pytest.raises(ValueError):
            NLocalModel(net, (np.array([1.0]),), (np.ones((3, 1)), np.ones((2, 1))))

    def test_batch_matches_single(self):
        net = presets.expression("trilocal").network
        rhos, responses = sample_models(net, 3, make_rng(5), 7)
        flat = batch_tables(net, rhos, responses)
        for i in range(7):
            m = NLocalModel(net, tuple(r[i] for r in rhos), tuple(r[i] for r in responses))
            assert np.allclose(correlators_of(m).values.ravel(), flat[i], atol=1e-14)

    def test_random_nlocal_reproducible(self):
        net = presets.expression("bilocal").network
        a, b = random_nlocal(net, seed=11), random_nlocal(net, seed=11)
        assert all(np.array_equal(x, y) for x, y in zip(a.rho, b.rho))
        assert all(np.array_equal(x, y) for x, y in zip(a.responses, b.responses))
        assert not np.array_equal(random_nlocal(net, seed=12).rho[0], a.rho[0])
        assert [len(r) for r in a.rho] == [4, 4]


class TestEnumeration:
    def test_chsh_count(self):
        net = seed_network(2)
        assert deterministic_count(net) == 16
        assert len(list(enumerate_deterministic(net))) == 16

    def test_single_party(self):
        net = seed_network(1, [InputAlphabet((0, 1, 2))])
        assert len(all_tables(net)) == 8

    def test_models_match_tables(self):
        net = seed_network(2)
        models = list(enumerate_deterministic(net, hidden=2, dedup=False))
        tables = all_tables(net, hidden=2, dedup=False)
        assert len(models) == len(tables) == deterministic_count(net, 2, dedup=False) == 2 * 16 * 16
        for i in range(len(models)):
            assert models[i].is_deterministic
            assert np.array_equal(correlators_of(models[i]).values.ravel(), tables[i])

    def test_dedup_covers_full_enumeration(self):
        net = presets.expression("bilocal").network
        full = {tuple(t) for t in all_tables(net, hidden=2, dedup=False, budget=10**6)}
        dedup = {tuple(t) for t in all_tables(net)}
        assert full == dedup and len(dedup) == 64

    def test_budget(self):
        net = presets.expression("trilocal").network
        with pytest.raises(BudgetExceeded):
            next(deterministic_tables(net, budget=10))
        with pytest.raises(BudgetExceeded):
            next(enumerate_deterministic(net, budget=10))


class TestMaxLinear:
    @pytest.mark.parametrize("name,bound", [("chsh", 1.0), ("mermin", 1.0), ("i3322", 4.0)])
    def test_seed_bounds(self, name, bound):
        assert max_linear(presets.seed_linear(name)) == pytest.approx(bound, abs=1e-12)

    def test_bilocal_chsh_hidden(self):
        # CHSH on the first two parties of a bilocal network
        lin = presets.seed_linear("chsh")
        assert max_linear(lin, hidden=2, dedup=False) == pytest.approx(1.0, abs=1e-12)

    def test_mixtures_never_exceed(self):
        lin = presets.seed_linear("mermin")
        best = max_linear(lin)
        rhos, responses = sample_models(lin.network, 4, make_rng(2), 5000)
        vals = batch_tables(lin.network, rhos, responses) @ lin.coefficient_array().ravel()
        assert vals.max() <= best + 1e-12


class TestBilocalOracle:
    def setup_method(self):
        self.expr = presets.expression("bilocal")
        self.tables = all_tables(self.expr.network)

    def test_argmin_certifies(self):
        # the reported q satisfies the quantified constraint directly
        for flat in self.tables:
            t = CorrelatorTable(self.expr.network, flat.reshape(self.expr.network.shape))
            res = evaluate(self.expr, t)
            if res.unbounded:
                continue
            s_plus, s_minus = res.group_values[:2]
            q = res.argmin_q[0]
            lhs = (0.0 if s_plus == 0 else s_plus / q) + (0.0 if s_minus == 0 else s_minus / (1 - q))
            assert lhs <= 1 + 1e-12

    def test_sqrt_form_maximum(self):
        e = presets.expression("bilocal_abs")
        vals = e.group_values(self.tables)
        assert np.max(np.sqrt(vals[:, 0]) + np.sqrt(vals[:, 1])) == pytest.approx(1.0, abs=1e-12)

    def test_sampled_models_feasible(self):
        for seed in range(50):
            m = random_nlocal(self.expr.network, seed=seed)
            assert not evaluate(self.expr, correlators_of(m)).violated


class TestVerify:
    def test_corrupted_bound(self):
        chsh = presets.load_seed("chsh")
        bad = type(chsh)(chsh.network, chsh.k, chsh.groups, 0.5)
        v = verify_quantified(bad, num_mixture_samples=10, seed=0)
        assert not v.verified and v.counterexample["kind"] == "deterministic"
        assert v.counterexample["min_lhs"] == pytest.approx(1.0)

    def test_bilocal_small(self):
        v = verify_quantified(presets.expression("bilocal"), num_mixture_samples=5000, seed=3)
        assert v.verified and v.strategy_count == 64 and v.sample_count == 5000
        assert v.max_lhs_seen <= 1.0 + 1e-12
        d = v.to_dict()
        assert "not a proof" in d["note"] and d["sample_cardinality"] == [4, 4]

    def test_mixture_counterexample_has_trace(self):
        chsh = presets.load_seed("chsh")
        bad = type(chsh)(chsh.network, chsh.k, chsh.groups, 0.2)
        v = verify_quantified(bad, num_mixture_samples=1000, seed=0, enumerate_strategies=False)
        assert not v.verified and v.strategy_count == 0
        ce = v.counterexample
        assert ce["kind"] == "mixture" and ce["min_lhs"] > 0.2
        assert ce["q_search"]["min_lhs"] == pytest.approx(ce["min_lhs"])
        m = ce["model"]
        assert len(m["rho"]) == 1 and len(m["responses"]) == 2

    def test_reproducible(self):
        e = presets.expression("star2")
        a = verify_quantified(e, num_mixture_samples=3000, seed=4).to_dict()
        b = verify_quantified(e, num_mixture_samples=3000, seed=4).to_dict()
        assert a == b and math.isfinite(a["max_lhs_seen"])

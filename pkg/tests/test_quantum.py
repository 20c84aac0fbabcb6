import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netbell import presets
from netbell.correlations import correlators_from_behavior
from netbell.network import add_leaf, seed_network
from netbell.quantum import (
    DensityOperator,
    QuantumModelError,
    QuantumNetworkModel,
    ScanError,
    X,
    Z,
    behavior,
    build_paper_model,
    chain_network,
    correlator,
    correlator_table,
    dense_correlator,
    global_state,
    inverse_permutation,
    visibility_family,
    party_order,
    permute_subsystems,
    star_network,
    threshold_scan,
    werner,
    white_noise_family,
)

B = (0, 1)


def random_state(rng, dims):
    d = math.prod(dims)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, tuple(dims))


def random_observable(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    signs = rng.choice([-1.0, 1.0], size=d)
    m = q @ np.diag(signs) @ q.conj().T
    return (m + m.conj().T) / 2


def random_model(rng, net):
    states = {s.id: random_state(rng, [2] * len(s.feeds)) for s in net.sources}
    obs = {}
    for p in net.parties:
        d = 2 ** len(net.sources_of(p.id))
        for x in p.alphabet.inputs:
            obs[(p.id, x)] = random_observable(rng, d)
    return QuantumNetworkModel(net, states, obs)


class TestPresetCorrelators:
    @pytest.mark.parametrize("vis", [(0.5, 0.5), (1.0, 0.25), (1.0, 0.5), (1.0, 1.0)])
    def test_bilocal(self, vis):
        t = correlator_table(build_paper_model("bilocal", vis))
        V = vis[0] * vis[1]
        for x1, x2, x3 in itertools.product(B, B, B):
            assert abs(t[(x1, x2, x3)] - (-1) ** (x1 * x2 + x2 * x3) * V / 2) <= 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_chain(self, n):
        rng = np.random.default_rng(n)
        vis = rng.uniform(0.2, 1.0, n)
        t = correlator_table(build_paper_model(f"chain{n}", vis))
        V = float(np.prod(vis))
        for x in itertools.product(*[B] * (n + 1)):
            sign = (-1) ** sum(x[i] * x[i + 1] for i in range(n))
            assert abs(t[x] - sign * V / 2 ** (n / 2)) <= 1e-12

    def test_mermin_network_groups(self):
        e = presets.expression("mermin_net")
        for v1, v2 in ((1.0, 1.0), (0.8, 0.6)):
            t = correlator_table(build_paper_model("mermin_net", (v1, v2)))
            vals = e.group_values(t.values.reshape(1, -1))[0]
            assert np.allclose(vals[:2], v1 * v2 / math.sqrt(2), atol=1e-12)

    def test_single_correlator(self):
        m = build_paper_model("bilocal", (1, 1))
        assert correlator(m, (0, 0, 0)) == pytest.approx(0.5, abs=1e-12)
        assert correlator(m, (1, 1, 1)) == pytest.approx(0.5, abs=1e-12)
        assert correlator(m, (None, None, None)) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(QuantumModelError):
            build_paper_model("triangle", (1, 1, 1))
        with pytest.raises(QuantumModelError):
            build_paper_model("bilocal", (1,))


class TestEngine:
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["chain2", "chain3", "star3", "mermin"]))
    @settings(max_examples=20, deadline=None)
    def test_dense_route_agrees(self, seed, shape):
        rng = np.random.default_rng(seed)
        net = {
            "chain2": chain_network(2),
            "chain3": chain_network(3),
            "star3": star_network(3),
            "mermin": add_leaf(seed_network(3), "A3"),
        }[shape]
        model = random_model(rng, net)
        t = correlator_table(model)
        for x in itertools.islice(itertools.product(*[(0, 1, None)] * net.num_parties), 0, None, 7):
            assert t[x] == pytest.approx(dense_correlator(model, x), abs=1e-12)
            assert t[x] == pytest.approx(correlator(model, x), abs=1e-12)
        assert np.all(np.abs(t.values) <= 1 + 1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_permutation_inverse(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, star_network(3))
        rho = global_state(model, "source")
        perm, dims = party_order(model)
        there = permute_subsystems(rho, dims, perm)
        back = permute_subsystems(there, [dims[p] for p in perm], inverse_permutation(perm))
        assert np.array_equal(back, rho)

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            permute_subsystems(np.eye(4), (2, 2), (0, 0))

    def test_product_state_factorizes(self):
        net = seed_network(2)
        rng = np.random.default_rng(4)
        ra, rb = random_state(rng, [2]).matrix, random_state(rng, [2]).matrix
        obs = {("A1", 0): Z, ("A1", 1): X, ("A2", 0): X, ("A2", 1): Z}
        model = QuantumNetworkModel(net, {"S1": DensityOperator(np.kron(ra, rb), (2, 2))}, obs)
        t = correlator_table(model)
        for x, y in itertools.product(B, B):
            ea = np.trace(ra @ obs[("A1", x)]).real
            eb = np.trace(rb @ obs[("A2", y)]).real
            assert t[(x, y)] == pytest.approx(ea * eb, abs=1e-12)

    @pytest.mark.parametrize("kind,n", [("chain3", 3), ("mermin_net", 2)])
    def test_affine_in_each_visibility(self, kind, n):
        base = [0.7] * n
        for i in range(n):
            tables = []
            for v in (0.1, 0.5, 0.9):
                vis = list(base)
                vis[i] = v
                tables.append(correlator_table(build_paper_model(kind, vis)).values)
            a, b, c = tables
            assert np.allclose(b, (a + c) / 2, atol=1e-12)

    def test_behavior_route(self):
        model = build_paper_model("mermin_net", (0.9, 0.8))
        t = correlators_from_behavior(behavior(model))
        assert np.allclose(t.values, correlator_table(model).values, atol=1e-12)


class TestValidation:
    def test_state_checks(self):
        with pytest.raises(QuantumModelError):
            DensityOperator(np.array([[1, 1], [0, 0]]), (2,))
        with pytest.raises(QuantumModelError):
            DensityOperator(np.eye(2), (2,))
        with pytest.raises(QuantumModelError):
            DensityOperator(np.diag([1.5, -0.5]), (2,))
        with pytest.raises(QuantumModelError):
            DensityOperator(np.eye(4) / 4, (2,))

    def test_observable_checks(self):
        net = seed_network(2)
        st_ = {"S1": werner(1.0)}
        good = {("A1", 0): Z, ("A1", 1): X, ("A2", 0): Z, ("A2", 1): X}
        QuantumNetworkModel(net, st_, good)
        with pytest.raises(QuantumModelError):
            QuantumNetworkModel(net, st_, {**good, ("A1", 0): np.diag([1.0, 0.5])})
        with pytest.raises(QuantumModelError):
            QuantumNetworkModel(net, st_, {**good, ("A1", 0): np.eye(4)})
        missing = dict(good)
        del missing[("A2", 1)]
        with pytest.raises(QuantumModelError):
            QuantumNetworkModel(net, st_, missing)
        with pytest.raises(QuantumModelError):
            QuantumNetworkModel(net, {}, good)

    def test_json_roundtrip(self):
        m = build_paper_model("mermin_net", (0.9, 0.7))
        again = QuantumNetworkModel.from_json(m.to_json())
        assert np.array_equal(correlator_table(again).values, correlator_table(m).values)
        assert again.to_json() == m.to_json()


class TestThresholdScan:
    def test_bilocal(self):
        family, expr = presets.scenario("bilocal")
        res = threshold_scan(family, expr)
        assert abs(res.critical - 0.5) <= 1e-6 and res.upper - res.lower <= 1e-7

    def test_chain4(self):
        family, expr = presets.scenario("chain4")
        assert abs(threshold_scan(family, expr).critical - 0.25) <= 1e-6

    def test_mermin_network(self):
        family, expr = presets.scenario("mermin_net")
        assert abs(threshold_scan(family, expr).critical - 1 / (2 * math.sqrt(2))) <= 1e-6

    def test_no_sign_change(self):
        family, expr = presets.scenario("bilocal")
        with pytest.raises(ScanError):
            threshold_scan(family, expr, (0.0, 0.4))

    @pytest.mark.parametrize("kind", ["bilocal", "chain3", "mermin_net"])
    def test_white_noise_family_matches(self, kind):
        generic = white_noise_family(presets.model(kind))
        for V in (0.0, 0.3, 0.77):
            a = correlator_table(generic(V)).values
            b = correlator_table(visibility_family(kind)(V)).values
            assert np.allclose(a, b, atol=1e-13)

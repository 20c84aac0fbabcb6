"""Classical N-local models: enumeration, sampling and inequality verification.

Every source carries an independent finite hidden variable and every party
answers deterministically from its input and the variables it receives.
Linear Bell expressions are multilinear in the source distributions, so
their maximum is reached at point masses; with point masses only the
responses at the chosen hidden values matter, which is why deduplicated
enumeration runs over plain local assignments ``input -> +-1`` per party.

:func:`verify_quantified` is a property test, not a proof: the N-local set
is not convex and membership is never decided here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .correlations import CorrelatorTable
from .inequality import BatchEvaluator, LinearBellExpression, QuantifiedBellExpression, evaluate
from .network import Network

DEFAULT_CARDINALITY = 4
DEFAULT_BUDGET = 10**8
NORM_TOL = 1e-12


class BudgetExceeded(RuntimeError):
    pass


def cardinalities(net: Network, hidden: int | Sequence[int] | None) -> tuple[int, ...]:
    if hidden is None:
        hidden = DEFAULT_CARDINALITY
    if isinstance(hidden, int):
        hidden = (hidden,) * net.num_sources
    hidden = tuple(int(h) for h in hidden)
    if len(hidden) != net.num_sources or min(hidden) < 1:
        raise ValueError(f"need one cardinality >= 1 per source, got {hidden}")
    return hidden


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class NLocalModel:
    """Source distributions ``rho[i]`` and responses ``responses[p][x, lam...]``.

    ``responses[p]`` has one axis for the party's nontrivial inputs followed
    by one axis per source it receives (in source order).
    """

    network: Network
    rho: tuple[np.ndarray, ...]
    responses: tuple[np.ndarray, ...]

    def __post_init__(self):
        net = self.network
        rho = tuple(np.asarray(r, dtype=float) for r in self.rho)
        resp = tuple(np.asarray(r, dtype=np.int8) for r in self.responses)
        if len(rho) != net.num_sources or len(resp) != net.num_parties:
            raise ValueError("model does not match the network")
        for r in rho:
            if r.ndim != 1 or r.min() < 0 or abs(r.sum() - 1) > NORM_TOL:
                raise ValueError("source distribution must be a normalized nonnegative vector")
        for p, party in enumerate(net.parties):
            expected = (len(party.alphabet),) + tuple(len(rho[s]) for s in net.sources_of(p))
            if resp[p].shape != expected:
                raise ValueError(f"responses of {party.id} have shape {resp[p].shape}, expected {expected}")
            if not np.all(np.abs(resp[p]) == 1):
                raise ValueError("responses must be +-1")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "responses", resp)

    @property
    def is_deterministic(self) -> bool:
        return all(np.count_nonzero(r) == 1 for r in self.rho)

    def to_dict(self) -> dict:
        return {
            "rho": [r.tolist() for r in self.rho],
            "responses": [r.tolist() for r in self.responses],
        }


def _einsum_spec(net: Network):
    """Sublist labels: source i -> i, party p input axis -> N + p."""
    n = net.num_sources
    party_labels = [[n + p] + list(net.sources_of(p)) for p in range(net.num_parties)]
    return party_labels, [n + p for p in range(net.num_parties)]


def _with_trivial(resp: np.ndarray, batch: bool) -> np.ndarray:
    axis = 1 if batch else 0
    ones_shape = list(resp.shape)
    ones_shape[axis] = 1
    return np.concatenate([resp.astype(float), np.ones(ones_shape)], axis=axis)


def correlators_of(m: NLocalModel) -> CorrelatorTable:
    """``<prod a> = sum_lambda prod_i rho_i(lambda_i) prod_j a^j(x^j, lambda_j)``."""
    net = m.network
    party_labels, out = _einsum_spec(net)
    args = []
    for i, r in enumerate(m.rho):
        args += [r, [i]]
    for p, resp in enumerate(m.responses):
        args += [_with_trivial(resp, batch=False), party_labels[p]]
    arr = np.einsum(*args, out, optimize=True)
    return CorrelatorTable(net, np.clip(arr, -1.0, 1.0))


def batch_tables(net: Network, rhos: Sequence[np.ndarray], responses: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened correlator tables for a batch of models: ``(B, table size)``."""
    party_labels, out = _einsum_spec(net)
    b = net.num_sources + net.num_parties  # batch label, after every other label
    args = []
    for i, r in enumerate(rhos):
        args += [r, [b, i]]
    for p, resp in enumerate(responses):
        args += [_with_trivial(resp, batch=True), [b] + party_labels[p]]
    arr = np.einsum(*args, [b] + out, optimize=True)
    return arr.reshape(arr.shape[0], -1)


# -- deterministic strategies ------------------------------------------------------


def local_assignment_vectors(n_inputs: int) -> np.ndarray:
    """All maps ``input -> +-1`` as rows, with the trivial slot (+1) appended."""
    bits = (np.arange(2**n_inputs)[:, None] >> np.arange(n_inputs)[None, :]) & 1
    return np.concatenate([1 - 2 * bits, np.ones((2**n_inputs, 1), dtype=int)], axis=1).astype(float)


def deterministic_count(net: Network, hidden=None, dedup: bool = True) -> int:
    if dedup:
        return math.prod(2 ** len(p.alphabet) for p in net.parties)
    card = cardinalities(net, hidden)
    count = math.prod(card)
    for p, party in enumerate(net.parties):
        cells = len(party.alphabet) * math.prod(card[s] for s in net.sources_of(p))
        count *= 2**cells
    return count


def deterministic_tables(
    net: Network, hidden=None, dedup: bool = True, budget: int = DEFAULT_BUDGET, chunk: int = 1 << 15
) -> Iterator[np.ndarray]:
    """Flat correlator tables of every deterministic strategy, in chunks.

    With ``dedup`` each distinct behavior appears once; otherwise every
    combination of hidden-value point masses and full response tables is
    visited.
    """
    total = deterministic_count(net, hidden, dedup)
    if total > budget:
        raise BudgetExceeded(f"{total} deterministic strategies exceed the budget of {budget}")
    vecs = [local_assignment_vectors(len(p.alphabet)) for p in net.parties]
    radices = [2 ** len(p.alphabet) for p in net.parties]
    if dedup:
        for start in range(0, total, chunk):
            ids = np.arange(start, min(total, start + chunk))
            yield _tables_from_local(vecs, _digits(ids, radices))
        return
    card = cardinalities(net, hidden)
    cells = [
        len(party.alphabet) * math.prod(card[s] for s in net.sources_of(p)) for p, party in enumerate(net.parties)
    ]
    layout = list(card) + [2**c for c in cells]
    for start in range(0, total, chunk):
        ids = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = _digits(ids, layout)
        lam = digits[:, : net.num_sources]
        local = np.empty((len(ids), net.num_parties), dtype=np.int64)
        for p, party in enumerate(net.parties):
            src = net.sources_of(p)
            # flat position of (x, lambda_received) in the response table, x-major
            offset = np.zeros(len(ids), dtype=np.int64)
            for s in src:
                offset = offset * card[s] + lam[:, s]
            per_x = math.prod(card[s] for s in src)
            table_bits = digits[:, net.num_sources + p]
            idx = np.zeros(len(ids), dtype=np.int64)
            for x in range(len(party.alphabet)):
                idx |= ((table_bits >> (x * per_x + offset)) & 1) << x
            local[:, p] = idx
        yield _tables_from_local(vecs, local)


def _digits(ids: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    out = np.empty((len(ids), len(radices)), dtype=np.int64)
    rest = ids.astype(np.int64)
    for i in reversed(range(len(radices))):
        out[:, i] = rest % radices[i]
        rest = rest // radices[i]
    return out


def _tables_from_local(vecs, local: np.ndarray) -> np.ndarray:
    tables = vecs[0][local[:, 0]]
    for p in range(1, len(vecs)):
        v = vecs[p][local[:, p]]
        tables = (tables[:, :, None] * v[:, None, :]).reshape(len(local), -1)
    return tables


def enumerate_deterministic(
    net: Network, hidden=None, dedup: bool = True, budget: int = DEFAULT_BUDGET
) -> Iterator[NLocalModel]:
    """Yield each deterministic strategy as an explicit :class:`NLocalModel`."""
    total = deterministic_count(net, hidden, dedup)
    if total > budget:
        raise BudgetExceeded(f"{total} deterministic strategies exceed the budget of {budget}")
    card = (1,) * net.num_sources if dedup else cardinalities(net, hidden)
    shapes = [
        (len(p.alphabet),) + tuple(card[s] for s in net.sources_of(i)) for i, p in enumerate(net.parties)
    ]
    sizes = [math.prod(s) for s in shapes]
    layout = list(card) + [2**s for s in sizes]
    for sid in range(total):
        d = _digits(np.array([sid]), layout)[0]
        rho = []
        for i, c in enumerate(card):
            r = np.zeros(c)
            r[d[i]] = 1.0
            rho.append(r)
        responses = []
        for p, shape in enumerate(shapes):
            bits = (int(d[net.num_sources + p]) >> np.arange(sizes[p])) & 1
            responses.append((1 - 2 * bits).reshape(shape))
        yield NLocalModel(net, tuple(rho), tuple(responses))


def max_linear(
    expr: LinearBellExpression, net: Network | None = None, hidden=None, dedup: bool = True,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Exact maximum of a linear expression over N-local models."""
    net = expr.network if net is None else net
    if net != expr.network:
        raise ValueError("expression and network differ")
    coeffs = expr.coefficient_array().ravel()
    best = -math.inf
    for tables in deterministic_tables(net, hidden, dedup, budget):
        best = max(best, float(np.max(tables @ coeffs)))
    return best


def max_lhs_deterministic(expr: QuantifiedBellExpression, budget: int = DEFAULT_BUDGET) -> float:
    """Largest minimized left-hand side over deduplicated deterministic strategies."""
    ev = BatchEvaluator(expr)
    best = -math.inf
    for tables in deterministic_tables(expr.network, dedup=True, budget=budget):
        _, res, _, _ = ev.minimize(tables)
        best = max(best, float(np.max(res.value)))
    return best


# -- sampling -------------------------------------------------------------------------


def sample_models(net: Network, hidden, rng: np.random.Generator, size: int):
    """Batch of random models: simplex-uniform sources, uniform +-1 responses."""
    card = cardinalities(net, hidden)
    rhos = []
    for c in card:
        e = rng.standard_exponential((size, c))
        rhos.append(e / e.sum(axis=1, keepdims=True))
    responses = []
    for p, party in enumerate(net.parties):
        shape = (size, len(party.alphabet)) + tuple(card[s] for s in net.sources_of(p))
        responses.append((1 - 2 * rng.integers(0, 2, size=shape)).astype(np.int8))
    return rhos, responses


def random_nlocal(net: Network, hidden=None, seed: int = 0) -> NLocalModel:
    rhos, responses = sample_models(net, hidden, make_rng(seed), 1)
    return NLocalModel(net, tuple(r[0] for r in rhos), tuple(r[0] for r in responses))


def sample_deterministic_tables(net: Network, hidden, rng: np.random.Generator, size: int) -> np.ndarray:
    """Tables of random point-mass strategies (random hidden values and responses)."""
    card = cardinalities(net, hidden)
    rhos = [np.eye(c)[rng.integers(0, c, size=size)] for c in card]
    _, responses = sample_models(net, hidden, rng, size)
    return batch_tables(net, rhos, responses)


# -- verification -------------------------------------------------------------------


@dataclass
class Verdict:
    expression_bound: float
    strategy_count: int
    sample_count: int
    max_lhs_seen: float
    enumeration_cardinality: tuple[int, ...]
    sample_cardinality: tuple[int, ...]
    dedup: bool
    seed: int
    counterexample: dict | None = None
    note: str = field(default="property test over enumerated and sampled models; not a proof of validity")

    @property
    def verified(self) -> bool:
        return self.counterexample is None

    def to_dict(self) -> dict:
        return {
            "verified": self.verified,
            "strategy_count": self.strategy_count,
            "sample_count": self.sample_count,
            "max_lhs_seen": self.max_lhs_seen,
            "bound": self.expression_bound,
            "enumeration_cardinality": list(self.enumeration_cardinality),
            "sample_cardinality": list(self.sample_cardinality),
            "dedup": self.dedup,
            "seed": self.seed,
            "counterexample": self.counterexample,
            "note": self.note,
        }


def verify_quantified(
    expr: QuantifiedBellExpression,
    net: Network | None = None,
    enum_hidden=2,
    num_mixture_samples: int = 100_000,
    seed: int = 0,
    sample_hidden=DEFAULT_CARDINALITY,
    dedup: bool = True,
    budget: int = DEFAULT_BUDGET,
    batch: int = 10_000,
    tol: float = 1e-9,
    enumerate_strategies: bool = True,
) -> Verdict:
    """Search deterministic strategies and random mixtures for a violation."""
    net = expr.network if net is None else net
    if net != expr.network:
        raise ValueError("expression and network differ")
    ev = BatchEvaluator(expr, tol)
    enum_card = cardinalities(net, enum_hidden)
    samp_card = cardinalities(net, sample_hidden)
    verdict = Verdict(expr.bound, 0, 0, -math.inf, enum_card, samp_card, dedup, int(seed))

    def scan(tables):
        _, res, _, _ = ev.minimize(tables)
        finite = res.value[np.isfinite(res.value)]
        if finite.size:
            verdict.max_lhs_seen = max(verdict.max_lhs_seen, float(finite.max()))
        bad = np.flatnonzero(res.value - expr.bound > tol)
        return (int(bad[0]), float(res.value[bad[0]]), res.q[bad[0]].tolist()) if bad.size else None

    position = 0
    stream = deterministic_tables(net, enum_card, dedup, budget) if enumerate_strategies else ()
    for tables in stream:
        hit = scan(tables)
        if hit is not None:
            i, value, q = hit
            verdict.strategy_count += i + 1
            verdict.counterexample = {
                "kind": "deterministic",
                "index": position + i,
                "table": tables[i].tolist(),
                "min_lhs": value,
                "argmin_q": q,
            }
            return verdict
        position += len(tables)
        verdict.strategy_count += len(tables)

    rng = make_rng(seed)
    done = 0
    while done < num_mixture_samples:
        size = min(batch, num_mixture_samples - done)
        rhos, responses = sample_models(net, samp_card, rng, size)
        tables = batch_tables(net, rhos, responses)
        hit = scan(tables)
        if hit is not None:
            i, value, q = hit
            model = NLocalModel(net, tuple(r[i] for r in rhos), tuple(r[i] for r in responses))
            trace = evaluate(expr, CorrelatorTable(net, tables[i].reshape(net.shape), check=False))
            verdict.sample_count = done + i + 1
            verdict.counterexample = {
                "kind": "mixture",
                "index": done + i,
                "model": model.to_dict(),
                "min_lhs": value,
                "argmin_q": q,
                "q_search": trace.to_dict(),
            }
            return verdict
        done += size
        verdict.sample_count = done
    return verdict

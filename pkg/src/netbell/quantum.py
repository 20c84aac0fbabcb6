"""Quantum correlators for network-wired states and +-1 observables.

Each source emits a density operator whose subsystems are routed, in order,
to the parties listed in the source's ``feeds``.  A party's observable acts on
the subsystems it receives, ordered by source index.  Correlators are
``Tr[(rho_1 x ... x rho_N) (A^1 x ... x A^M)]`` after reordering tensor
factors from source order to party order; the reordering is done by index
labels inside one ``einsum`` contraction, never by permutation matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Mapping, Sequence

import numpy as np

from .correlations import Behavior, CorrelatorTable
from .inequality import QuantifiedBellExpression, evaluate
from .network import TRIVIAL, Network, add_leaf, seed_network, validate

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
INVOLUTION_TOL = 1e-10
IMAG_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


class QuantumModelError(ValueError):
    pass


def _check_hermitian(m: np.ndarray, what: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise QuantumModelError(f"{what} is not a square matrix")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise QuantumModelError(f"{what} is not Hermitian")


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        if m.shape != (math.prod(dims),) * 2:
            raise QuantumModelError(f"state of shape {m.shape} does not match subsystem dims {dims}")
        _check_hermitian(m, "state")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise QuantumModelError(f"state trace is {np.trace(m).real}")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise QuantumModelError("state is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)


def check_observable(m: np.ndarray, what: str = "observable") -> np.ndarray:
    m = np.array(m, dtype=complex)
    _check_hermitian(m, what)
    if np.max(np.abs(m @ m - np.eye(m.shape[0]))) > INVOLUTION_TOL:
        raise QuantumModelError(f"{what} does not square to the identity")
    return m


def werner(v: float) -> DensityOperator:
    phi = np.zeros(4, dtype=complex)
    phi[[0, 3]] = 1 / math.sqrt(2)
    return DensityOperator(v * np.outer(phi, phi.conj()) + (1 - v) * np.eye(4) / 4, (2, 2))


def noisy_ghz(v: float, n: int = 3) -> DensityOperator:
    d = 2**n
    ghz = np.zeros(d, dtype=complex)
    ghz[[0, d - 1]] = 1 / math.sqrt(2)
    return DensityOperator(v * np.outer(ghz, ghz.conj()) + (1 - v) * np.eye(d) / d, (2,) * n)


def kron(*ms) -> np.ndarray:
    return reduce(np.kron, ms)


@dataclass(frozen=True, eq=False)
class QuantumNetworkModel:
    """Per-source states and per-(party, input) observables wired by a network."""

    network: Network
    states: Mapping[str, DensityOperator]
    observables: Mapping[tuple[str, object], np.ndarray]
    visibilities: tuple[float, ...] = ()
    _operands: tuple = field(init=False, repr=False)

    def __post_init__(self):
        net = self.network
        problems = validate(net)
        if problems:
            raise QuantumModelError(f"invalid network: {problems}")
        states = dict(self.states)
        for s in net.sources:
            if s.id not in states:
                raise QuantumModelError(f"no state for source {s.id}")
            if len(states[s.id].dims) != len(s.feeds):
                raise QuantumModelError(f"source {s.id} has {len(states[s.id].dims)} subsystems for {len(s.feeds)} parties")
        obs = {}
        for p in net.parties:
            dim = math.prod(self.local_dims(p.id, states))
            for x in p.alphabet.inputs:
                if (p.id, x) not in self.observables:
                    raise QuantumModelError(f"no observable for party {p.id} input {x!r}")
                m = check_observable(self.observables[(p.id, x)], f"observable {p.id}/{x!r}")
                if m.shape != (dim, dim):
                    raise QuantumModelError(f"observable {p.id}/{x!r} has shape {m.shape}, party receives dimension {dim}")
                m.setflags(write=False)
                obs[(p.id, x)] = m
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "visibilities", tuple(float(v) for v in self.visibilities))
        object.__setattr__(self, "_operands", self._build_operands())

    def local_dims(self, party: str, states=None) -> tuple[int, ...]:
        """Dimensions of the subsystems ``party`` receives, in its slot order."""
        states = self.states if states is None else states
        dims = []
        for si in self.network.sources_of(party):
            s = self.network.sources[si]
            dims.append(states[s.id].dims[s.feeds.index(party)])
        return tuple(dims)

    def routing(self) -> list[tuple[int, int]]:
        """For each global subsystem in source order: (party index, local slot)."""
        out = []
        net = self.network
        for si, s in enumerate(net.sources):
            for pid in s.feeds:
                out.append((net.party_index(pid), net.sources_of(pid).index(si)))
        return out

    def _labels(self):
        # ket label of subsystem n is 2n, bra label is 2n + 1
        net = self.network
        sub_of = {}
        n = 0
        for si, s in enumerate(net.sources):
            for pid in s.feeds:
                sub_of[(pid, si)] = n
                n += 1
        return sub_of, n

    def _build_operands(self):
        net = self.network
        sub_of, n = self._labels()
        ops = []
        for si, s in enumerate(net.sources):
            st = self.states[s.id]
            subs = [sub_of[(pid, si)] for pid in s.feeds]
            ops.append((st.matrix.reshape(st.dims * 2), [2 * u for u in subs] + [2 * u + 1 for u in subs]))
        party_ops = []
        for p in net.parties:
            dims = self.local_dims(p.id)
            subs = [sub_of[(p.id, si)] for si in net.sources_of(p.id)]
            labels = [2 * u + 1 for u in subs] + [2 * u for u in subs]
            party_ops.append((dims, labels))
        return ops, party_ops, 2 * n

    def stacked_observables(self, p: int) -> np.ndarray:
        """Observables of party ``p`` for every table slot, identity in the trivial slot."""
        party = self.network.parties[p]
        dims = self.local_dims(party.id)
        d = math.prod(dims)
        mats = [self.observables[(party.id, x)] for x in party.alphabet.inputs] + [np.eye(d)]
        return np.stack(mats).reshape((len(mats),) + dims * 2)

    def to_dict(self) -> dict:
        def enc(m):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]

        return {
            "network": self.network.to_dict(),
            "visibilities": list(self.visibilities),
            "states": [{"source": sid, "dims": list(st.dims), "matrix": enc(st.matrix)} for sid, st in self.states.items()],
            "observables": [
                {"party": pid, "input": x, "matrix": enc(m)} for (pid, x), m in self.observables.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuantumNetworkModel":
        def dec(rows):
            return np.array([[complex(re, im) for re, im in row] for row in rows])

        net = Network.from_dict(data["network"])
        states = {s["source"]: DensityOperator(dec(s["matrix"]), tuple(s["dims"])) for s in data["states"]}
        obs = {(o["party"], o["input"]): dec(o["matrix"]) for o in data["observables"]}
        return cls(net, states, obs, tuple(data.get("visibilities", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "QuantumNetworkModel":
        return cls.from_dict(json.loads(text))


def _contract(model: QuantumNetworkModel, party_operands: Sequence[np.ndarray], out_labels) -> np.ndarray:
    state_ops, party_meta, base = model._operands
    args = []
    for arr, labels in state_ops:
        args += [arr, labels]
    for p, arr in enumerate(party_operands):
        _, labels = party_meta[p]
        lead = [base + 2 * p, base + 2 * p + 1][: arr.ndim - len(labels)]
        args += [arr, lead + labels]
    return np.einsum(*args, out_labels, optimize=True)


def correlator_table(model: QuantumNetworkModel) -> CorrelatorTable:
    """Every correlator, trivial inputs included, from a single contraction."""
    m = model.network.num_parties
    stacked = [model.stacked_observables(p) for p in range(m)]
    base = model._operands[2]
    raw = _contract(model, stacked, [base + 2 * p for p in range(m)])
    if np.max(np.abs(raw.imag), initial=0.0) > IMAG_TOL:
        raise QuantumModelError(f"correlator imaginary residue {np.max(np.abs(raw.imag)):.3g}")
    return CorrelatorTable(model.network, raw.real)


def correlator(model: QuantumNetworkModel, inputs: Sequence) -> float:
    """``Tr[rho (A^1_{x^1} x ... x A^M_{x^M})]`` for one input tuple."""
    net = model.network
    if len(inputs) != net.num_parties:
        raise QuantumModelError("input tuple length does not match party count")
    ops = []
    for p, (party, x) in enumerate(zip(net.parties, inputs)):
        dims = model.local_dims(party.id)
        d = math.prod(dims)
        if x is TRIVIAL:
            mat = np.eye(d)
        else:
            try:
                mat = model.observables[(party.id, x)]
            except KeyError:
                raise QuantumModelError(f"party {party.id} has no input {x!r}") from None
        ops.append(mat.reshape(dims * 2))
    val = complex(_contract(model, ops, []))
    if abs(val.imag) > IMAG_TOL:
        raise QuantumModelError(f"correlator imaginary residue {abs(val.imag):.3g}")
    return val.real


def behavior(model: QuantumNetworkModel) -> Behavior:
    """Outcome distribution from the projectors ``(1 +- A)/2``."""
    net = model.network
    m = net.num_parties
    ops = []
    for p, party in enumerate(net.parties):
        dims = model.local_dims(party.id)
        d = math.prod(dims)
        proj = np.stack([
            np.stack([(np.eye(d) + s * model.observables[(party.id, x)]) / 2 for x in party.alphabet.inputs])
            for s in (1, -1)
        ])
        ops.append(proj.reshape((2, len(party.alphabet)) + dims * 2))
    base = model._operands[2]
    out = [base + 2 * p for p in range(m)] + [base + 2 * p + 1 for p in range(m)]
    raw = _contract(model, ops, out)
    probs = np.clip(raw.real, 0.0, None)
    return Behavior(net, probs)


# -- dense route: explicit permutation to party order ---------------------------


def permute_subsystems(matrix: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``i`` is old factor ``perm[i]``."""
    dims = tuple(dims)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm!r} is not a permutation of {n} subsystems")
    t = np.asarray(matrix).reshape(dims * 2)
    t = t.transpose(list(perm) + [n + p for p in perm])
    d = math.prod(dims)
    return t.reshape(d, d)


def inverse_permutation(perm: Sequence[int]) -> list[int]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return inv


def party_order(model: QuantumNetworkModel) -> tuple[list[int], list[int]]:
    """Permutation taking source-ordered subsystems to party order, and their dims."""
    routing = model.routing()
    dims = []
    for s in model.network.sources:
        dims += list(model.states[s.id].dims)
    perm = sorted(range(len(routing)), key=lambda n: routing[n])
    return perm, dims


def global_state(model: QuantumNetworkModel, order: str = "source") -> np.ndarray:
    rho = kron(*(model.states[s.id].matrix for s in model.network.sources))
    if order == "source":
        return rho
    perm, dims = party_order(model)
    return permute_subsystems(rho, dims, perm)


def dense_correlator(model: QuantumNetworkModel, inputs: Sequence) -> float:
    """Reference path: materialize the party-ordered state and full operator."""
    rho = global_state(model, order="party")
    mats = []
    for party, x in zip(model.network.parties, inputs):
        d = math.prod(model.local_dims(party.id))
        mats.append(np.eye(d) if x is TRIVIAL else model.observables[(party.id, x)])
    return float(np.trace(rho @ kron(*mats)).real)


# -- preset scenarios ----------------------------------------------------------------

PLUS_ZX = (Z + X) / math.sqrt(2)
MINUS_ZX = (Z - X) / math.sqrt(2)
PLUS_XY = (X + Y) / math.sqrt(2)
MINUS_XY = (X - Y) / math.sqrt(2)


def bilocal_network() -> Network:
    return add_leaf(seed_network(2), "A2")


def chain_network(n_sources: int) -> Network:
    if n_sources < 1:
        raise ValueError("a chain needs at least one source")
    net = seed_network(2)
    for _ in range(n_sources - 1):
        net = add_leaf(net, net.parties[-1].id)
    return net


def mermin_network() -> Network:
    return add_leaf(seed_network(3), "A3")


def star_network(branches: int) -> Network:
    """Central party ``B`` (index 1 of the seed chain) with ``branches`` leaves."""
    if branches < 2:
        raise ValueError("a star needs at least two branches")
    net = bilocal_network()
    for _ in range(branches - 2):
        net = add_leaf(net, "A2")
    return net


def build_paper_model(kind: str, visibilities: Sequence[float]) -> QuantumNetworkModel:
    """States and measurements of the bilocal, chain(N) and mermin_net scenarios.

    ``kind`` is ``"bilocal"``, ``"chain"`` (N inferred from the visibility
    count), ``"chain<N>"`` / ``"chain(N)"``, ``"trilocal"`` or ``"mermin_net"``.
    """
    vis = tuple(float(v) for v in visibilities)
    kind = kind.replace("(", "").replace(")", "")
    if kind == "bilocal":
        if len(vis) != 2:
            raise QuantumModelError("bilocal needs two visibilities")
        kind = "chain"
    if kind == "trilocal":
        kind = "chain3"
    if kind.startswith("chain"):
        n = int(kind[5:]) if kind[5:] else len(vis)
        if len(vis) != n:
            raise QuantumModelError(f"chain({n}) needs {n} visibilities, got {len(vis)}")
        return _chain_model(vis)
    if kind == "mermin_net":
        if len(vis) != 2:
            raise QuantumModelError("mermin_net needs two visibilities")
        net = mermin_network()
        states = {"S1": noisy_ghz(vis[0]), "S2": werner(vis[1])}
        obs = {}
        for pid in ("A1", "A2", "A4"):
            obs[(pid, 0)], obs[(pid, 1)] = PLUS_XY, MINUS_XY
        obs[("A3", 0)], obs[("A3", 1)] = kron(X, X), kron(Y, Y)
        return QuantumNetworkModel(net, states, obs, vis)
    raise QuantumModelError(f"unknown scenario {kind!r}")


def _chain_model(vis: tuple[float, ...]) -> QuantumNetworkModel:
    n = len(vis)
    net = chain_network(n)
    states = {f"S{i + 1}": werner(v) for i, v in enumerate(vis)}
    obs = {("A1", 0): PLUS_ZX, ("A1", 1): MINUS_ZX}
    for j in range(2, n + 1):
        if j % 2 == 0:
            pair = (kron(Z, Z), kron(X, X))
        else:
            pair = (kron(PLUS_ZX, PLUS_ZX), kron(MINUS_ZX, MINUS_ZX))
        obs[(f"A{j}", 0)], obs[(f"A{j}", 1)] = pair
    last = f"A{n + 1}"
    if n % 2 == 0:
        obs[(last, 0)], obs[(last, 1)] = PLUS_ZX, MINUS_ZX
    else:
        obs[(last, 0)], obs[(last, 1)] = Z, X
    return QuantumNetworkModel(net, states, obs, vis)


def visibility_family(kind: str, n_sources: int | None = None) -> Callable[[float], QuantumNetworkModel]:
    """Models parametrized by the total visibility ``V``, spread evenly over sources."""
    kind = kind.replace("(", "").replace(")", "")
    if kind == "bilocal":
        n, name = 2, "chain2"
    elif kind == "trilocal":
        n, name = 3, "chain3"
    elif kind.startswith("chain"):
        n = int(kind[5:]) if kind[5:] else n_sources
        if n is None:
            raise ValueError("chain family needs a source count")
        name = f"chain{n}"
    elif kind == "mermin_net":
        n, name = 2, "mermin_net"
    else:
        raise QuantumModelError(f"unknown scenario {kind!r}")
    return lambda V: build_paper_model(name, [V ** (1.0 / n)] * n)


def white_noise_family(model: QuantumNetworkModel) -> Callable[[float], QuantumNetworkModel]:
    """Mix every source state with white noise, visibility ``V^(1/N)`` each.

    For pure source states this reproduces the Werner / noisy-GHZ families.
    """
    n = model.network.num_sources

    def build(V: float) -> QuantumNetworkModel:
        v = float(V) ** (1.0 / n)
        states = {}
        for sid, st in model.states.items():
            d = st.matrix.shape[0]
            states[sid] = DensityOperator(v * st.matrix + (1 - v) * np.eye(d) / d, st.dims)
        return QuantumNetworkModel(model.network, states, dict(model.observables), (v,) * n)

    return build


# -- threshold search -------------------------------------------------------------


@dataclass
class ScanResult:
    critical: float
    lower: float
    upper: float
    iterations: int
    residual: float  # min_lhs - bound at the reported critical visibility
    samples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "critical": self.critical,
            "lower": self.lower,
            "upper": self.upper,
            "iterations": self.iterations,
            "residual": self.residual,
            "samples": [{"V": v, "violated": b} for v, b in self.samples],
        }


class ScanError(RuntimeError):
    pass


def threshold_scan(
    family: Callable[[float], QuantumNetworkModel],
    expr: QuantifiedBellExpression,
    v_range: tuple[float, float] = (0.0, 1.0),
    precision: float = 1e-7,
    monotone_samples: int = 11,
) -> ScanResult:
    """Smallest visibility at which the family violates ``expr``, by bisection."""
    lo, hi = map(float, v_range)

    def violated(v):
        return evaluate(expr, correlator_table(family(v))).violated

    grid = np.linspace(lo, hi, monotone_samples)
    flags = [violated(v) for v in grid]
    samples = list(zip(map(float, grid), flags))
    if not flags[-1] or flags[0]:
        raise ScanError(f"no violation onset in [{lo}, {hi}] (endpoints: {flags[0]}, {flags[-1]})")
    first = flags.index(True)
    if not all(flags[first:]):
        raise ScanError("violation is not monotone in the visibility over the sampled range")
    a, b = float(grid[first - 1]), float(grid[first])
    it = 0
    while b - a > precision:
        mid = 0.5 * (a + b)
        if violated(mid):
            b = mid
        else:
            a = mid
        it += 1
    res = evaluate(expr, correlator_table(family(b)))
    return ScanResult(b, a, b, it, res.margin, samples)

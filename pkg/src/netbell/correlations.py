"""Correlator tables and behaviors.

A :class:`CorrelatorTable` stores ``<a^1_{x^1} ... a^M_{x^M}>`` for every joint
input tuple, the trivial input included.  Storage is a dense array whose axis
``p`` has ``len(inputs_p) + 1`` entries, the trivial input occupying the last
slot.  Tables are the exchange format between the quantum engine, the
classical oracle and the inequality evaluator.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from typing import Iterator, Sequence

import numpy as np

from .network import TRIVIAL, Network, NetworkError

VALUE_TOL = 1e-10
NORM_TOL = 1e-12


class TableError(ValueError):
    pass


def tuple_index(net: Network, inputs: Sequence) -> tuple[int, ...]:
    """Map an input tuple (``None`` for the trivial input) to array indices."""
    if len(inputs) != net.num_parties:
        raise TableError(f"input tuple {tuple(inputs)!r} has wrong length for {net.num_parties} parties")
    idx = []
    for party, sym in zip(net.parties, inputs):
        if sym is TRIVIAL and not party.alphabet.trivial:
            raise TableError(f"party {party.id} has no trivial input")
        try:
            idx.append(party.alphabet.index(sym))
        except NetworkError as exc:
            raise TableError(f"party {party.id}: {exc}") from None
    return tuple(idx)


def index_tuple(net: Network, idx: Sequence[int]) -> tuple:
    return tuple(p.alphabet.symbol(i) for p, i in zip(net.parties, idx))


def all_tuples(net: Network) -> Iterator[tuple]:
    """Every input tuple in canonical (row-major) order."""
    for idx in itertools.product(*(range(r) for r in net.shape)):
        yield index_tuple(net, idx)


class CorrelatorTable:
    """Immutable map from joint input tuples to correlators in [-1, 1]."""

    def __init__(self, network: Network, values, check: bool = True):
        arr = np.array(values, dtype=float)
        if arr.shape != network.shape:
            raise TableError(f"table shape {arr.shape} does not match network shape {network.shape}")
        if check:
            if not np.all(np.isfinite(arr)):
                raise TableError("non-finite correlator")
            worst = np.max(np.abs(arr)) if arr.size else 0.0
            if worst > 1 + VALUE_TOL:
                raise TableError(f"correlator magnitude {worst} exceeds 1")
            trivial = arr[tuple(-1 for _ in network.parties)]
            if abs(trivial - 1.0) > VALUE_TOL:
                raise TableError(f"all-trivial correlator is {trivial}, expected 1")
        arr.setflags(write=False)
        self.network = network
        self.values = arr

    def __getitem__(self, inputs) -> float:
        return float(self.values[tuple_index(self.network, inputs)])

    def items(self) -> Iterator[tuple[tuple, float]]:
        for idx in np.ndindex(*self.values.shape):
            yield index_tuple(self.network, idx), float(self.values[idx])

    def __eq__(self, other):
        return (
            isinstance(other, CorrelatorTable)
            and self.network == other.network
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"CorrelatorTable(parties={self.network.party_ids}, shape={self.values.shape})"

    @classmethod
    def zeros(cls, network: Network) -> "CorrelatorTable":
        """All nontrivial correlators zero (the fully random behavior)."""
        arr = np.zeros(network.shape)
        arr[tuple(-1 for _ in network.parties)] = 1.0
        return cls(network, arr)

    # -- serialization --------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.network.party_ids) + ["value"])
        for inputs, value in self.items():
            writer.writerow(["_" if s is TRIVIAL else s for s in inputs] + [f"{value:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, network: Network, text: str) -> "CorrelatorTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != list(network.party_ids) + ["value"]:
            raise TableError("CSV header does not match network parties")
        arr = np.full(network.shape, np.nan)
        for row in rows[1:]:
            if not row:
                continue
            syms = []
            for party, cell in zip(network.parties, row[:-1]):
                syms.append(TRIVIAL if cell == "_" else _parse_symbol(cell, party.alphabet.inputs))
            arr[tuple_index(network, syms)] = float(row[-1])
        if np.isnan(arr).any():
            raise TableError("CSV does not cover every input tuple")
        return cls(network, arr)

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "entries": [
                {"inputs": list(inputs), "value": value} for inputs, value in self.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, network: Network | None = None) -> "CorrelatorTable":
        net = Network.from_dict(data["network"]) if network is None else network
        arr = np.full(net.shape, np.nan)
        for entry in data["entries"]:
            arr[tuple_index(net, entry["inputs"])] = float(entry["value"])
        if np.isnan(arr).any():
            raise TableError("table document does not cover every input tuple")
        return cls(net, arr)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorrelatorTable":
        return cls.from_dict(json.loads(text))


def _parse_symbol(cell: str, inputs):
    for s in inputs:
        if str(s) == cell:
            return s
    raise TableError(f"unknown input symbol {cell!r}")


class Behavior:
    """Conditional distribution ``P(a^1..a^M | x^1..x^M)`` with outputs +-1.

    ``probs`` has shape ``(2,)*M + (n_1, ..., n_M)``; output index 0 is +1 and
    index 1 is -1.  Only nontrivial inputs appear.
    """

    def __init__(self, network: Network, probs):
        arr = np.array(probs, dtype=float)
        m = network.num_parties
        expected = (2,) * m + tuple(len(p.alphabet) for p in network.parties)
        if arr.shape != expected:
            raise TableError(f"behavior shape {arr.shape}, expected {expected}")
        if arr.min() < -NORM_TOL:
            raise TableError("negative probability")
        sums = arr.sum(axis=tuple(range(m)))
        if np.max(np.abs(sums - 1.0)) > NORM_TOL:
            raise TableError("behavior is not normalized for every input tuple")
        arr.setflags(write=False)
        self.network = network
        self.probs = arr


def correlators_from_behavior(b: Behavior) -> CorrelatorTable:
    """Expectation of output products; trivial inputs marginalize a party out.

    Marginals are read off the party's first nontrivial input, which is exact
    for non-signaling behaviors.
    """
    net = b.network
    m = net.num_parties
    operands = [b.probs, list(range(2 * m))]
    for p, party in enumerate(net.parties):
        n = len(party.alphabet)
        t = np.zeros((2, n, n + 1))
        for x in range(n):
            t[0, x, x] = 1.0
            t[1, x, x] = -1.0
        t[:, 0, n] = 1.0
        operands += [t, [p, m + p, 2 * m + p]]
    arr = np.einsum(*operands, list(range(2 * m, 3 * m)), optimize=True)
    np.clip(arr, -1.0, 1.0, out=arr)
    return CorrelatorTable(net, arr)


def half_sum(t: CorrelatorTable, party: str | int, sign: int) -> np.ndarray:
    """``(t[..., 0, ...] + sign * t[..., 1, ...]) / 2`` along a binary party's axis.

    The returned array is indexed by the remaining parties (trivial slots
    included), in network order.
    """
    p = t.network.party_index(party)
    if not t.network.parties[p].alphabet.is_binary():
        raise TableError(f"party {t.network.parties[p].id} is not binary")
    if sign not in (1, -1):
        raise TableError("sign must be +1 or -1")
    v0 = np.take(t.values, 0, axis=p)
    v1 = np.take(t.values, 1, axis=p)
    return (v0 + sign * v1) / 2

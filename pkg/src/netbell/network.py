"""Network topology: independent sources feeding parties, grown by leaf addition.

A network is an immutable value.  Parties and sources keep insertion order,
and that order is canonical for serialization, correlator indexing and the
tensor-factor bookkeeping of the quantum engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

TRIVIAL = None  # the trivial input; its output is the constant +1


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class InputAlphabet:
    """Nontrivial inputs of one party, plus whether the trivial input is usable."""

    inputs: tuple[Hashable, ...] = (0, 1)
    trivial: bool = True

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise NetworkError("input alphabet must contain at least one nontrivial input")
        if len(set(self.inputs)) != len(self.inputs):
            raise NetworkError(f"duplicate inputs in alphabet {self.inputs!r}")
        if TRIVIAL in self.inputs:
            raise NetworkError("the trivial input cannot be listed among nontrivial inputs")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def radix(self) -> int:
        """Table extent along this party: nontrivial inputs followed by the trivial slot."""
        return len(self.inputs) + 1

    def index(self, symbol) -> int:
        if symbol is TRIVIAL:
            return len(self.inputs)
        try:
            return self.inputs.index(symbol)
        except ValueError:
            raise NetworkError(f"input {symbol!r} not in alphabet {self.inputs!r}") from None

    def symbol(self, index: int):
        return TRIVIAL if index == len(self.inputs) else self.inputs[index]

    def is_binary(self) -> bool:
        return len(self.inputs) == 2


BINARY = InputAlphabet((0, 1))


@dataclass(frozen=True)
class Party:
    id: str
    alphabet: InputAlphabet = BINARY


@dataclass(frozen=True)
class Source:
    id: str
    feeds: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "feeds", tuple(self.feeds))


@dataclass(frozen=True)
class Network:
    parties: tuple[Party, ...]
    sources: tuple[Source, ...]
    _party_index: dict = field(init=False, repr=False, compare=False, hash=False)
    _source_index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "parties", tuple(self.parties))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "_party_index", {p.id: i for i, p in enumerate(self.parties)})
        object.__setattr__(self, "_source_index", {s.id: i for i, s in enumerate(self.sources)})

    @property
    def num_parties(self) -> int:
        return len(self.parties)

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def party_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.parties)

    @property
    def alphabets(self) -> tuple[InputAlphabet, ...]:
        return tuple(p.alphabet for p in self.parties)

    @property
    def shape(self) -> tuple[int, ...]:
        """Dense correlator-table shape (trivial slot last on each axis)."""
        return tuple(p.alphabet.radix for p in self.parties)

    def party_index(self, party: str | int) -> int:
        if isinstance(party, int):
            if not 0 <= party < len(self.parties):
                raise NetworkError(f"party index {party} out of range")
            return party
        try:
            return self._party_index[party]
        except KeyError:
            raise NetworkError(f"unknown party {party!r}") from None

    def source_index(self, source: str) -> int:
        try:
            return self._source_index[source]
        except KeyError:
            raise NetworkError(f"unknown source {source!r}") from None

    def sources_of(self, party: str | int) -> tuple[int, ...]:
        """Indices of the sources feeding ``party``, in source order."""
        pid = self.parties[self.party_index(party)].id
        return tuple(i for i, s in enumerate(self.sources) if pid in s.feeds)

    def to_dict(self) -> dict:
        return {
            "parties": [
                {"id": p.id, "inputs": list(p.alphabet.inputs), "trivial": p.alphabet.trivial}
                for p in self.parties
            ],
            "sources": [{"id": s.id, "feeds": list(s.feeds)} for s in self.sources],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        try:
            parties = tuple(
                Party(str(p["id"]), InputAlphabet(tuple(p["inputs"]), bool(p.get("trivial", True))))
                for p in data["parties"]
            )
            sources = tuple(Source(str(s["id"]), tuple(str(f) for f in s["feeds"])) for s in data["sources"])
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed network document: {exc}") from exc
        return cls(parties, sources)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


def seed_network(num_parties: int, alphabets: Sequence[InputAlphabet] | None = None) -> Network:
    """Single source feeding every party: the standard Bell scenario."""
    if num_parties < 1:
        raise NetworkError("a network needs at least one party")
    if alphabets is None:
        alphabets = [BINARY] * num_parties
    if len(alphabets) != num_parties:
        raise NetworkError(f"expected {num_parties} alphabets, got {len(alphabets)}")
    parties = tuple(Party(f"A{i + 1}", a) for i, a in enumerate(alphabets))
    return Network(parties, (Source("S1", tuple(p.id for p in parties)),))


def add_leaf(
    net: Network,
    anchor: str | int,
    alphabet: InputAlphabet = BINARY,
    party_id: str | None = None,
    source_id: str | None = None,
) -> Network:
    """Attach a new source feeding ``anchor`` and a new binary-input party."""
    anchor_id = net.parties[net.party_index(anchor)].id
    if not alphabet.is_binary():
        raise NetworkError("a leaf party must have exactly two nontrivial inputs")
    party_id = party_id or _fresh_id("A", net.party_ids)
    source_id = source_id or _fresh_id("S", [s.id for s in net.sources])
    if party_id in net.party_ids:
        raise NetworkError(f"party id {party_id!r} already used")
    return Network(
        net.parties + (Party(party_id, alphabet),),
        net.sources + (Source(source_id, (anchor_id, party_id)),),
    )


def _fresh_id(prefix: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    n = len(taken) + 1
    while f"{prefix}{n}" in taken:
        n += 1
    return f"{prefix}{n}"


def validate(net: Network) -> list[str]:
    """Structural diagnostics; an empty list means the network is usable.

    Sources feeding the same party set are merged before the cycle test, so
    parallel sources are tolerated while genuine loops are reported.
    """
    out = []
    ids = [p.id for p in net.parties]
    if len(set(ids)) != len(ids):
        out.append("duplicate party id")
    sids = [s.id for s in net.sources]
    if len(set(sids)) != len(sids):
        out.append("duplicate source id")
    known = set(ids)
    for s in net.sources:
        if not s.feeds:
            out.append(f"source {s.id} feeds no party")
        if len(set(s.feeds)) != len(s.feeds):
            out.append(f"source {s.id} feeds a party twice")
        for f in s.feeds:
            if f not in known:
                out.append(f"source {s.id} feeds unknown party {f}")
    fed = {f for s in net.sources for f in s.feeds}
    for pid in ids:
        if pid not in fed:
            out.append(f"disconnected party {pid}")
    if _has_cycle(net):
        out.append("cyclic incidence: the party-source graph is not a forest")
    return out


def _has_cycle(net: Network) -> bool:
    # union-find over the bipartite party/source graph
    hyperedges = {frozenset(s.feeds) for s in net.sources}
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for n, edge in enumerate(sorted(hyperedges, key=sorted)):
        node = ("source", n)
        for pid in sorted(edge):
            a, b = find(node), find(("party", pid))
            if a == b:
                return True
            parent[a] = b
    return False


def is_valid(net: Network) -> bool:
    return not validate(net)

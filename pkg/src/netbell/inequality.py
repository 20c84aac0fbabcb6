"""Linear and quantified Bell expressions and the leaf-extension operator.

A quantified expression reads

    exists q in [0,1]^k :  sum_g w_g(q) * S_g  +  S_0  <=  L

where each ``S_g`` is a linear combination of correlators (optionally taken
in absolute value), ``w_g`` is a product of ``1/q_j`` and ``1/(1 - q_j)``
factors, and ``S_0`` is the unweighted block.  :func:`extend` turns an
expression valid for a network into one valid after a leaf is attached to a
party; :func:`evaluate` eliminates the quantifiers numerically for a given
correlator table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy import optimize

from . import quantifiers as qf
from .correlations import CorrelatorTable, tuple_index
from .network import TRIVIAL, Network

VIOLATION_TOL = 1e-9
CROSSCHECK_TOL = 1e-8

PLUS, MINUS = qf.PLUS, qf.MINUS


class ExpressionError(ValueError):
    pass


Term = tuple[float, tuple]  # (coefficient, input tuple)


def merge_terms(net: Network, terms: Iterable[Term]) -> tuple[Term, ...]:
    """Validate tuples, merge duplicates, drop zero coefficients; keeps first-seen order."""
    merged: dict[tuple, float] = {}
    for beta, inputs in terms:
        inputs = tuple(inputs)
        tuple_index(net, inputs)
        merged[inputs] = merged.get(inputs, 0.0) + float(beta)
    return tuple((b, x) for x, b in merged.items() if b != 0.0)


@dataclass(frozen=True)
class LinearBellExpression:
    network: Network
    terms: tuple[Term, ...]
    bound: float

    def __post_init__(self):
        object.__setattr__(self, "terms", merge_terms(self.network, self.terms))
        object.__setattr__(self, "bound", float(self.bound))

    def value(self, t: CorrelatorTable) -> float:
        return float(sum(b * t[x] for b, x in self.terms))

    def coefficient_array(self) -> np.ndarray:
        """Coefficients laid out like a correlator table."""
        arr = np.zeros(self.network.shape)
        for b, x in self.terms:
            arr[tuple_index(self.network, x)] += b
        return arr


@dataclass(frozen=True)
class QuantifierFactor:
    j: int
    branch: int  # PLUS -> 1/q_j, MINUS -> 1/(1 - q_j)

    def __post_init__(self):
        if self.branch not in (PLUS, MINUS):
            raise ExpressionError(f"branch must be +1 or -1, got {self.branch!r}")


@dataclass(frozen=True)
class Group:
    factors: tuple[QuantifierFactor, ...]
    terms: tuple[Term, ...]
    abs: bool = False

    def factor_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((f.j, f.branch) for f in self.factors)


@dataclass(frozen=True)
class Partition:
    party: str
    plus: frozenset
    minus: frozenset

    def __init__(self, party: str, plus: Iterable[Hashable], minus: Iterable[Hashable]):
        object.__setattr__(self, "party", party)
        object.__setattr__(self, "plus", frozenset(plus))
        object.__setattr__(self, "minus", frozenset(minus))
        if self.plus & self.minus:
            raise ExpressionError("partition sets must be disjoint")

    def check(self, net: Network) -> None:
        inputs = set(net.parties[net.party_index(self.party)].alphabet.inputs)
        if (self.plus | self.minus) != inputs:
            raise ExpressionError(
                f"partition {sorted(self.plus, key=str)}/{sorted(self.minus, key=str)} "
                f"does not cover the inputs {sorted(inputs, key=str)} of {self.party}"
            )


@dataclass(frozen=True)
class QuantifiedBellExpression:
    network: Network
    k: int
    groups: tuple[Group, ...]
    bound: float
    unweighted: tuple[Term, ...] = ()

    def __post_init__(self):
        net = self.network
        groups = []
        for g in self.groups:
            factors = tuple(g.factors)
            if len({f.j for f in factors}) != len(factors):
                raise ExpressionError("a group uses the same quantifier twice")
            for f in factors:
                if not 0 <= f.j < self.k:
                    raise ExpressionError(f"quantifier index {f.j} out of range for k={self.k}")
            groups.append(Group(factors, merge_terms(net, g.terms), bool(g.abs)))
        object.__setattr__(self, "groups", tuple(groups))
        object.__setattr__(self, "unweighted", merge_terms(net, self.unweighted))
        object.__setattr__(self, "bound", float(self.bound))

    # -- compilation --------------------------------------------------------

    def structure(self) -> qf.WeightStructure:
        pairs = [g.factor_pairs() for g in self.groups] + [()]
        return qf.WeightStructure.from_groups(self.k, pairs)

    def coefficient_matrix(self) -> np.ndarray:
        """Rows: groups then the unweighted block; columns: flat table index."""
        size = int(np.prod(self.network.shape))
        mat = np.zeros((len(self.groups) + 1, size))
        blocks = [g.terms for g in self.groups] + [self.unweighted]
        for r, terms in enumerate(blocks):
            for b, x in terms:
                mat[r, np.ravel_multi_index(tuple_index(self.network, x), self.network.shape)] += b
        return mat

    def abs_mask(self) -> np.ndarray:
        return np.array([g.abs for g in self.groups] + [False])

    def group_values(self, tables: np.ndarray) -> np.ndarray:
        """Group values for flat tables ``(B, size)``; abs applied where flagged."""
        vals = np.atleast_2d(tables) @ self.coefficient_matrix().T
        mask = self.abs_mask()
        vals[:, mask] = np.abs(vals[:, mask])
        return vals

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "k": self.k,
            "bound": self.bound,
            "groups": [
                {
                    "factors": [{"j": f.j, "branch": "+" if f.branch == PLUS else "-"} for f in g.factors],
                    "abs": g.abs,
                    "terms": [{"beta": b, "inputs": list(x)} for b, x in g.terms],
                }
                for g in self.groups
            ],
            "unweighted": [{"beta": b, "inputs": list(x)} for b, x in self.unweighted],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuantifiedBellExpression":
        try:
            net = Network.from_dict(data["network"])
            groups = tuple(
                Group(
                    tuple(QuantifierFactor(int(f["j"]), _branch(f["branch"])) for f in g.get("factors", [])),
                    tuple((float(t["beta"]), tuple(t["inputs"])) for t in g["terms"]),
                    bool(g.get("abs", False)),
                )
                for g in data["groups"]
            )
            unweighted = tuple((float(t["beta"]), tuple(t["inputs"])) for t in data.get("unweighted", []))
            return cls(net, int(data["k"]), groups, float(data["bound"]), unweighted)
        except (KeyError, TypeError) as exc:
            raise ExpressionError(f"malformed inequality document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "QuantifiedBellExpression":
        return cls.from_dict(json.loads(text))


def _branch(s) -> int:
    if s in ("+", 1, "plus"):
        return PLUS
    if s in ("-", -1, "minus"):
        return MINUS
    raise ExpressionError(f"unknown branch {s!r}")


def lift(lin: LinearBellExpression) -> QuantifiedBellExpression:
    """Embed a linear expression as a quantified one with no quantifiers."""
    return QuantifiedBellExpression(lin.network, 0, (Group((), lin.terms),), lin.bound)


def _check_leaf(net: Network, net2: Network, anchor: str, new_party: str) -> None:
    ok = (
        net2.num_parties == net.num_parties + 1
        and net2.num_sources == net.num_sources + 1
        and net2.parties[:-1] == net.parties
        and net2.sources[:-1] == net.sources
        and net2.parties[-1].id == new_party
        and set(net2.sources[-1].feeds) == {anchor, new_party}
    )
    if not ok:
        raise ExpressionError(f"target network is not the source network with a leaf at {anchor}")
    if not net2.parties[-1].alphabet.is_binary():
        raise ExpressionError("the new party must have binary inputs")


def extend(
    expr: QuantifiedBellExpression,
    net2: Network,
    anchor: str | int,
    part: Partition,
    new_party: str | None = None,
) -> QuantifiedBellExpression:
    """Extend ``expr`` to ``net2 = add_leaf(expr.network, anchor)``.

    Terms whose anchor input lies in the plus set gain a ``1/q_new`` factor
    and multiply by ``(a_0 + a_1)/2`` of the new party; minus-set terms gain
    ``1/(1 - q_new)`` and ``(a_0 - a_1)/2``; terms where the anchor is trivial
    keep their weight, with the new party trivial as well.
    """
    net = expr.network
    a = net.party_index(anchor)
    anchor_id = net.parties[a].id
    new_party = new_party or net2.parties[-1].id
    _check_leaf(net, net2, anchor_id, new_party)
    if part.party != anchor_id:
        raise ExpressionError(f"partition is for {part.party}, anchor is {anchor_id}")
    part.check(net)
    j_new = expr.k
    first, second = net2.parties[-1].alphabet.inputs

    def split(terms):
        plus, minus, trivial = [], [], []
        for b, x in terms:
            s = x[a]
            if s is TRIVIAL:
                trivial.append((b, x + (TRIVIAL,)))
            elif s in part.plus:
                plus += [(b / 2, x + (first,)), (b / 2, x + (second,))]
            else:
                minus += [(b / 2, x + (first,)), (-b / 2, x + (second,))]
        return plus, minus, trivial

    groups: list[Group] = []
    unweighted: list[Term] = []
    blocks = [(g.factors, g.terms, g.abs) for g in expr.groups] + [((), expr.unweighted, False)]
    for factors, terms, is_abs in blocks:
        plus, minus, trivial = split(terms)
        pieces = [
            (factors + (QuantifierFactor(j_new, PLUS),), plus),
            (factors + (QuantifierFactor(j_new, MINUS),), minus),
            (factors, trivial),
        ]
        pieces = [(f, t) for f, t in pieces if t]
        if is_abs and len(pieces) > 1:
            raise ExpressionError("an absolute-value group cannot be split by the partition")
        for f, t in pieces:
            if not f and not is_abs:
                unweighted += t
            else:
                groups.append(Group(f, tuple(t), is_abs))
    return QuantifiedBellExpression(net2, expr.k + 1, tuple(groups), expr.bound, tuple(unweighted))


def extend_family(
    exprs: Sequence[QuantifiedBellExpression],
    net2: Network,
    anchor: str | int,
    part: Partition,
    new_party: str | None = None,
) -> list[QuantifiedBellExpression]:
    """Extend several inequalities of one network with a shared new quantifier."""
    if not exprs:
        return []
    net, k = exprs[0].network, exprs[0].k
    for e in exprs:
        if e.network != net:
            raise ExpressionError("family members live on different networks")
        if e.k != k:
            raise ExpressionError("family members have different quantifier counts")
    return [extend(e, net2, anchor, part, new_party) for e in exprs]


def _signed_equal(a: tuple[Term, ...], b: tuple[Term, ...]):
    """Return +1/-1 if ``b == sign * a`` as term maps, else None."""
    da, db = {x: v for v, x in a}, {x: v for v, x in b}
    if da.keys() != db.keys():
        return None
    for sign in (1, -1):
        if all(math.isclose(db[x], sign * da[x], rel_tol=1e-12, abs_tol=1e-15) for x in da):
            return sign
    return None


def symmetrize_abs(family: Sequence[QuantifiedBellExpression]) -> QuantifiedBellExpression:
    """Combine sign variants of one group structure into an absolute-value form.

    The caller certifies that every sign variant is a valid inequality; the
    check here is purely structural.
    """
    if not family:
        raise ExpressionError("empty family")
    base = family[0]
    for e in family[1:]:
        if (e.network, e.k, e.bound) != (base.network, base.k, base.bound):
            raise ExpressionError("family members differ in network, quantifier count or bound")
        if len(e.groups) != len(base.groups):
            raise ExpressionError("family members have different group counts")
        if _signed_equal(base.unweighted, e.unweighted) != 1 and (base.unweighted or e.unweighted):
            raise ExpressionError("family members differ in their unweighted block")
        for g, h in zip(base.groups, e.groups):
            if g.factors != h.factors or _signed_equal(g.terms, h.terms) is None:
                raise ExpressionError("family members are not sign variants of one structure")
    groups = tuple(replace(g, abs=True) for g in base.groups)
    return replace(base, groups=groups)


def eliminate_complementary(
    plus_expr: QuantifiedBellExpression, minus_expr: QuantifiedBellExpression
) -> QuantifiedBellExpression:
    """Eliminate a quantifier shared by ``|S+|/q <= L`` and ``|S-|/(1-q) <= L``.

    Both constraints hold for a common ``q`` iff ``|S+| + |S-| <= L``.
    """
    for e, branch in ((plus_expr, PLUS), (minus_expr, MINUS)):
        if e.k != 1 or len(e.groups) != 1 or e.unweighted:
            raise ExpressionError("each input must have one quantifier, one group and no unweighted block")
        g = e.groups[0]
        if not g.abs or g.factor_pairs() != ((0, branch),):
            raise ExpressionError("groups must be absolute-valued with complementary single factors")
    if plus_expr.network != minus_expr.network or plus_expr.bound != minus_expr.bound:
        raise ExpressionError("inputs differ in network or bound")
    groups = (Group((), plus_expr.groups[0].terms, True), Group((), minus_expr.groups[0].terms, True))
    return QuantifiedBellExpression(plus_expr.network, 0, groups, plus_expr.bound)


# -- evaluation ----------------------------------------------------------------


@dataclass
class EvaluationResult:
    """Outcome of eliminating the quantifiers for one correlator table.

    ``margin`` is ``min_lhs - bound``; the table violates the inequality when
    it exceeds the tolerance.
    """

    min_lhs: float
    argmin_q: tuple[float, ...]
    violated: bool
    margin: float
    bound: float
    method: str
    shape: str = "generic"
    group_values: tuple[float, ...] = ()
    sweeps: int = 0
    trace: tuple[float, ...] = ()
    numeric_min: float | None = None

    @property
    def unbounded(self) -> bool:
        return self.min_lhs == -math.inf

    def to_dict(self) -> dict:
        def num(v):
            return "-inf" if v == -math.inf else v

        return {
            "min_lhs": num(self.min_lhs),
            "argmin_q": list(self.argmin_q),
            "violated": self.violated,
            "margin": num(self.margin),
            "bound": self.bound,
            "method": self.method,
            "shape": self.shape,
            "group_values": list(self.group_values),
            "sweeps": self.sweeps,
            "trace": list(self.trace),
            "numeric_min": self.numeric_min,
        }


def closed_form(expr: QuantifiedBellExpression) -> dict:
    """Describe the quantifier-free form available for ``expr``, if any."""
    name, exponent = expr.structure().shape_name()
    out = {"shape": name}
    if name != "generic":
        out["exponent"] = exponent
        out["formula"] = f"(|S+|^(1/{exponent}) + |S-|^(1/{exponent}))^{exponent} + S0"
    return out


class BatchEvaluator:
    """Evaluate one expression against many tables (flattened) at once."""

    def __init__(self, expr: QuantifiedBellExpression, tol: float = VIOLATION_TOL):
        self.expr = expr
        self.tol = tol
        self.struct = expr.structure()
        self.shape, self.exponent = self.struct.shape_name()
        self.matrix = expr.coefficient_matrix()
        self.abs_mask = expr.abs_mask()

    def values(self, flat_tables: np.ndarray) -> np.ndarray:
        vals = np.atleast_2d(flat_tables) @ self.matrix.T
        vals[:, self.abs_mask] = np.abs(vals[:, self.abs_mask])
        return vals

    def minimize(self, flat_tables: np.ndarray, keep_trace: bool = False):
        vals = self.values(flat_tables)
        c, const = self.struct.reduce(vals)
        res = qf.minimize(self.struct, c, const, keep_trace=keep_trace)
        numeric = res.value.copy()
        closed = None
        if self.shape != "generic":
            plus_cls = self.struct.factors.index(tuple((j, PLUS) for j in range(self.struct.k)))
            minus_cls = 1 - plus_cls
            ok = (c >= 0).all(axis=1)
            if ok.any():
                cv, qstar = qf.closed_form_minimum(self.exponent, c[ok, plus_cls], c[ok, minus_cls], const[ok])
                delta = np.abs(cv - numeric[ok])
                scale = 1.0 + np.abs(cv)
                if np.any(delta > CROSSCHECK_TOL * scale):
                    worst = float(np.max(delta / scale))
                    raise ArithmeticError(f"closed form and coordinate descent disagree by {worst:.3g}")
                res.value[ok] = cv
                res.q[ok] = np.repeat(qstar[:, None], self.struct.k, axis=1)
                res.method[ok] = "closed-form"
                closed = ok
        return vals, res, numeric, closed

    def max_margin(self, flat_tables: np.ndarray) -> tuple[float, int]:
        """Largest ``min_lhs - bound`` over the batch and its position."""
        _, res, _, _ = self.minimize(flat_tables)
        margins = res.value - self.expr.bound
        i = int(np.argmax(margins))
        return float(margins[i]), i


def evaluate(
    expr: QuantifiedBellExpression, t: CorrelatorTable, tol: float = VIOLATION_TOL
) -> EvaluationResult:
    """Minimize the left-hand side over the quantifiers and compare with the bound."""
    if t.network != expr.network:
        raise ExpressionError("table and expression live on different networks")
    ev = BatchEvaluator(expr, tol)
    vals, res, numeric, closed = ev.minimize(t.values.reshape(1, -1), keep_trace=True)
    value = float(res.value[0])
    margin = value - expr.bound
    return EvaluationResult(
        min_lhs=value,
        argmin_q=tuple(float(v) for v in res.q[0]),
        violated=bool(margin > tol),
        margin=float(margin),
        bound=expr.bound,
        method=str(res.method[0]),
        shape=ev.shape,
        group_values=tuple(float(v) for v in vals[0]),
        sweeps=int(res.sweeps[0]),
        trace=tuple(float(tr[0]) for tr in res.trace),
        numeric_min=float(numeric[0]) if closed is not None else None,
    )


@dataclass
class FamilyResult:
    feasible: bool
    worst_margin: float
    argmin_q: tuple[float, ...]
    member_lhs: tuple[float, ...]


def evaluate_family(
    exprs: Sequence[QuantifiedBellExpression], t: CorrelatorTable, tol: float = VIOLATION_TOL
) -> FamilyResult:
    """Joint quantifier test: is there one ``q`` satisfying every member?

    Minimizes ``max_m (lhs_m(q) - bound_m)`` over ``[0, 1]^k``.  For a
    single quantifier this is a grid scan refined by bounded Brent search;
    with several quantifiers Nelder-Mead restarts from the best grid points.
    """
    if not exprs:
        raise ExpressionError("empty family")
    k = exprs[0].k
    for e in exprs:
        if e.k != k or e.network != t.network:
            raise ExpressionError("family members must share network and quantifier count")
    parts = []
    for e in exprs:
        ev = BatchEvaluator(e)
        c, const = ev.struct.reduce(ev.values(t.values.reshape(1, -1)))
        c[(c < 0) & (c > -qf.ZERO_TOL)] = 0.0
        parts.append((ev.struct, c, const, e.bound))

    def worst(q):
        q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        lhs = [float(qf.objective(s, c, const, q[None, :])[0]) for s, c, const, _ in parts]
        return max(v - b for v, (_, _, _, b) in zip(lhs, parts)), lhs

    if k == 0:
        m, lhs = worst(np.zeros(0))
        return FamilyResult(m <= tol, m, (), tuple(lhs))
    grid_1d = np.linspace(0.0, 1.0, 401 if k == 1 else 21)
    candidates = []
    for point in np.array(np.meshgrid(*[grid_1d] * k, indexing="ij")).reshape(k, -1).T:
        candidates.append((worst(point)[0], tuple(point)))
    candidates.sort(key=lambda c: c[0])
    best_m, best_q = candidates[0]
    if k == 1:
        step = grid_1d[1]
        centre = best_q[0]
        lo, hi = max(0.0, centre - step), min(1.0, centre + step)
        if hi > lo:
            r = optimize.minimize_scalar(lambda x: worst([x])[0], bounds=(lo, hi), method="bounded",
                                         options={"xatol": 1e-13})
            if r.fun < best_m:
                best_m, best_q = float(r.fun), (float(r.x),)
    else:
        for _, start in candidates[:5]:
            r = optimize.minimize(lambda x: worst(x)[0], np.array(start), method="Nelder-Mead",
                                  options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
            if r.fun < best_m:
                best_m, best_q = float(r.fun), tuple(np.clip(r.x, 0, 1))
    _, lhs = worst(best_q)
    return FamilyResult(best_m <= tol, float(best_m), tuple(float(v) for v in best_q), tuple(lhs))

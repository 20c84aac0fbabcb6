"""Minimization of quantifier-weighted sums over ``q in [0, 1]^k``.

The objective is ``sum_g c_g * prod_{(j, b) in g} phi_b(q_j) + const`` with
``phi_+(q) = 1/q`` and ``phi_-(q) = 1/(1 - q)``.  Boundary values of ``q`` are
understood as limits, with the convention ``0 * inf = 0``: a coordinate whose
``1/q`` side carries only zero groups sits exactly at ``q = 0``.

For nonnegative ``c`` the objective is jointly convex (each weight is a
product of log-convex factors) and the per-coordinate problem
``A/q + B/(1-q)`` has the exact minimizer ``sqrt(A) / (sqrt(A) + sqrt(B))``,
so cyclic coordinate descent is used.  Everything is vectorized over a batch
of samples sharing one weight structure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

PLUS, MINUS = 1, -1
ZERO_TOL = 1e-13  # negative group values above -ZERO_TOL are rounding noise around 0
CD_TOL = 1e-15
CD_MAX_SWEEPS = 10_000
EPS = 1e-12

Factors = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class WeightStructure:
    """Factor sets of the weighted groups; identical sets are merged."""

    k: int
    factors: tuple[Factors, ...]
    members: tuple[tuple[int, ...], ...] = field(default=())
    constant_members: tuple[int, ...] = field(default=())

    @classmethod
    def from_groups(cls, k: int, group_factors) -> "WeightStructure":
        classes: dict[Factors, list[int]] = {}
        constant = []
        for g, fs in enumerate(group_factors):
            fs = tuple(sorted((int(j), int(b)) for j, b in fs))
            if len({j for j, _ in fs}) != len(fs):
                raise ValueError(f"group {g} uses a quantifier twice")
            for j, b in fs:
                if not 0 <= j < k or b not in (PLUS, MINUS):
                    raise ValueError(f"bad factor {(j, b)} for k={k}")
            if fs:
                classes.setdefault(fs, []).append(g)
            else:
                constant.append(g)
        factors = tuple(classes)
        return cls(k, factors, tuple(tuple(v) for v in classes.values()), tuple(constant))

    @property
    def num_classes(self) -> int:
        return len(self.factors)

    def reduce(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Collapse per-group values ``(B, G)`` into class values and a constant."""
        values = np.atleast_2d(values)
        c = np.stack([values[:, list(m)].sum(axis=1) for m in self.members], axis=1) if self.members else np.zeros((values.shape[0], 0))
        const = values[:, list(self.constant_members)].sum(axis=1) if self.constant_members else np.zeros(values.shape[0])
        return c, const

    def shape_name(self) -> tuple[str, int]:
        """Recognize the two closed-form shapes; returns (name, exponent)."""
        if self.num_classes == 2 and self.k >= 1:
            a, b = self.factors
            all_plus = tuple((j, PLUS) for j in range(self.k))
            all_minus = tuple((j, MINUS) for j in range(self.k))
            if {a, b} == {all_plus, all_minus}:
                return ("bilocal-sqrt" if self.k == 1 else "star-root-N"), self.k + 1
        return "generic", 0

    def maximal(self) -> np.ndarray:
        sets = [set(f) for f in self.factors]
        return np.array([not any(s < t for t in sets) for s in sets], dtype=bool)


@dataclass
class Minimum:
    value: np.ndarray  # (B,)
    q: np.ndarray  # (B, k)
    method: np.ndarray  # (B,) of str
    sweeps: np.ndarray  # (B,)
    trace: list = field(default_factory=list)  # objective after each sweep, per batch


def _factor(q, b):
    with np.errstate(divide="ignore"):
        return 1.0 / q if b == PLUS else 1.0 / (1.0 - q)


def objective(struct: WeightStructure, c: np.ndarray, const: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Objective at ``q`` (boundaries allowed) with the ``0 * inf = 0`` convention."""
    c = np.atleast_2d(c)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    total = np.array(const, dtype=float, copy=True)
    with np.errstate(invalid="ignore"):
        for g, fs in enumerate(struct.factors):
            w = np.ones(c.shape[0])
            for j, b in fs:
                w = w * _factor(q[:, j], b)
            contrib = np.where(c[:, g] == 0, 0.0, c[:, g] * w)
            total = total + contrib
    return total


def minimize(struct: WeightStructure, c: np.ndarray, const: np.ndarray, keep_trace: bool = False) -> Minimum:
    """Minimize over ``[0, 1]^k`` for a batch of class values ``c`` (B, G)."""
    c = np.array(np.atleast_2d(c), dtype=float)
    const = np.asarray(const, dtype=float).reshape(-1)
    batch = c.shape[0]
    c[(c < 0) & (c > -ZERO_TOL)] = 0.0
    value = np.empty(batch)
    q = np.full((batch, struct.k), 0.5)
    method = np.empty(batch, dtype=object)
    sweeps = np.zeros(batch, dtype=int)

    if struct.num_classes == 0:
        value[:] = const
        method[:] = "constant"
        return Minimum(value, q, method, sweeps)

    neg = c < 0
    unbounded = (neg & struct.maximal()[None, :]).any(axis=1)
    for b in np.flatnonzero(unbounded):
        g = int(np.flatnonzero(neg[b] & struct.maximal())[0])
        q[b] = _corner(struct, g)
        value[b] = -np.inf
        method[b] = "unbounded"
    mixed = neg.any(axis=1) & ~unbounded
    for b in np.flatnonzero(mixed):
        value[b], q[b], method[b] = _general_minimum(struct, c[b], const[b])

    convex = ~neg.any(axis=1)
    trace = []
    if convex.any():
        idx = np.flatnonzero(convex)
        v, qq, sw, tr = _coordinate_descent(struct, c[idx], const[idx], keep_trace)
        value[idx], q[idx], sweeps[idx] = v, qq, sw
        method[idx] = "coordinate-descent"
        trace = tr
    return Minimum(value, q, method, sweeps, trace)


def _corner(struct: WeightStructure, g: int) -> np.ndarray:
    q = np.full(struct.k, 0.5)
    for j, b in struct.factors[g]:
        q[j] = 0.0 if b == PLUS else 1.0
    return q


def _coordinate_descent(struct, c, const, keep_trace):
    batch, _ = c.shape
    k = struct.k
    active = c > 0
    plus_of = [[g for g, fs in enumerate(struct.factors) if (j, PLUS) in fs] for j in range(k)]
    minus_of = [[g for g, fs in enumerate(struct.factors) if (j, MINUS) in fs] for j in range(k)]
    has_plus = np.stack([active[:, plus_of[j]].any(axis=1) for j in range(k)], axis=1)
    has_minus = np.stack([active[:, minus_of[j]].any(axis=1) for j in range(k)], axis=1)
    interior = has_plus & has_minus
    q = np.full((batch, k), 0.5)
    q[has_plus & ~has_minus] = 1.0
    q[~has_plus & has_minus] = 0.0

    def partial_sum(groups, j):
        s = np.zeros(batch)
        for g in groups:
            w = np.where(active[:, g], c[:, g], 0.0)
            for jj, b in struct.factors[g]:
                if jj != j:
                    with np.errstate(invalid="ignore"):
                        w = np.where(active[:, g], w * _factor(q[:, jj], b), 0.0)
            s += w
        return s

    sweeps = np.zeros(batch, dtype=int)
    running = interior.any(axis=1)
    trace = []
    if keep_trace:
        trace.append(objective(struct, c, const, q))
    for sweep in range(CD_MAX_SWEEPS):
        if not running.any():
            break
        q_old = q.copy()
        for j in range(k):
            upd = interior[:, j] & running
            if not upd.any():
                continue
            ra = np.sqrt(partial_sum(plus_of[j], j))
            rb = np.sqrt(partial_sum(minus_of[j], j))
            with np.errstate(invalid="ignore", divide="ignore"):
                new = ra / (ra + rb)
            q[upd, j] = new[upd]
        sweeps[running] += 1
        if keep_trace:
            trace.append(objective(struct, c, const, q))
        running &= np.max(np.abs(q - q_old), axis=1) > CD_TOL
    value = objective(struct, c, const, q)
    return value, q, sweeps, trace


def coordinate_optimality_gap(struct: WeightStructure, c, const, q) -> float:
    """Largest distance between an interior coordinate and its closed-form update."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    gap = 0.0
    for j in range(struct.k):
        parts = []
        for branch in (PLUS, MINUS):
            s = np.zeros(c.shape[0])
            for g, fs in enumerate(struct.factors):
                if (j, branch) in fs:
                    w = c[:, g].copy()
                    with np.errstate(invalid="ignore"):
                        for jj, b in fs:
                            if jj != j:
                                w = w * _factor(q[:, jj], b)
                    s += np.where(c[:, g] > 0, w, 0.0)
            parts.append(np.sqrt(s))
        ra, rb = parts
        ok = (ra > 0) & (rb > 0)
        if ok.any():
            gap = max(gap, float(np.max(np.abs(q[ok, j] - ra[ok] / (ra[ok] + rb[ok])))))
    return gap


def closed_form_minimum(exponent: int, c_plus: np.ndarray, c_minus: np.ndarray, const=0.0):
    """``(c+^{1/n} + c-^{1/n})^n`` with common optimizer ``c+^{1/n}/(c+^{1/n}+c-^{1/n})``."""
    rp = np.power(np.asarray(c_plus, dtype=float), 1.0 / exponent)
    rm = np.power(np.asarray(c_minus, dtype=float), 1.0 / exponent)
    s = rp + rm
    with np.errstate(invalid="ignore", divide="ignore"):
        qstar = np.where(s > 0, rp / np.where(s > 0, s, 1.0), 0.5)
    return s**exponent + const, qstar


# -- mixed-sign fallback ------------------------------------------------------


def _general_minimum(struct: WeightStructure, c: np.ndarray, const: float):
    """Single-sample minimum when some non-maximal class is negative.

    A negative class g makes the objective unbounded below iff the leading
    coefficient at the corner of g's factor set can be made negative; that
    coefficient is itself an objective of the same kind on the remaining
    coordinates, so the test recurses.  Otherwise the bounded nonconvex
    problem is solved by multi-start L-BFGS-B.
    """
    for g in np.flatnonzero(c < 0):
        corner = set(struct.factors[g])
        fixed = {j for j, _ in corner}
        rest = [j for j in range(struct.k) if j not in fixed]
        remap = {j: n for n, j in enumerate(rest)}
        sub_groups, sub_vals = [], []
        for h, fs in enumerate(struct.factors):
            if corner <= set(fs):
                sub_groups.append(tuple((remap[j], b) for j, b in fs if j not in fixed))
                sub_vals.append(c[h])
        sub = WeightStructure.from_groups(len(rest), sub_groups)
        sc, sconst = sub.reduce(np.array([sub_vals]))
        inner = minimize(sub, sc, sconst)
        if inner.value[0] < -ZERO_TOL:
            return -np.inf, _corner(struct, g), "unbounded"

    lo, hi = 1e-9, 1 - 1e-9

    def f(x):
        return float(objective(struct, c[None, :], np.array([const]), x[None, :])[0])

    best_x, best_v = None, np.inf
    for start in itertools.product((0.1, 0.5, 0.9), repeat=struct.k):
        res = optimize.minimize(f, np.array(start), method="L-BFGS-B", bounds=[(lo, hi)] * struct.k)
        if res.fun < best_v:
            best_v, best_x = float(res.fun), res.x
    return best_v, best_x, "numeric"

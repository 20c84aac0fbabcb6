"""Named seeds, derived inequalities and quantum scenarios.

Seed inequalities (CHSH, Mermin, I3322 in correlation form) ship as JSON
package data; every network inequality is derived from them with
:func:`~netbell.inequality.extend`, exactly as a user would.
"""

from __future__ import annotations

import re
from importlib import resources

from .inequality import (
    Group,
    LinearBellExpression,
    Partition,
    QuantifiedBellExpression,
    extend,
    extend_family,
    symmetrize_abs,
)
from .network import add_leaf
from .quantum import build_paper_model, visibility_family

SEEDS = ("chsh", "mermin", "i3322")
MAX_CHAIN = 6
MAX_STAR = 4


def load_seed(name: str) -> QuantifiedBellExpression:
    if name not in SEEDS:
        raise KeyError(f"unknown seed {name!r}; choose from {SEEDS}")
    text = resources.files("netbell").joinpath("data", f"{name}.json").read_text()
    return QuantifiedBellExpression.from_json(text)


def seed_linear(name: str) -> LinearBellExpression:
    q = load_seed(name)
    return LinearBellExpression(q.network, q.groups[0].terms + q.unweighted, q.bound)


def sign_variants(expr: QuantifiedBellExpression) -> list[QuantifiedBellExpression]:
    """The four variants ``sigma <(a0 + a1)/2 b0> + tau <(a0 - a1)/2 b1>`` of CHSH.

    Terms with second-party input 0 are scaled by ``sigma``, input 1 by ``tau``.
    """
    g = expr.groups[0]
    out = []
    for sigma in (1, -1):
        for tau in (1, -1):
            terms = tuple((b * (sigma if x[1] == 0 else tau), x) for b, x in g.terms)
            out.append(QuantifiedBellExpression(expr.network, expr.k, (Group(g.factors, terms),), expr.bound))
    return out


def _leaf(expr, anchor, plus=(0,), minus=(1,)):
    net2 = add_leaf(expr.network, anchor)
    return extend(expr, net2, anchor, Partition(anchor, plus, minus))


def _leaf_family(family, anchor, plus=(0,), minus=(1,)):
    net2 = add_leaf(family[0].network, anchor)
    return extend_family(family, net2, anchor, Partition(anchor, plus, minus))


def chain_expression(n_sources: int) -> QuantifiedBellExpression:
    expr = load_seed("chsh")
    for _ in range(n_sources - 1):
        expr = _leaf(expr, expr.network.parties[-1].id)
    return expr


def star_expression(branches: int, absolute: bool = False) -> QuantifiedBellExpression:
    """Star with central party ``A2`` (the middle party of the bilocal chain)."""
    family = sign_variants(load_seed("chsh")) if absolute else [load_seed("chsh")]
    family = _leaf_family(family, "A2")
    for _ in range(branches - 2):
        family = _leaf_family(family, "A2")
    return symmetrize_abs(family) if absolute else family[0]


def expression(name: str) -> QuantifiedBellExpression:
    """Resolve a named inequality (seeds and derived network inequalities)."""
    if name in SEEDS:
        return load_seed(name)
    if name == "bilocal":
        return chain_expression(2)
    if name == "bilocal_abs":
        return symmetrize_abs(_leaf_family(sign_variants(load_seed("chsh")), "A2"))
    if name == "trilocal":
        return chain_expression(3)
    if name == "mermin_net":
        return _leaf(load_seed("mermin"), "A3")
    if name == "i3322_bilocal":
        return _leaf(load_seed("i3322"), "A2", plus=(0,), minus=(1, 2))
    m = re.fullmatch(r"chain\(?(\d+)\)?", name)
    if m:
        n = int(m.group(1))
        if not 1 <= n <= MAX_CHAIN:
            raise KeyError(f"chain length must be in 1..{MAX_CHAIN}")
        return chain_expression(n)
    m = re.fullmatch(r"star\(?(\d+)\)?(_abs)?", name)
    if m:
        n = int(m.group(1))
        if not 2 <= n <= MAX_STAR:
            raise KeyError(f"star branch count must be in 2..{MAX_STAR}")
        return star_expression(n, absolute=bool(m.group(2)))
    raise KeyError(f"unknown inequality preset {name!r}")


EXPRESSION_PRESETS = (
    "chsh", "mermin", "i3322", "bilocal", "bilocal_abs", "trilocal", "mermin_net", "i3322_bilocal",
    *(f"chain{n}" for n in range(2, MAX_CHAIN + 1)),
    *(f"star{n}" for n in range(2, MAX_STAR + 1)),
    *(f"star{n}_abs" for n in range(2, MAX_STAR + 1)),
)


def _scenario_key(name: str) -> tuple[str, int]:
    name = name.replace("(", "").replace(")", "")
    if name == "bilocal":
        return "chain2", 2
    if name == "trilocal":
        return "chain3", 3
    if name == "mermin_net":
        return "mermin_net", 2
    m = re.fullmatch(r"chain(\d+)", name)
    if m and 1 <= int(m.group(1)) <= MAX_CHAIN:
        return name, int(m.group(1))
    raise KeyError(f"unknown scenario preset {name!r}")


def model(name: str, visibilities=None):
    """Quantum model preset; visibilities default to 1 for every source."""
    key, n = _scenario_key(name)
    vis = [1.0] * n if visibilities is None else list(visibilities)
    return build_paper_model(key, vis)


def scenario(name: str):
    """(visibility family, matching inequality) for a threshold scan."""
    key, n = _scenario_key(name)
    expr_name = "mermin_net" if key == "mermin_net" else f"chain{n}"
    return visibility_family(key), expression(expr_name)


SCENARIO_PRESETS = ("bilocal", "trilocal", "mermin_net", *(f"chain{n}" for n in range(2, MAX_CHAIN + 1)))

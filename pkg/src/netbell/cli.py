"""Command-line front end: extend, evaluate, scan, verify, quantum-table, w-eval.

Exit codes: 0 ok, 1 usage or schema error, 2 counterexample found,
3 enumeration budget exceeded.  Outputs are written only after every input
has been validated and the computation has finished.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, oracle, presets, quantum
from .correlations import CorrelatorTable, TableError
from .inequality import (
    ExpressionError,
    Partition,
    QuantifiedBellExpression,
    closed_form,
    evaluate,
    extend,
)
from .invariants import eval_trilocal_W, trilocal_combinations
from .network import NetworkError, add_leaf

EXIT_OK, EXIT_USAGE, EXIT_COUNTEREXAMPLE, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- io helpers ---------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=".netbell-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_expression(args) -> QuantifiedBellExpression:
    if args.input and args.preset:
        raise UsageError("give either --in or --preset, not both")
    if args.input:
        try:
            return QuantifiedBellExpression.from_json(_read(args.input))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.input}: invalid JSON ({exc})") from exc
    if args.preset:
        return presets.expression(args.preset)
    raise UsageError("an inequality is required (--in FILE or --preset NAME)")


def _load_table(path: str, expr: QuantifiedBellExpression) -> CorrelatorTable:
    text = _read(path)
    if path.endswith(".csv"):
        return CorrelatorTable.from_csv(expr.network, text)
    try:
        return CorrelatorTable.from_json(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _load_model(path: str) -> quantum.QuantumNetworkModel:
    try:
        return quantum.QuantumNetworkModel.from_json(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: malformed model document ({exc})") from exc


def _symbols(spec: str, alphabet) -> list:
    out = []
    for cell in filter(None, (c.strip() for c in spec.split(","))):
        match = [s for s in alphabet.inputs if str(s) == cell]
        if not match:
            raise UsageError(f"unknown input symbol {cell!r}; inputs are {list(alphabet.inputs)}")
        out.append(match[0])
    return out


def _scenario_model(name: str, visibility, visibilities):
    key, n = presets._scenario_key(name)
    if visibilities:
        return presets.model(name, visibilities)
    v = 1.0 if visibility is None else visibility
    return quantum.visibility_family(key)(v)


# -- subcommands --------------------------------------------------------------------


def cmd_extend(args) -> int:
    expr = _load_expression(args)
    net = expr.network
    anchor = net.parties[net.party_index(args.anchor)]
    part = Partition(anchor.id, _symbols(args.plus, anchor.alphabet), _symbols(args.minus, anchor.alphabet))
    net2 = add_leaf(net, anchor.id, party_id=args.new_party, source_id=args.new_source)
    out = extend(expr, net2, anchor.id, part)
    new_party, new_source = net2.parties[-1], net2.sources[-1]
    diff = [
        f"+ party {new_party.id} inputs {list(new_party.alphabet.inputs)}",
        f"+ source {new_source.id} feeds {', '.join(new_source.feeds)}",
        f"  quantifiers {expr.k} -> {out.k}; groups {len(expr.groups)} -> {len(out.groups)}; "
        f"shape {closed_form(out)['shape']}",
    ]
    _emit(out.to_json(), args.out)
    print("\n".join(diff), file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    expr = _load_expression(args)
    if bool(args.table) == bool(args.quantum):
        raise UsageError("give exactly one of --table FILE or --quantum SCENARIO")
    if args.table:
        table = _load_table(args.table, expr)
    else:
        table = quantum.correlator_table(_scenario_model(args.quantum, args.visibility, args.visibilities))
    res = evaluate(expr, table, tol=args.tol)
    doc = {"closed_form": closed_form(expr), **res.to_dict()}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    if bool(args.input) == bool(args.preset):
        raise UsageError("give exactly one of --in MODEL or --preset SCENARIO")
    if args.input:
        if not (args.inequality or args.inequality_preset):
            raise UsageError("scanning a model file needs --inequality or --inequality-preset")
        family = quantum.white_noise_family(_load_model(args.input))
        label = args.input
    else:
        family, expr = presets.scenario(args.preset)
        label = args.preset
    if args.inequality:
        expr = QuantifiedBellExpression.from_json(_read(args.inequality))
    elif args.inequality_preset:
        expr = presets.expression(args.inequality_preset)
    res = quantum.threshold_scan(family, expr, tuple(args.range), precision=args.tol)
    doc = {"scenario": label, "precision": args.tol, "range": list(args.range), **res.to_dict()}
    curve = None
    if args.curve:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["V", "min_lhs", "bound", "violated"])
        for v in np.linspace(args.range[0], args.range[1], args.points):
            r = evaluate(expr, quantum.correlator_table(family(float(v))))
            writer.writerow([f"{v:.17g}", f"{r.min_lhs:.17g}", f"{r.bound:.17g}", int(r.violated)])
        curve = buf.getvalue()
    _emit(dumps(doc), args.out)
    if curve is not None:
        _emit(curve, args.curve)
    return EXIT_OK


def cmd_verify(args) -> int:
    expr = _load_expression(args)
    verdict = oracle.verify_quantified(
        expr,
        enum_hidden=args.enum_hidden,
        num_mixture_samples=args.samples,
        seed=args.seed,
        sample_hidden=args.hidden,
        dedup=not args.no_dedup,
        budget=args.budget,
        tol=args.tol,
    )
    _emit(dumps(verdict.to_dict()), args.out)
    return EXIT_OK if verdict.verified else EXIT_COUNTEREXAMPLE


def cmd_quantum_table(args) -> int:
    if bool(args.input) == bool(args.preset):
        raise UsageError("give exactly one of --in MODEL or --preset SCENARIO")
    if args.input:
        model = _load_model(args.input)
        if args.visibility is not None:
            model = quantum.white_noise_family(model)(args.visibility)
    else:
        model = _scenario_model(args.preset, args.visibility, args.visibilities)
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "json")
    if fmt == "model":
        text = model.to_json()
    else:
        table = quantum.correlator_table(model)
        text = table.to_csv() if fmt == "csv" else table.to_json()
    _emit(text, args.out)
    return EXIT_OK


def cmd_w_eval(args) -> int:
    chosen = [x is not None for x in (args.values, args.input, args.range)]
    if sum(chosen) != 1:
        raise UsageError("give exactly one of --values I J K L, --in TABLE or --range LO HI")
    if args.range is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["V", "W", "reference"])
        for v in np.linspace(args.range[0], args.range[1], args.points):
            c = v / 2**1.5
            w = eval_trilocal_W(c, c, c, -c)
            writer.writerow([f"{v:.17g}", f"{w:.17g}", f"{3 * v**4 * (1 - 2**1.5 * v):.17g}"])
        _emit(buf.getvalue(), args.out)
        return EXIT_OK
    if args.values is not None:
        ijkl = tuple(float(x) for x in args.values)
    else:
        table = CorrelatorTable.from_json(_read(args.input))
        if table.network.shape != (3, 3, 3, 3):
            raise UsageError("--in must hold a four-party binary-input (trilocal chain) table")
        ijkl = tuple(float(x) for x in trilocal_combinations(table.values))
    w = float(eval_trilocal_W(*ijkl))
    doc = {"I": ijkl[0], "J": ijkl[1], "K": ijkl[2], "L": ijkl[3], "W": w, "satisfied": w >= -args.tol}
    _emit(dumps(doc), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _add_expression_source(p):
    p.add_argument("--in", dest="input", metavar="FILE", help="inequality JSON")
    p.add_argument("--preset", metavar="NAME", help=f"named inequality: {', '.join(presets.EXPRESSION_PRESETS)}")


def _add_visibility(p):
    p.add_argument("--visibility", type=float, metavar="V", help="total visibility, spread evenly over sources")
    p.add_argument("--visibilities", type=float, nargs="+", metavar="v", help="per-source visibilities")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netbell", description="Bell inequalities for acyclic quantum networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extend", help="attach a leaf and extend an inequality")
    _add_expression_source(p)
    p.add_argument("--anchor", required=True, help="party receiving the new source")
    p.add_argument("--plus", required=True, metavar="SYMS", help="comma-separated plus-set inputs of the anchor")
    p.add_argument("--minus", required=True, metavar="SYMS", help="comma-separated minus-set inputs of the anchor")
    p.add_argument("--new-party", help="id of the new party (default: next free A<n>)")
    p.add_argument("--new-source", help="id of the new source (default: next free S<n>)")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("evaluate", help="eliminate the quantifiers for one correlator table")
    _add_expression_source(p)
    p.add_argument("--table", metavar="FILE", help="correlator table (.json, or .csv on the inequality's network)")
    p.add_argument("--quantum", metavar="SCENARIO", help=f"use a quantum preset: {', '.join(presets.SCENARIO_PRESETS)}")
    _add_visibility(p)
    p.add_argument("--tol", type=float, default=1e-9, help="violation tolerance")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scan", help="critical visibility by bisection")
    p.add_argument("--preset", metavar="SCENARIO", help=f"scenario: {', '.join(presets.SCENARIO_PRESETS)}")
    p.add_argument("--in", dest="input", metavar="FILE", help="quantum model JSON; white noise is added per source")
    p.add_argument("--inequality", metavar="FILE", help="inequality JSON (overrides the preset's)")
    p.add_argument("--inequality-preset", metavar="NAME")
    p.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--tol", type=float, default=1e-7, help="bisection precision on V")
    p.add_argument("--curve", metavar="CSV", help="also write min_lhs against V as CSV")
    p.add_argument("--points", type=int, default=101, help="points on the --curve grid")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify", help="search N-local models for a violation")
    _add_expression_source(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000, help="sampled mixtures")
    p.add_argument("--hidden", type=int, default=oracle.DEFAULT_CARDINALITY, help="hidden alphabet size when sampling")
    p.add_argument("--enum-hidden", type=int, default=2, help="hidden alphabet size when enumerating")
    p.add_argument("--no-dedup", action="store_true", help="enumerate every point mass and response table")
    p.add_argument("--budget", type=int, default=oracle.DEFAULT_BUDGET, help="maximum enumerated strategies")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("quantum-table", help="correlator table of a quantum network model")
    p.add_argument("--preset", metavar="SCENARIO", help=f"scenario: {', '.join(presets.SCENARIO_PRESETS)}")
    p.add_argument("--in", dest="input", metavar="FILE", help="quantum model JSON")
    _add_visibility(p)
    p.add_argument("--format", choices=("json", "csv", "model"), help="default: from --out extension, else json")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_quantum_table)

    p = sub.add_parser("w-eval", help="trilocal polynomial W")
    p.add_argument("--values", type=float, nargs=4, metavar=("I", "J", "K", "L"))
    p.add_argument("--in", dest="input", metavar="FILE", help="trilocal chain correlator table JSON")
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), help="CSV of W on I=J=K=-L=V/2^(3/2)")
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_w_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except oracle.BudgetExceeded as exc:
        print(f"netbell: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ExpressionError, NetworkError, TableError, quantum.QuantumModelError,
            quantum.ScanError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"netbell: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Exit codes: 0 success, 1 input could not be parsed, 2 the input parsed but
failed validation, 3 an engine invariant failed, 4 a candidate check failed.
"""
from __future__ import annotations

import argparse
import os
import sys

from .jet import JetVariable, StateSpaceError
from .expr import Expression, ExprError, FuncSym, ParseError, to_text
from .balance import ModelError, ModelSpec
from .liu import EngineError, derive, report_json_dict, report_latex, report_text, same_restrictions
from .checker import CheckError, check, check_json_dict, check_text
from .modelfile import FileFormatError, load_model, load_solution
from .models import builtin_names, load_builtin, load_builtin_solution
from ._util import stable_json
from . import fdb as fdbmod

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_ENGINE = 3
EXIT_CHECK = 4

FDB_MAX_ORDER = 8


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _resolve_model(args) -> ModelSpec:
    if args.builtin:
        if args.model is not None:
            raise CliUsage("give either a model file or --builtin, not both")
        return load_builtin(args.builtin)
    if args.model is None:
        raise CliUsage("a model file or --builtin NAME is required")
    return load_model(args.model)


class CliUsage(Exception):
    pass


def _cmd_derive(args) -> int:
    model = _resolve_model(args)
    mode = "all" if args.all_extensions else "pruned"
    if args.order is not None and not args.all_extensions:
        raise CliUsage("--order only applies together with --all-extensions")
    report = derive(model, mode=mode, max_order=args.order)
    if args.verify:
        other = derive(model, mode="all" if mode == "pruned" else "pruned")
        if not same_restrictions(report.restrictions, other.restrictions):
            raise EngineError(
                "pruned and full constraint sets emit different restrictions"
            )
    if args.format == "json":
        _write(stable_json(report_json_dict(report)), args.out)
    elif args.format == "latex":
        _write(report_latex(report), args.out)
    else:
        _write(report_text(report), args.out)
    return EXIT_OK


def _cmd_check(args) -> int:
    if args.builtin:
        if args.model is not None or args.solution is not None:
            raise CliUsage("give either file paths or --builtin, not both")
        model = load_builtin(args.builtin)
        solution = load_builtin_solution(args.builtin, model)
    else:
        if args.model is None or args.solution is None:
            raise CliUsage("check needs a model file and a solution file, or --builtin NAME")
        model = load_model(args.model)
        solution = load_solution(args.solution, model)
    report = derive(model, mode="all" if args.all_extensions else "pruned")
    result = check(
        model, report, solution, samples=args.samples, seed=args.seed, tol=args.tol
    )
    if args.format == "json":
        _write(stable_json(check_json_dict(result)), args.out)
    else:
        _write(check_text(result), args.out)
    return EXIT_OK if result.ok else EXIT_CHECK


def _cmd_fdb(args) -> int:
    m, s = args.order, args.arity
    if m < 1 or s < 1:
        raise CliUsage("--m and --s must be positive")
    if m > FDB_MAX_ORDER:
        raise CliUsage(
            f"--m {m} exceeds the supported maximum {FDB_MAX_ORDER}; "
            "term counts grow too fast beyond it"
        )
    names = ("w",) if s == 1 else tuple(f"w{j + 1}" for j in range(s))
    sym = FuncSym("F", tuple(JetVariable(n) for n in names))
    expansion = fdbmod.total_x_power(sym, m)
    verdict = None
    if args.verify:
        iterated = Expression.sym(sym)
        for _ in range(m):
            iterated = iterated.total_x()
        verdict = "MATCH" if (expansion - iterated).is_zero else "MISMATCH"
    terms = fdbmod.chain_terms(m, s)
    if args.format == "json":
        payload = {
            "m": m,
            "s": s,
            "count": len(terms),
            "partitions": fdbmod.partition_count(m),
            "expression": to_text(expansion),
            "terms": [
                {
                    "weight": t.weight,
                    "outerOrders": list(t.outer_orders),
                    "innerFactors": [list(f) for f in t.inner_factors()],
                }
                for t in terms
            ],
        }
        if verdict is not None:
            payload["verify"] = verdict
        _write(stable_json(payload), args.out)
    else:
        head = f"D^{m}[F({', '.join(names)})] = " if m > 1 else f"D[F({', '.join(names)})] = "
        lines = [
            f"terms: {len(terms)}    partitions of {m}: {fdbmod.partition_count(m)}",
            head + to_text(expansion),
        ]
        if verdict is not None:
            lines.append(verdict)
        _write("\n".join(lines) + "\n", args.out)
    if verdict == "MISMATCH":
        print("error: expansion disagrees with the iterated total derivative", file=sys.stderr)
        return EXIT_ENGINE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="liukit",
        description="Derive thermodynamic restrictions from gradient-extended "
        "entropy exploitation and check candidate constitutive equations.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="derive restrictions for a model")
    d.add_argument("model", nargs="?", help="model file path")
    d.add_argument("--builtin", choices=builtin_names(), help="use a built-in model")
    d.add_argument(
        "--all-extensions",
        action="store_true",
        help="constrain with every gradient extension instead of the pruned set",
    )
    d.add_argument("--order", type=int, help="extension order cap for --all-extensions")
    d.add_argument("--format", choices=("text", "json", "latex"), default="text")
    d.add_argument("--out", help="write output to this file instead of stdout")
    d.add_argument(
        "--verify",
        action="store_true",
        help="re-derive with the other constraint set and require identical restrictions",
    )
    d.set_defaults(func=_cmd_derive)

    c = sub.add_parser("check", help="check a candidate solution against a model")
    c.add_argument("model", nargs="?", help="model file path")
    c.add_argument("solution", nargs="?", help="solution file path")
    c.add_argument("--builtin", choices=builtin_names(), help="use a built-in model and solution")
    c.add_argument("--all-extensions", action="store_true")
    c.add_argument(
        "--sample",
        "--samples",
        dest="samples",
        type=int,
        help="override scenario sample counts",
    )
    c.add_argument("--seed", type=int, help="override scenario seeds")
    c.add_argument("--tol", type=float, help="override scenario tolerances")
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.add_argument("--out", help="write output to this file instead of stdout")
    c.set_defaults(func=_cmd_check)

    f = sub.add_parser("fdb", help="print the expansion of an iterated total derivative")
    f.add_argument("--m", dest="order", type=int, required=True, help="derivative order")
    f.add_argument("--s", dest="arity", type=int, default=1, help="number of inner arguments")
    f.add_argument(
        "--verify",
        action="store_true",
        help="cross-check the expansion against the iterated total-derivative operator",
    )
    f.add_argument("--format", choices=("text", "json"), default="text")
    f.add_argument("--out", help="write output to this file instead of stdout")
    f.set_defaults(func=_cmd_fdb)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (CliUsage, ModelError, StateSpaceError, CheckError, KeyError, ExprError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except BrokenPipeError:
        # Downstream closed the pipe (e.g. `liukit derive | head`); park
        # stdout on devnull so the interpreter's exit flush stays quiet.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

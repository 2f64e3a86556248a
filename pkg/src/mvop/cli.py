"""Command-line front end: ``mvop {szego,equilibrium,direct,compare,detgrid}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from mvop.weight import ConfigError, load_weight_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_FACTORIZATION = 3

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("mvop")


class UsageError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _clean(obj):
    """Convert numpy containers to plain JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [float(obj.real), float(obj.imag)]
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _mat(m) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, dtype=complex)]


def _need_config(args):
    if args.config is None:
        raise UsageError("--config is required")
    return load_weight_config(args.config)


def _format(args, default: str, allowed=("csv", "json")) -> str:
    f = args.format or default
    if f not in allowed:
        raise UsageError(f"--format {f} is not supported by '{args.command}'")
    return f


def cmd_szego(args) -> int:
    from mvop.szego import det_deviation, factorization_residual, factorization_to_json, spectral_factorize

    w = _need_config(args)
    _format(args, "json", ("json",))
    tol = args.tol if args.tol is not None else 1e-10
    f = spectral_factorize(w.A)
    res = factorization_residual(f)
    dev = det_deviation(f)
    neg = f.G.negative_part_norm()
    ok = res < tol and dev < tol and neg < 1e-12
    summary = {
        "residual": res,
        "det_deviation": dev,
        "negative_power_norm": neg,
        "D_infinity": _mat(f.D_infinity),
        "ok": ok,
    }
    sys.stdout.write(_json_text(summary))
    if args.out is not None:
        _emit(_json_text(factorization_to_json(f)), args.out)
    if not ok:
        print(f"factorization invariants failed (tol {tol:g})", file=sys.stderr)
        return EXIT_FACTORIZATION
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    from mvop.equilibrium import equilibrium_data, mrs_residuals

    w = _need_config(args)
    _format(args, "json", ("json",))
    tol = args.tol if args.tol is not None else 1e-13
    eq = equilibrium_data(w.potential, tol=tol)
    out = {
        "a": eq.support.a,
        "b": eq.support.b,
        "c": eq.c,
        "d": eq.d,
        "h_coeffs": list(eq.h_coeffs),
        "ell": eq.ell,
        "residuals": list(mrs_residuals(w.potential, eq.support)),
    }
    _emit(_json_text(out), args.out)
    return EXIT_OK


def cmd_direct(args) -> int:
    from mvop.direct import compute_family, family_header, family_rows

    w = _need_config(args)
    fmt_ = _format(args, "csv")
    if args.N is None or args.N <= 0:
        raise UsageError("--N must be a positive number")
    if args.nmax is None or args.nmax < 1:
        raise UsageError("--nmax must be an integer >= 1")
    orth_tol = args.tol if args.tol is not None else 1e-6
    fam = compute_family(w, args.N, args.nmax, threads=args.threads, orth_tol=orth_tol)
    rows = family_rows(fam)[1:]
    if fmt_ == "csv":
        _emit(_csv_text(family_header(w.r), rows), args.out)
    else:
        data = {
            "config": w.to_config(),
            "N": args.N,
            "n_max": args.nmax,
            "columns": family_header(w.r),
            "rows": rows,
        }
        _emit(_json_text(data), args.out)
    return EXIT_OK


def _parse_N_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--N-list must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise UsageError("--N-list needs positive integers")
    return vals


def cmd_compare(args) -> int:
    from mvop.asymptotics import error_report

    w = _need_config(args)
    fmt_ = _format(args, "json")
    Ns = _parse_N_list(args.N_list)
    if args.nmax == "auto":
        extra = 1
    else:
        try:
            nmax = int(args.nmax)
        except ValueError:
            raise UsageError("--nmax must be 'auto' or an integer") from None
        if nmax < max(Ns) + 1:
            raise UsageError(f"--nmax must be at least max(N)+1 = {max(Ns) + 1}")
        extra = nmax - max(Ns)
    rep = error_report(w, Ns, nmax_extra=extra, threads=args.threads)
    if fmt_ == "json":
        _emit(_json_text(rep), args.out)
    else:
        keys = [k for k in rep["rows"][0]]
        _emit(_csv_text(keys, [[row[k] for k in keys] for row in rep["rows"]]), args.out)
    return EXIT_OK


def cmd_detgrid(args) -> int:
    from mvop.asymptotics import detgrid
    from mvop.equilibrium import equilibrium_data

    w = _need_config(args)
    fmt_ = _format(args, "csv")
    if args.N is None or args.N <= 0:
        raise UsageError("--N must be a positive number")
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    if w.r < 2:
        raise UsageError("detgrid needs r >= 2")
    eq = equilibrium_data(w.potential)
    x, vals = detgrid(w.r, w.A.alpha, args.N, args.points, eq=eq)
    if fmt_ == "csv":
        _emit(_csv_text(["x", "det"], zip(x, vals)), args.out)
    else:
        _emit(_json_text({"N": args.N, "x": x, "det": vals}), args.out)
    return EXIT_OK


COMMANDS = {
    "szego": cmd_szego,
    "equilibrium": cmd_equilibrium,
    "direct": cmd_direct,
    "compare": cmd_compare,
    "detgrid": cmd_detgrid,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="weight config JSON")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--tol", type=float)
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="mvop", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("szego", parents=[common], help="matrix Szego factorization")
    sub.add_parser("equilibrium", parents=[common], help="equilibrium measure data")
    d = sub.add_parser("direct", parents=[common], help="recurrence data by direct computation")
    d.add_argument("--N", type=float)
    d.add_argument("--nmax", type=int)
    c = sub.add_parser("compare", parents=[common], help="asymptotics against direct computation")
    c.add_argument("--N-list", dest="N_list", default="8,16,32")
    c.add_argument("--nmax", default="auto")
    g = sub.add_parser("detgrid", parents=[common], help="determinant of the inner leading term")
    g.add_argument("--N", type=float)
    g.add_argument("--points", type=int, default=2000)
    return p


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("MVOP_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    from mvop.szego import FactorizationError

    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FactorizationError as exc:
        print(f"factorization failed: {exc}", file=sys.stderr)
        return EXIT_FACTORIZATION
    except Exception as exc:  # module errors: report, never print partial tables
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

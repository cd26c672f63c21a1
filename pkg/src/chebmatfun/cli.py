"""Command-line interface: ``chebmatfun {coeffs,eval,experiment,recover}``.

Exit codes: 0 success, 2 usage error or unknown name, 3 spectrum outside
[-1, 1], 4 experiment acceptance check failed, 5 recovery did not converge.
Every command writes one ``*.manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from chebmatfun import __version__
from chebmatfun.experiments import FIGURES, SEED_RULE, derive_seed, run_figure
from chebmatfun.jordan import JordanSpec, build_jordan_matrix, f_of_matrix_via_jordan
from chebmatfun.matrix import (DenseOperator, DiagonalOperator, SpectralScaling, clenshaw_matrix,
                               direct_sum_matrix, load_matrix, matrix_error, save_matrix_binary,
                               save_matrix_text)
from chebmatfun.scalar import BUILTINS, ChebCoeffs, cheb_coeffs, cheb_nodes, get_builtin
from chebmatfun.spectral import FilterParams, RecoveryConfig, dct_operator, recover_eigenspace

log = logging.getLogger("chebmatfun")

EXIT_USAGE = 2
EXIT_SPECTRUM = 3
EXIT_ACCEPTANCE = 4
EXIT_NOT_CONVERGED = 5


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, args: argparse.Namespace, inputs, outputs, started: float, seed=None,
                   extra=None) -> Path:
    flags = {k: v for k, v in vars(args).items() if k != "handler"}
    manifest = {
        "command": args.command,
        "flags": flags,
        "seed": seed,
        "seed_rule": SEED_RULE,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_time": time.time() - started,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------------------
# coeffs
# ---------------------------------------------------------------------------

def cmd_coeffs(args) -> int:
    started = time.time()
    inputs = []
    if args.function in BUILTINS:
        f = get_builtin(args.function)
        c = cheb_coeffs(f, args.degree, args.samples)
    elif Path(args.function).is_file():
        vals = np.loadtxt(args.function, dtype=float).ravel()
        if args.samples and args.samples != vals.size:
            raise CommandError(f"--samples {args.samples} disagrees with {vals.size} tabulated values")
        if vals.size < args.degree + 1:
            raise CommandError(f"{vals.size} tabulated values cannot resolve degree {args.degree}")
        lookup = dict(zip(cheb_nodes(vals.size), vals))
        c = cheb_coeffs(lambda x: np.array([lookup[v] for v in x]), args.degree, vals.size)
        inputs.append(Path(args.function))
    else:
        raise CommandError(f"unknown function {args.function!r}; built-ins are {', '.join(sorted(BUILTINS))}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".csv":
        out.write_text(c.to_csv())
    else:
        payload = json.loads(c.to_json())
        payload["function"] = args.function if args.function in BUILTINS else None
        out.write_text(json.dumps(payload))
    nonzero = int(np.count_nonzero(np.abs(c.coeffs) > 1e-15))
    print(f"degree {c.degree}, samples {c.samples}, {nonzero} coefficients above 1e-15 -> {out}")
    write_manifest(_manifest_path(out), args, inputs, [out], started)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_coeffs(path: Path):
    text = path.read_text()
    if path.suffix == ".csv":
        return ChebCoeffs.from_csv(text), None
    c = ChebCoeffs.from_json(text)
    return c, json.loads(text).get("function")


def cmd_eval(args) -> int:
    started = time.time()
    coeffs_path = Path(args.coeffs)
    c, fname = _load_coeffs(coeffs_path)
    fname = args.function or fname
    inputs = [coeffs_path]
    spec = None
    if args.jordan:
        spec = JordanSpec.from_json(Path(args.jordan).read_text())
        A = build_jordan_matrix(spec)
        inputs.append(Path(args.jordan))
        lam = np.array([b.eigenvalue for b in spec.blocks])
    elif args.matrix:
        A = load_matrix(args.matrix)
        inputs.append(Path(args.matrix))
        lam = np.linalg.eigvals(A)
    else:
        raise CommandError("one of --matrix or --jordan is required")
    if args.scale:
        scaling = SpectralScaling(*args.scale)
        A = scaling.matrix(A)
        lam = scaling.to_unit(lam.real) + 1j * scaling.scale * lam.imag
    if np.any(np.abs(lam.imag) > 1e-10) or np.any(np.abs(lam.real) > 1 + 1e-10):
        raise CommandError(f"spectrum outside [-1, 1] (spectral radius {np.max(np.abs(lam)):.6g})", EXIT_SPECTRUM)
    result = clenshaw_matrix(c, A) if args.mode == "clenshaw" else direct_sum_matrix(c, A)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".bin":
        save_matrix_binary(out, result)
    else:
        save_matrix_text(out, result)
    outputs = [out]
    extra = {}
    if spec is not None and fname in BUILTINS and not args.scale:
        F = f_of_matrix_via_jordan(get_builtin(fname), spec)
        err = matrix_error(result, F, args.norm)
        err_path = out.with_name(out.name + ".error.csv")
        err_path.write_text(f"N,error\n{c.degree},{err!r}\n")
        outputs.append(err_path)
        extra["oracle_error"] = err
        print(f"{args.mode}: N={c.degree}, {args.norm} error vs Jordan oracle {err:.3e}")
    else:
        print(f"{args.mode}: N={c.degree}, wrote {result.shape[0]}x{result.shape[1]} result")
    write_manifest(_manifest_path(out), args, inputs, outputs, started, extra=extra)
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def cmd_experiment(args) -> int:
    started = time.time()
    if args.name not in FIGURES:
        raise CommandError(f"unknown experiment {args.name!r}; choose from {', '.join(FIGURES)}")
    res = run_figure(args.name, args.seed, args.max_degree)
    out_dir = Path(args.out_dir)
    paths = res.write(out_dir)
    for key, val in res.summary.items():
        if key in ("slopes", "relative_error_73", "nonzero_coeffs", "duplication_max_diff"):
            print(f"  {key}: {val}")
    print(res.status_line())
    write_manifest(out_dir / f"{args.name}.manifest.json", args, [], paths, started, args.seed,
                   {"sub_seeds": {"matrix": derive_seed(args.seed, 0)}, "checks": res.checks})
    return 0 if res.passed else EXIT_ACCEPTANCE


# ---------------------------------------------------------------------------
# recover
# ---------------------------------------------------------------------------

def parse_operator(text: str):
    """``dense:<file>``, ``diag:<file>``, ``dct:<file>`` or a bare dense matrix path."""
    kind, sep, path = text.partition(":")
    if not sep:
        kind, path = "dense", text
    p = Path(path)
    if not p.is_file():
        raise CommandError(f"operator file {path!r} not found")
    if kind == "dense":
        return DenseOperator(load_matrix(p)), p
    if kind in ("diag", "dct"):
        spectrum = np.loadtxt(p, dtype=float).ravel()
        return (DiagonalOperator(spectrum) if kind == "diag" else dct_operator(spectrum)), p
    raise CommandError(f"unknown operator kind {kind!r}; use dense:, diag: or dct:")


def cmd_recover(args) -> int:
    started = time.time()
    op, path = parse_operator(args.operator)
    center = args.center
    if args.scale:
        scaling = SpectralScaling(*args.scale)
        op = scaling.operator(op)
        width = scaling.scale
        params = FilterParams(float(scaling.to_unit(center)), args.half_width * width, args.steepness * width)
    else:
        params = FilterParams(center, args.half_width, args.steepness)
    start_seed = derive_seed(args.seed, 0)
    cfg = RecoveryConfig(args.degree, args.max_passes, args.block, args.tol, args.rank_tol, start_seed)
    res = recover_eigenspace(op, params, cfg)
    report = res.report()
    if args.scale and not res.empty:
        report["lambda_hat"] = float(scaling.from_unit(res.eigenvalue))
        report["lambda_hat_scaled"] = res.eigenvalue
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2))
    outputs = [out]
    if args.basis_out:
        save_matrix_binary(args.basis_out, res.basis)
        outputs.append(Path(args.basis_out))
    lam = report["lambda_hat"]
    print(f"dimension {res.dimension}, lambda_hat {lam if lam is None else f'{lam:.15g}'}, "
          f"residual {res.residual:.3e}, passes {res.passes}, operator applications {res.op_applications}"
          + (" (converged, empty)" if report["converged_empty"] else "")
          + ("" if res.converged else " NOT CONVERGED"))
    write_manifest(_manifest_path(out), args, [path], outputs, started, args.seed,
                   {"sub_seeds": {"initial_block": start_seed}})
    return 0 if res.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------

def _scale_pair(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("need lo < hi")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chebmatfun", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="Chebyshev coefficients of a built-in or tabulated function")
    p.add_argument("function", help="f1, f2, f3, f4 or a file of samples at first-kind Chebyshev nodes")
    p.add_argument("--degree", "-N", type=int, required=True)
    p.add_argument("--samples", "-M", type=int, default=None)
    p.add_argument("--out", default="coeffs.json", help=".json (default) or .csv")
    p.set_defaults(handler=cmd_coeffs)

    p = sub.add_parser("eval", help="evaluate a truncated matrix Chebyshev expansion")
    p.add_argument("coeffs", help="coefficient file written by `coeffs`")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="text or CHEBMAT1 binary matrix file")
    src.add_argument("--jordan", help="JordanSpec JSON file")
    p.add_argument("--mode", choices=("clenshaw", "direct"), default="clenshaw")
    p.add_argument("--function", choices=sorted(BUILTINS), help="override the function recorded in the coefficient file")
    p.add_argument("--norm", choices=("spectral", "frobenius"), default="spectral")
    p.add_argument("--scale", type=_scale_pair, help="map spectrum interval lo,hi onto [-1,1] first")
    p.add_argument("--out", default="result.txt", help=".txt or .bin")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("experiment", help="reproduce a convergence figure")
    p.add_argument("name", help=", ".join(FIGURES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-degree", type=int, default=None)
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("recover", help="recover an eigenspace with a polynomial erf filter")
    p.add_argument("operator", help="dense:<file>, diag:<file> or dct:<spectrum file>")
    p.add_argument("--center", type=float, required=True)
    p.add_argument("--half-width", type=float, required=True)
    p.add_argument("--steepness", type=float, required=True)
    p.add_argument("--degree", type=int, default=10)
    p.add_argument("--block", type=int, default=25)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--rank-tol", type=float, default=1e-8)
    p.add_argument("--max-passes", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=_scale_pair, help="operator spectrum interval lo,hi")
    p.add_argument("--out", default="recovery.json")
    p.add_argument("--basis-out", default=None, help="optional CHEBMAT1 dump of the basis")
    p.set_defaults(handler=cmd_recover)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except CommandError as exc:
        print(f"chebmatfun {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError, OSError) as exc:
        print(f"chebmatfun {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""``cohere`` command line.

Subcommands write one JSON document to stdout.  Failures print a single-line
JSON object ``{"error": ..., "detail": ...}`` to stderr and exit with 1
(usage), 2 (data: degenerate column, bad file, no admissible pair) or 3
(numeric).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .coherence import DEFAULT_BLOCK, UNKNOWN, MeanMode, coherence, gram_offdiag_max
from .covtest import TestConfig, run_test
from .csmip import mip_certify
from .errors import (CoherenceError, DegenerateColumnError, DomainError, EmptyPairError,
                     MatrixFormatError, NotPositiveDefiniteError, NumericError, ParameterError)
from .matrix_io import load_matrix, read_vector, save_matrix
from .randmat import FAMILIES, IID_FAMILIES, BandedCovSpec, EnsembleSpec, generate
from .simlab import SimulationConfig, simulate

THREADS_ENV = "COHERE_THREADS"

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_ERROR_NAMES = [
    (EmptyPairError, "no admissible pair"),
    (DegenerateColumnError, "degenerate column"),
    (NotPositiveDefiniteError, "not positive definite"),
    (MatrixFormatError, "bad matrix file"),
    (ParameterError, "invalid parameter"),
    (DomainError, "domain error"),
    (NumericError, "numeric error"),
    (CoherenceError, "data error"),
]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def to_json(obj) -> str:
    """Serialise with every float at 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or CPU count)")
    p.add_argument("--panel-size", type=_positive_int, default=DEFAULT_BLOCK,
                   help="column block edge of the pairwise kernel")


def _add_input(p):
    p.add_argument("--in", dest="input", required=True, help="matrix file (.csv or .bin)")
    p.add_argument("--format", choices=("csv", "bin"), default=None)


def _add_mean(p, default_mode="unknown"):
    p.add_argument("--mean-mode", choices=("unknown", "known"), default=None,
                   help=f"column centring (default: {default_mode}; known if --mu is given)")
    p.add_argument("--mu", type=float, default=None, help="known mean for every column")
    p.add_argument("--mu-file", default=None, help="known per-column means, one per line")
    p.add_argument("--sigma", type=float, default=None, help="known sd for every column")
    p.add_argument("--sigma-file", default=None, help="known per-column sds, one per line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cohere", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="draw a random matrix and write it to a file")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--p", type=_positive_int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("csv", "bin"), default=None)
    g.add_argument("--mean", type=float, default=0.0, help="gaussian mean")
    g.add_argument("--sd", type=float, default=1.0, help="gaussian sd")
    g.add_argument("--bands", type=_float_list, default=None,
                   help="banded_gaussian: covariance at offsets 0,1,..., e.g. 1,0.4")
    g.add_argument("--mu", type=float, default=0.0, help="banded_gaussian mean")
    g.add_argument("--block-size", type=_positive_int, default=None)
    g.add_argument("--num-blocks", type=_positive_int, default=None)
    _add_common(g)

    c = sub.add_parser("coherence", help="largest off-diagonal correlation of a matrix")
    _add_input(c)
    c.add_argument("--tau", type=_positive_int, default=1)
    _add_mean(c)
    c.add_argument("--kind", choices=("auto", "W", "J"), default="auto",
                   help="auto: L / L_tilde; W: raw inner products (V when tau > 1); "
                        "J: centred by mu, scaled by sigma (U when tau > 1)")
    _add_common(c)

    t = sub.add_parser("test", help="test that the covariance is tau-banded")
    _add_input(t)
    t.add_argument("--tau", type=_positive_int, default=1)
    t.add_argument("--alpha", type=float, default=0.05)
    _add_mean(t)
    _add_common(t)

    m = sub.add_parser("mip", help="certify the mutual incoherence property")
    _add_input(m)
    m.add_argument("--mu", type=float, default=0.0)
    m.add_argument("--mu-file", default=None)
    m.add_argument("--sigma", type=float, default=1.0)
    m.add_argument("--sigma-file", default=None)
    m.add_argument("--family", choices=("gaussian", "scaled_gaussian", "rademacher", "sparse_ternary"),
                   default=None, help="ensemble for the probability bounds")
    m.add_argument("--k", type=_positive_int, default=None, help="bound table for k = 1..K")
    _add_common(m)

    s = sub.add_parser("simulate", help="Monte Carlo check of the limit law")
    s.add_argument("--scenario", required=True,
                   choices=[f"iid-{f}" for f in IID_FAMILIES] + ["banded", "remark23", "remark24"])
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--p", type=_positive_int, default=None)
    s.add_argument("--tau", type=_positive_int, default=None)
    s.add_argument("--reps", type=_positive_int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--mean-mode", choices=("unknown", "known"), default="unknown")
    s.add_argument("--bands", type=_float_list, default=None)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--block-size", type=_positive_int, default=None)
    s.add_argument("--num-blocks", type=_positive_int, default=None)
    s.add_argument("--dump-values", default=None, help="write transformed values, one per line")
    s.add_argument("--omit-values", action="store_true", help="leave replicate arrays out of the JSON")
    _add_common(s)
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            v = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if v < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return v
    return os.cpu_count() or 1


def _vector_arg(value, path):
    if path is not None:
        return read_vector(path)
    return value


def _mean_mode(args, p) -> MeanMode:
    mu = _vector_arg(args.mu, args.mu_file)
    sigma = _vector_arg(args.sigma, args.sigma_file)
    mode = args.mean_mode or ("known" if mu is not None else "unknown")
    if mode == "unknown":
        if mu is not None:
            raise UsageError("--mu/--mu-file require --mean-mode known")
        return UNKNOWN
    return MeanMode.known(0.0 if mu is None else mu, sigma)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    p = args.p
    if args.family == "block_gaussian":
        if args.block_size is None or args.num_blocks is None:
            raise UsageError("block_gaussian needs --block-size and --num-blocks")
        p = p or args.block_size * args.num_blocks
    elif p is None:
        raise UsageError("--p is required")
    cov = None
    if args.family == "banded_gaussian":
        if not args.bands:
            raise UsageError("banded_gaussian needs --bands")
        cov = BandedCovSpec.constant(p, args.bands)
    spec = EnsembleSpec(args.family, n=args.n, p=p, mean=args.mean, sd=args.sd, cov=cov,
                        mu=args.mu, block_size=args.block_size, num_blocks=args.num_blocks)
    matrix = generate(spec, args.seed)
    try:
        fmt = save_matrix(args.out, matrix, args.format)
    except OSError as exc:
        raise MatrixFormatError(f"{args.out}: {exc.strerror or exc}") from None
    return {"out": args.out, "format": fmt, "n": matrix.n, "p": matrix.p,
            "seed": args.seed, "spec": spec.to_dict()}


def cmd_coherence(args):
    X = load_matrix(args.input, args.format)
    kw = dict(block_size=args.panel_size, threads=_threads(args))
    if args.kind == "W":
        return gram_offdiag_max(X, args.tau, None, **kw).to_dict()
    mode = _mean_mode(args, X.p)
    if args.kind == "J":
        if not mode.is_known:
            raise UsageError("--kind J needs a known mean (--mu or --mu-file) and --sigma")
        return gram_offdiag_max(X, args.tau, mode, **kw).to_dict()
    return coherence(X, args.tau, mode, **kw).to_dict()


def cmd_test(args):
    X = load_matrix(args.input, args.format)
    cfg = TestConfig(tau=args.tau, alpha=args.alpha, mean_mode=_mean_mode(args, X.p))
    res = run_test(X, cfg, block_size=args.panel_size, threads=_threads(args))
    out = res.to_dict()
    out["mean_mode"] = cfg.mean_mode.to_dict()
    return out


def cmd_mip(args):
    X = load_matrix(args.input, args.format)
    mu = _vector_arg(args.mu, args.mu_file)
    sigma = _vector_arg(args.sigma, args.sigma_file)
    k_values = range(1, args.k + 1) if args.k else None
    if args.k and not args.family:
        raise UsageError("--k needs --family for the probability bounds")
    rep = mip_certify(X, mu, sigma, family=args.family, k_values=k_values,
                      block_size=args.panel_size, threads=_threads(args))
    return rep.to_dict()


def cmd_simulate(args):
    scenario, _, family = args.scenario.partition("-")
    cov = None
    if scenario == "banded":
        if not args.bands:
            raise UsageError("banded scenario needs --bands")
        if args.p is None:
            raise UsageError("--p is required")
        cov = BandedCovSpec.constant(args.p, args.bands)
    tau = args.tau
    if scenario == "banded" and tau is None:
        tau = cov.tau
    cfg = SimulationConfig(
        scenario=scenario, n=args.n, p=args.p, tau=tau, replicates=args.reps,
        master_seed=args.seed, family=family or "gaussian", mean_mode=args.mean_mode,
        alpha=args.alpha, cov=cov, mu=args.mu, block_size=args.block_size,
        num_blocks=args.num_blocks)
    rep = simulate(cfg, threads=_threads(args))
    if args.dump_values:
        try:
            with open(args.dump_values, "w") as fh:
                for v in rep.transformed:
                    fh.write(_fmt_float(float(v)) + "\n")
        except OSError as exc:
            raise MatrixFormatError(f"{args.dump_values}: {exc.strerror or exc}") from None
    return rep.to_dict(include_values=not args.omit_values)


COMMANDS = {"generate": cmd_generate, "coherence": cmd_coherence, "test": cmd_test,
            "mip": cmd_mip, "simulate": cmd_simulate}


def _fail(error, detail, code):
    sys.stderr.write(to_json({"error": error, "detail": str(detail).replace("\n", " ")}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage error", exc, EXIT_USAGE)
    except CoherenceError as exc:
        name = next(label for cls, label in _ERROR_NAMES if isinstance(exc, cls))
        return _fail(name, exc, exc.exit_code)
    except (FloatingPointError, OverflowError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        return _fail("numeric error", exc, EXIT_NUMERIC)
    sys.stdout.write(to_json(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

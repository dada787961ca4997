"""Command-line front end for reproducible compression/iteration experiments.

Every run resolves its full configuration (flags, seed, version) into a
manifest JSON written alongside the outputs; ``fri --from-manifest PATH``
replays a manifest and reproduces the output files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import time

import numpy as np

from . import __version__
from .compress import (
    CompressionError,
    CompressionRule,
    RngStream,
    compress,
)
from .ising import IsingParams, ising_exact, ising_operator, tail_weight_functional
from .iterate import (
    IterationConfig,
    IterationError,
    fri_expm,
    fri_power,
    fri_solve,
    write_trajectory_csv,
)
from .mmio import MatrixMarketError, load_matrix_market, load_vector_market
from .sparse import all_ones, basis_functional, dump_lines, from_pairs, l1_norm
from .stats import EstimateSummary

DEFAULT_SEED = 12345

RULE_CHOICES = ["floorceil", "indep", "systematic", "stratified", "tbs"]


def _resolve_seed(value: str | int | None) -> int:
    if value is None:
        env = os.environ.get("FRI_SEED")
        return int(env) if env else DEFAULT_SEED
    if value == "random":
        return secrets.randbits(63)
    return int(value)


def _build_rule(args) -> CompressionRule:
    return CompressionRule(
        kind=args.rule,
        m=args.m,
        tbs_renormalize=getattr(args, "tbs_renorm", False),
        stochastic_order=getattr(args, "stoch_order", "input"),
    )


def _json_dump(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_path(args, outputs: dict) -> str:
    if getattr(args, "manifest", None):
        return args.manifest
    for key in ("summary", "out"):
        path = getattr(args, key, None)
        if path:
            return path + ".manifest.json"
    return f"fri-{args.command}.manifest.json"


def _write_manifest(args, resolved_seed: int, outputs: dict) -> str:
    path = _manifest_path(args, outputs)
    stored = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func",) and not k.startswith("_")
    }
    stored["seed"] = resolved_seed
    payload = {
        "command": args.command,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seed": resolved_seed,
        "args": stored,
        "outputs": {k: v for k, v in outputs.items() if v},
    }
    _json_dump(path, payload)
    return path


def _summary_payload(command: str, args_extra: dict,
                     lam: EstimateSummary | None,
                     functionals: dict[str, EstimateSummary]) -> dict:
    payload = {"command": command}
    payload.update(args_extra)
    if lam is not None:
        payload["lambda"] = lam.to_dict()
    payload["functionals"] = {name: s.to_dict() for name, s in functionals.items()}
    return payload


def _print_summary(lam: EstimateSummary | None,
                   functionals: dict[str, EstimateSummary]) -> None:
    if lam is not None:
        print(
            f"lambda mean {lam.mean.real:.6g} +/- {lam.ci95_halfwidth:.2g}"
            f" (iat {lam.iat:.3g}, n {lam.n_samples})"
        )
    for name, s in functionals.items():
        print(
            f"{name} mean {s.mean.real:.6g} +/- {s.ci95_halfwidth:.2g}"
            f" (iat {s.iat:.3g}, n {s.n_samples})"
        )


def _dump_vector(path: str, v) -> None:
    with open(path, "w") as fh:
        for line in dump_lines(v):
            fh.write(line + "\n")


def _add_run_flags(p: argparse.ArgumentParser, with_rule: bool = True) -> None:
    p.add_argument("--seed", default=None,
                   help="integer seed or 'random' (default: fixed constant, FRI_SEED overrides)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; affects wall time only")
    p.add_argument("--manifest", default=None, help="manifest output path")
    if with_rule:
        p.add_argument("--rule", choices=RULE_CHOICES, default="systematic")
        p.add_argument("--tbs-renorm", dest="tbs_renorm", action="store_true",
                       help="TbS only: rescale kept entries to the input l1 norm")
        p.add_argument("--stoch-order", dest="stoch_order",
                       choices=["input", "magdesc"], default="input",
                       help="ordering of the stochastic part for systematic/stratified")


def cmd_ising(args) -> int:
    seed = _resolve_seed(args.seed)
    params = IsingParams(args.ell, args.temp, args.field)
    K = ising_operator(params)
    rule = _build_rule(args)
    cfg = IterationConfig(
        num_iters=args.iters,
        rule=rule,
        seed=seed,
        burn_in=args.burn_in,
        record_every=args.record_every,
        threads=args.threads,
    )
    v0 = from_pairs([(0, 1.0)])
    fs = [tail_weight_functional(args.ell)]
    traj = fri_power(K, v0, all_ones(), fs, cfg)
    lam = traj.lambda_summary()
    tail = traj.functional_summaries()[0]
    outputs = {}
    if args.out:
        write_trajectory_csv(args.out, traj, args.record_every)
        outputs["trajectory_csv"] = args.out
    if args.dump_vector:
        _dump_vector(args.dump_vector, traj.final)
        outputs["vector_dump"] = args.dump_vector
    functionals = {"tail_weight": tail}
    if args.summary:
        payload = _summary_payload(
            "ising",
            {"ell": args.ell, "temp": args.temp, "field": args.field,
             "m": args.m, "rule": args.rule, "iters": args.iters,
             "burn_in": args.burn_in, "seed": seed},
            lam, functionals,
        )
        _json_dump(args.summary, payload)
        outputs["summary_json"] = args.summary
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    _print_summary(lam, functionals)
    return 0


def cmd_ising_exact(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.threads > 1:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    params = IsingParams(args.ell, args.temp, args.field)
    lam, f_tail, _ = ising_exact(params, tol=args.tol, max_iters=args.max_iters,
                                 seed=seed)
    outputs = {}
    if args.summary:
        payload = {
            "command": "ising-exact",
            "ell": args.ell, "temp": args.temp, "field": args.field,
            "tol": args.tol, "seed": seed,
            "lambda": lam, "f_tail": f_tail,
        }
        _json_dump(args.summary, payload)
        outputs["summary_json"] = args.summary
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    print(f"lambda {lam!r} f_tail {f_tail!r}")
    return 0


def cmd_power(args) -> int:
    seed = _resolve_seed(args.seed)
    K = load_matrix_market(args.matrix)
    rule = _build_rule(args)
    cfg = IterationConfig(
        num_iters=args.iters, rule=rule, seed=seed, burn_in=args.burn_in,
        record_every=args.record_every, threads=args.threads,
    )
    v0 = from_pairs([(i, 1.0 / K.dim) for i in range(K.dim)])
    traj = fri_power(K, v0, all_ones(), [], cfg)
    lam = traj.lambda_summary()
    outputs = {}
    if args.out:
        write_trajectory_csv(args.out, traj, args.record_every)
        outputs["trajectory_csv"] = args.out
    if args.dump_vector:
        _dump_vector(args.dump_vector, traj.final)
        outputs["vector_dump"] = args.dump_vector
    if args.summary:
        payload = _summary_payload(
            "power",
            {"matrix": args.matrix, "m": args.m, "rule": args.rule,
             "iters": args.iters, "burn_in": args.burn_in, "seed": seed},
            lam, {},
        )
        _json_dump(args.summary, payload)
        outputs["summary_json"] = args.summary
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    _print_summary(lam, {})
    return 0


def _coords_functionals(coords: str, dim: int):
    if coords == "all":
        if dim > 4096:
            raise ValueError("--coords all needs dim <= 4096; pass explicit coords")
        idx = range(dim)
    else:
        idx = [int(tok) for tok in coords.split(",") if tok]
    return [basis_functional(i) for i in idx]


def cmd_solve(args) -> int:
    seed = _resolve_seed(args.seed)
    A = load_matrix_market(args.matrix)
    r = load_vector_market(args.rhs)
    rule = _build_rule(args)
    cfg = IterationConfig(
        num_iters=args.iters, rule=rule, seed=seed, burn_in=args.burn_in,
        replicas=args.replicas, threads=args.threads,
    )
    fs = _coords_functionals(args.coords, A.dim)
    summaries = fri_solve(A, r, args.eps, cfg, fs)
    functionals = {f.name: s for f, s in zip(fs, summaries)}
    outputs = {}
    if args.summary:
        payload = _summary_payload(
            "solve",
            {"matrix": args.matrix, "rhs": args.rhs, "eps": args.eps,
             "m": args.m, "rule": args.rule, "iters": args.iters,
             "burn_in": args.burn_in, "replicas": args.replicas, "seed": seed},
            None, functionals,
        )
        _json_dump(args.summary, payload)
        outputs["summary_json"] = args.summary
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    _print_summary(None, functionals)
    return 0


def cmd_expm(args) -> int:
    seed = _resolve_seed(args.seed)
    A = load_matrix_market(args.matrix)
    if args.b:
        b = load_vector_market(args.b)
    else:
        b = from_pairs([(i, 1.0) for i in range(A.dim)])
    rule = _build_rule(args)
    cfg = IterationConfig(
        num_iters=1, rule=rule, seed=seed,
        replicas=args.replicas, threads=args.threads,
    )
    fs = _coords_functionals(args.coords, A.dim)
    summaries = fri_expm(A, b, args.t, args.eps, cfg, fs)
    functionals = {f.name: s for f, s in zip(fs, summaries)}
    outputs = {}
    if args.summary:
        payload = _summary_payload(
            "expm",
            {"matrix": args.matrix, "b": args.b, "t": args.t, "eps": args.eps,
             "m": args.m, "rule": args.rule, "replicas": args.replicas,
             "seed": seed},
            None, functionals,
        )
        _json_dump(args.summary, payload)
        outputs["summary_json"] = args.summary
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    _print_summary(None, functionals)
    return 0


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def cmd_compress_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    rules = RULE_CHOICES[:4] if args.rule == "all" else [args.rule]
    lines = ["rule,n,m,functional,reps,rms,envelope,ratio"]
    root = RngStream(seed)
    for n in _parse_int_list(args.n):
        gen = np.random.Generator(np.random.Philox(key=np.array(
            [seed, n], dtype=np.uint64)))
        values = gen.standard_normal(n)
        v = from_pairs([(i, values[i]) for i in range(n)])
        # two unit-sup-norm test functionals: the input's own sign pattern
        # (blind to the l1-preserving rules) and a fixed alternating pattern
        functionals = {
            "sign": np.sign(values),
            "alternating": np.where(np.arange(n) % 2 == 0, 1.0, -1.0),
        }
        vol = l1_norm(v)
        for m in _parse_int_list(args.m):
            for rule_kind in rules:
                rule = CompressionRule(rule_kind, m)
                stream = root.substream(RULE_CHOICES.index(rule_kind), n, m)
                errs = {name: np.empty(args.reps) for name in functionals}
                for rep in range(args.reps):
                    out = compress(rule, v, stream.substream(rep))
                    pos = out.indices.astype(np.int64)
                    for name, f in functionals.items():
                        errs[name][rep] = (
                            float(f[pos] @ out.values.real) - float(f @ values)
                        )
                envelope = float(2.0 / np.sqrt(m) * vol)
                for name in functionals:
                    rms = float(np.sqrt(np.mean(errs[name] ** 2)))
                    ratio = rms / envelope
                    lines.append(
                        f"{rule_kind},{n},{m},{name},{args.reps},"
                        f"{rms!r},{envelope!r},{ratio!r}"
                    )
    text = "\n".join(lines) + "\n"
    outputs = {}
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        outputs["bench_csv"] = args.out
    else:
        sys.stdout.write(text)
    outputs["manifest"] = _write_manifest(args, seed, outputs)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fri",
        description="Fast randomized iteration: compressed power iteration, "
                    "linear solves and matrix exponentials",
    )
    parser.add_argument("--from-manifest", dest="from_manifest", default=None,
                        help="replay a run manifest, reproducing outputs byte for byte")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ising", help="FRI/TbS power iteration on the Ising transfer operator")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--temp", type=float, default=2.2)
    p.add_argument("--field", type=float, default=0.01)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    p.add_argument("--record-every", dest="record_every", type=int, default=1)
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.add_argument("--summary", default=None, help="summary JSON path")
    p.add_argument("--dump-vector", dest="dump_vector", default=None,
                   help="write the final iterate as index,re,im lines")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ising)

    p = sub.add_parser("ising-exact", help="dense power-iteration oracle for small ell")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--temp", type=float, default=2.2)
    p.add_argument("--field", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=50000)
    p.add_argument("--summary", default=None)
    _add_run_flags(p, with_rule=False)
    p.set_defaults(func=cmd_ising_exact)

    p = sub.add_parser("power", help="FRI power iteration on a Matrix Market matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    p.add_argument("--record-every", dest="record_every", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--summary", default=None)
    p.add_argument("--dump-vector", dest="dump_vector", default=None)
    _add_run_flags(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("solve", help="compressed fixed-point solve of A x = r")
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=1000)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--coords", default="all",
                   help="comma-separated solution coordinates to report, or 'all'")
    p.add_argument("--summary", default=None)
    _add_run_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("expm", help="estimate functionals of exp(t A) b")
    p.add_argument("--matrix", required=True)
    p.add_argument("--b", default=None, help="Matrix Market vector; default all-ones")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--coords", default="all")
    p.add_argument("--summary", default=None)
    _add_run_flags(p)
    p.set_defaults(func=cmd_expm)

    p = sub.add_parser("compress-bench",
                       help="empirical compression RMS error against the 2/sqrt(m) envelope")
    p.add_argument("--n", default="200", help="comma-separated input sizes")
    p.add_argument("--m", default="10,100", help="comma-separated budgets")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--rule", default="all", choices=RULE_CHOICES[:4] + ["all"])
    p.add_argument("--out", default=None)
    _add_run_flags(p, with_rule=False)
    p.set_defaults(func=cmd_compress_bench)

    return parser


def _run_from_manifest(path: str) -> int:
    with open(path) as fh:
        manifest = json.load(fh)
    command = manifest["command"]
    stored = dict(manifest["args"])
    stored["command"] = command
    handlers = {
        "ising": cmd_ising,
        "ising-exact": cmd_ising_exact,
        "power": cmd_power,
        "solve": cmd_solve,
        "expm": cmd_expm,
        "compress-bench": cmd_compress_bench,
    }
    if command not in handlers:
        raise ValueError(f"manifest names unknown command {command!r}")
    args = argparse.Namespace(**stored)
    return handlers[command](args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.from_manifest:
            return _run_from_manifest(args.from_manifest)
        if not args.command:
            parser.print_help()
            return 2
        return args.func(args)
    except (CompressionError, IterationError, MatrixMarketError, ValueError,
            RuntimeError, OSError) as exc:
        print(f"fri: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: count, sample, batch, estimate, verify, bench."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .batch import MISSING, SCORES, batch_mix_match, opportunistic_estimate
from .counting import hr1_log, partition_count
from .rng import RandomStream
from .samplers import METHODS, Partition, sample, sample_many
from .variants import VARIANTS
from .verify import COST_METHODS, P_THRESHOLD, chi_square_uniform, enumerate_partitions, majority, measure_cost

AUTO_TABLE_LIMIT = 2000


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    n: int | None = None
    method: str | None = None
    variant: str | None = None
    options: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "n": self.n, "method": self.method,
                "variant": self.variant, **self.options}


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % (1 << 64))


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdcpart", description="Exact uniform sampling of integer partitions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("count", help="p_n exactly, or ln p_n from the one-term asymptotic")
    c.add_argument("n", type=_nonneg)
    g = c.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--hr1", action="store_true")

    s = sub.add_parser("sample", help="draw uniform partitions (or a restricted variant)")
    s.add_argument("--n", type=_nonneg, required=True)
    s.add_argument("--method", default="auto", choices=["auto", *METHODS])
    s.add_argument("--variant", choices=sorted(VARIANTS))
    s.add_argument("--k", type=int, help="part bound for --variant kcore (parts < k)")
    s.add_argument("--b", type=_positive, help="split point for small-large")
    s.add_argument("--base-cutoff", type=_positive, default=None)
    s.add_argument("--no-parity", action="store_true", help="recursive method without the parity trick")
    s.add_argument("--engine", default="poisson", choices=["poisson", "naive", "largest"])
    s.add_argument("--count", type=_nonneg, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=_positive, default=1)
    s.add_argument("--stats", action="store_true", help="append per-sample statistics")
    s.add_argument("--format", default="parts", choices=["parts", "mults", "json"])

    b = sub.add_parser("batch", help="mix-and-match batch of m samples")
    b.add_argument("--n", type=_positive, required=True)
    b.add_argument("--b", type=_positive)
    b.add_argument("--m", type=_positive, required=True)
    b.add_argument("--roaming", action="store_true", help="aim phase-B tilt at outstanding demands")
    b.add_argument("--vmax", type=_nonneg, default=0)
    b.add_argument("--seed", type=int)
    b.add_argument("--format", default="parts", choices=["parts", "mults", "json"])

    e = sub.add_parser("estimate", help="opportunistic estimator of E g over uniform partitions")
    e.add_argument("--n", type=_positive, required=True)
    e.add_argument("--b", type=_positive)
    e.add_argument("--m1", type=_positive, required=True)
    e.add_argument("--m2", type=_positive, required=True)
    e.add_argument("--g", default="one", choices=sorted(SCORES))
    e.add_argument("--seed", type=int)

    v = sub.add_parser("verify", help="chi-square uniformity check against full enumeration")
    v.add_argument("--n", type=_positive, required=True)
    v.add_argument("--method", required=True, choices=list(METHODS) + ["batch"])
    v.add_argument("--samples", type=_positive, default=100_000)
    v.add_argument("--seed", type=int)
    v.add_argument("--votes", type=_positive, default=3)

    h = sub.add_parser("bench", help="measure acceptance cost against its asymptotic value")
    h.add_argument("--method", required=True, choices=COST_METHODS)
    h.add_argument("--n", type=_positive, required=True)
    h.add_argument("--trials", type=_positive, default=100)
    h.add_argument("--seed", type=int)
    h.add_argument("--k", type=int)
    h.add_argument("--b", type=_positive)
    h.add_argument("--out")
    return p


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------


def format_partition(p: Partition, fmt: str) -> str:
    if fmt == "mults":
        return " ".join(f"{i}:{z}" for i, z in p.mults)
    return str(p)


def _render(obj, fmt: str) -> tuple[str, dict]:
    """Text line and JSON payload for any sampler output."""
    from .variants import PlaneArray, SetPartitionShape

    if isinstance(obj, PlaneArray):
        text = " ".join(f"{i},{j}:{z}" for (i, j), z in obj.cells)
        return text, {"n": obj.n, "box": obj.box, "cells": [[i, j, z] for (i, j), z in obj.cells]}
    if isinstance(obj, SetPartitionShape):
        obj = obj.as_partition()
    return format_partition(obj, fmt), {"parts": list(obj.parts) if fmt != "mults" else None,
                                         "mults": [[i, z] for i, z in obj.mults]}


def _emit_header(out, cfg: RunConfig) -> None:
    out.write(json.dumps({"version": __version__, "seed": cfg.seed, "config": cfg.as_dict()}) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_count(args, out) -> int:
    if args.hr1:
        if args.n < 1:
            raise UsageError("--hr1 needs n >= 1")
        out.write(f"{hr1_log(args.n):.17g}\n")
    else:
        out.write(f"{partition_count(args.n)}\n")
    return 0


def _draw_one(job):
    cfg, index = job
    rng = RandomStream.substream(cfg["seed"], index)
    n = cfg["n"]
    if cfg["variant"] == "kcore":
        from .variants import sample_kcore

        return sample_kcore(n, cfg["k"], rng, engine=cfg["engine"])
    if cfg["variant"] == "setshape":
        from .variants import sample_setpartition_shape

        return sample_setpartition_shape(n, rng)
    if cfg["variant"] == "planearray":
        from .variants import sample_plane_array

        return sample_plane_array(n, rng)
    method = cfg["method"]
    kw = {}
    if method in ("lucky", "trivial", "small-large"):
        kw["engine"] = cfg["engine"]
    if method == "small-large":
        kw["b"] = cfg["b"]
    if method == "recursive":
        kw["parity"] = not cfg["no_parity"]
        if cfg["base_cutoff"]:
            kw["base_cutoff"] = cfg["base_cutoff"]
    return sample(method, n, rng, **kw)


def _cmd_sample(args, out, seed) -> int:
    method = args.method
    if method == "auto":
        method = "table" if args.n <= AUTO_TABLE_LIMIT else "recursive"
    if args.variant == "kcore" and (args.k is None or args.k < 2):
        raise UsageError("--variant kcore needs --k >= 2")
    if args.variant in ("setshape",) and args.n < 2:
        raise UsageError("setshape needs n >= 2")
    if args.variant == "planearray" and args.n < 1:
        raise UsageError("planearray needs n >= 1")
    if method == "small-large" and not args.variant and args.n >= 2 and args.b is not None and args.b >= args.n:
        raise UsageError("--b must be below n")
    cfg = RunConfig("sample", seed, args.n, method, args.variant,
                    {"k": args.k, "b": args.b, "engine": args.engine, "count": args.count,
                     "no_parity": args.no_parity, "base_cutoff": args.base_cutoff, "format": args.format})
    if args.format == "json":
        _emit_header(out, cfg)
    job_cfg = cfg.as_dict()
    jobs = ((job_cfg, i) for i in range(args.count))
    if args.jobs > 1 and args.count > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = pool.map(_draw_one, jobs, chunksize=max(1, min(64, args.count // (4 * args.jobs))))
            _write_samples(results, args, out)
    else:
        _write_samples(map(_draw_one, jobs), args, out)
    return 0


def _write_samples(results, args, out) -> None:
    for index, (obj, stats) in enumerate(results):
        text, payload = _render(obj, args.format)
        if args.format == "json":
            record = {"index": index, **{k: v for k, v in payload.items() if v is not None}}
            if args.stats:
                record["stats"] = stats.as_dict()
            out.write(json.dumps(record) + "\n")
        else:
            out.write(text + "\n")
            if args.stats:
                out.write("# " + json.dumps(stats.as_dict()) + "\n")


def _cmd_batch(args, out, seed) -> int:
    if args.n < 2:
        raise UsageError("batch needs n >= 2")
    if args.b is not None and args.b >= args.n:
        raise UsageError("--b must be below n")
    if args.vmax > args.m:
        raise UsageError("--vmax cannot exceed --m")
    cfg = RunConfig("batch", seed, args.n, "mix-match", None,
                    {"b": args.b, "m": args.m, "roaming": args.roaming, "vmax": args.vmax, "format": args.format})
    res = batch_mix_match(args.n, args.b, args.m, RandomStream(seed), roaming=args.roaming, v_max=args.vmax)
    if args.format == "json":
        _emit_header(out, cfg)
        for slot, p in enumerate(res.samples):
            rec = {"slot": slot, "missing": p is MISSING}
            if p is not MISSING:
                rec["mults"] = [[i, z] for i, z in p.mults]
            out.write(json.dumps(rec) + "\n")
        summary = {"missing_count": res.missing_count, "phase_a_proposals": res.phase_a.proposals,
                   "phase_b_proposals": res.phase_b_proposals}
        out.write(json.dumps({"summary": summary}) + "\n")
    else:
        for p in res.samples:
            out.write(("MISSING" if p is MISSING else format_partition(p, args.format)) + "\n")
    return 0


def _cmd_estimate(args, out, seed) -> int:
    if args.b is not None and args.b >= args.n:
        raise UsageError("--b must be below n")
    if args.n < 2:
        raise UsageError("estimate needs n >= 2")
    rep = opportunistic_estimate(args.n, args.b, args.m1, args.m2, SCORES[args.g], RandomStream(seed))
    cfg = RunConfig("estimate", seed, args.n, None, None, {"m1": args.m1, "m2": args.m2, "g": args.g, "b": args.b})
    out.write(json.dumps({"version": __version__, "seed": seed, "config": cfg.as_dict(), "report": rep.as_dict()}) + "\n")
    return 0


def _cmd_verify(args, out, seed) -> int:
    idx = enumerate_partitions(args.n) if args.n <= 60 else None
    if idx is None:
        raise UsageError("verify enumerates all partitions; n must be at most 60")
    if args.samples < 5 * len(idx):
        raise UsageError(f"need at least {5 * len(idx)} samples for {len(idx)} cells")

    def one(s):
        rng = RandomStream(s)
        if args.method == "batch":
            if args.n < 2:
                raise UsageError("batch needs n >= 2")
            draws = batch_mix_match(args.n, None, args.samples, rng).samples
        else:
            draws = [p for p, _ in sample_many(args.method, args.n, args.samples, rng)]
        stat, p = chi_square_uniform(idx.counts(draws))
        out.write(json.dumps({"seed": s, "method": args.method, "n": args.n, "cells": len(idx),
                              "statistic": stat, "p_value": p}) + "\n")
        return p > P_THRESHOLD

    ok, votes = majority(one, seed, args.votes)
    out.write(json.dumps({"pass": ok, "votes": votes}) + "\n")
    return 0 if ok else 1


def _cmd_bench(args, out, seed) -> int:
    params = {}
    if args.method == "kcore":
        if args.k is None or args.k < 2:
            raise UsageError("bench --method kcore needs --k >= 2")
        params["k"] = args.k
    if args.b is not None:
        params["b"] = args.b
    rep = measure_cost(args.method, args.n, args.trials, seed, **params)
    doc = {"version": __version__, "seed": seed, **rep.as_dict()}
    text = json.dumps(doc, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    out.write(text + "\n")
    return 0


def parse_and_dispatch(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = _fresh_seed()
    if seed < 0:
        parser.print_usage(sys.stderr)
        print("pdcpart: error: seed must be nonnegative", file=sys.stderr)
        return 2
    try:
        if args.command == "count":
            return _cmd_count(args, out)
        handler = {"sample": _cmd_sample, "batch": _cmd_batch, "estimate": _cmd_estimate,
                   "verify": _cmd_verify, "bench": _cmd_bench}[args.command]
        return handler(args, out, seed)
    except (UsageError, ValueError) as exc:
        print(f"pdcpart: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()

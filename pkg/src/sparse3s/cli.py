"""Command line: convert, dump, run, stats, simulate, bench.

Exit codes: 0 success, 1 verification failed, 2 I/O or parse error,
3 validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import statistics
import sys
import time
import tracemalloc
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .bsb import (
    MAGIC,
    FormatError,
    build_bsb,
    deserialize,
    footprint_bits,
    footprint_params,
    reorder_row_windows,
    serialize,
    to_dense,
)
from .fused3s import PARTITIONS, AllocationTracker, FusedConfig, fused3s_forward
from .graphio import (
    ParseError,
    compute_stats,
    format_stats_table,
    generate_synthetic,
    load_graph,
    parse_synthetic_spec,
)
from .oracles import dense_attention_oracle, unfused_3s_oracle
from .prng import synth_qkv
from .schedsim import CostModel, lpt_order, random_order, simulate_schedule

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

# above this many nodes the N x N dense oracle is swapped for the edge-wise one
DENSE_ORACLE_LIMIT = 2048


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunReport:
    N: int
    d: int
    nnz: int
    r: int
    c: int
    seed: int
    partition: str
    remap: bool
    schedule: str
    oracle: str
    max_abs_err: float
    mean_abs_err: float
    tolerance: float
    time_fused_s: float
    time_unfused_s: float
    checksum: str
    passed: bool


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _is_bsb(path):
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def _load_mask(args):
    """CooMatrix from ``args.input`` (graph file or BSB) or ``args.synthetic``."""
    if getattr(args, "synthetic", None):
        kind, params = parse_synthetic_spec(args.synthetic)
        return generate_synthetic(kind, seed=args.graph_seed, **params)
    if not args.input:
        raise CliError("an input path or --synthetic spec is required", EXIT_INVALID)
    if _is_bsb(args.input):
        with open(args.input, "rb") as fh:
            return to_dense(deserialize(fh.read()))
    return load_graph(args.input, args.symmetrize, args.self_loops)


def _load_bsb(args):
    """BsbMatrix, reusing the stored encoding when the input already is one."""
    if not getattr(args, "synthetic", None) and args.input and _is_bsb(args.input):
        with open(args.input, "rb") as fh:
            return deserialize(fh.read())
    mask = _load_mask(args)
    return build_bsb(mask, args.r, args.c)


def _checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _emit(obj):
    print(json.dumps(obj, indent=2))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_convert(args):
    mask = _load_mask(args)
    b = build_bsb(mask, args.r, args.c)
    if args.reorder:
        b = reorder_row_windows(b)
    with open(args.output, "wb") as fh:
        fh.write(serialize(b))
    _emit({
        "output": args.output,
        "n_rows": b.n_rows,
        "num_rw": b.num_rw,
        "total_tcbs": b.total_tcbs,
        "nnz": b.nnz,
        "footprint_bits": {"BSB": footprint_bits("BSB", footprint_params(b)),
                           "CSR": footprint_bits("CSR", footprint_params(b))},
    })
    return EXIT_OK


def cmd_dump(args):
    with open(args.input, "rb") as fh:
        b = deserialize(fh.read())
    _emit({
        "n_rows": b.n_rows,
        "n_cols": b.n_cols,
        "r": b.r,
        "c": b.c,
        "num_rw": b.num_rw,
        "total_tcbs": b.total_tcbs,
        "nnz": b.nnz,
        "tro": b.tro.tolist(),
        "sptd_offsets": b.sptd_offsets.tolist(),
        "sptd": b.sptd.tolist(),
        "bitmaps": [row.tobytes().hex() for row in b.bitmaps],
        "rw_order": b.rw_order.tolist(),
        "entries": to_dense(b).entries() if args.entries else None,
    })
    return EXIT_OK


def _config(args, b):
    return FusedConfig(
        warps_per_block=args.warps,
        warp_partition=args.partition,
        apply_remap=args.remap,
        rw_schedule=args.schedule,
    )


def cmd_run(args):
    b = _load_bsb(args)
    if args.schedule == "reordered":
        b = reorder_row_windows(b)
    cfg = _config(args, b)
    if b.n_rows != b.n_cols:
        raise CliError(f"mask must be square, got {b.n_rows}x{b.n_cols}", EXIT_INVALID)
    q, k, v = synth_qkv(b.n_rows, args.d, args.seed)
    mask = to_dense(b)

    t0 = time.perf_counter()
    out = fused3s_forward(b, q, k, v, cfg)
    t1 = time.perf_counter()
    unfused = unfused_3s_oracle(mask, q, k, v, precision="double")
    t2 = time.perf_counter()
    if b.n_rows <= DENSE_ORACLE_LIMIT:
        ref, oracle = dense_attention_oracle(mask, q, k, v, precision="double"), "dense"
    else:
        ref, oracle = unfused, "unfused"

    err = np.abs(out.astype(np.float64) - ref)
    max_err = float(err.max()) if err.size else 0.0
    mean_err = float(err.mean()) if err.size else 0.0
    report = RunReport(
        N=b.n_rows, d=args.d, nnz=b.nnz, r=b.r, c=b.c, seed=args.seed,
        partition=cfg.warp_partition, remap=cfg.apply_remap, schedule=cfg.rw_schedule,
        oracle=oracle, max_abs_err=max_err, mean_abs_err=mean_err, tolerance=args.tolerance,
        time_fused_s=t1 - t0, time_unfused_s=t2 - t1, checksum=_checksum(out),
        passed=bool(max_err <= args.tolerance),
    )
    _emit(asdict(report))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_stats(args):
    mask = _load_mask(args)
    stats = compute_stats(mask, args.r, args.c, include_empty=not args.exclude_empty)
    if args.format == "json":
        print(stats.to_json())
    else:
        name = args.name or (args.synthetic.split(":")[0] if args.synthetic else "graph")
        print(format_stats_table(stats, name))
    return EXIT_OK


def _order(spec, counts):
    if spec == "original":
        return list(range(len(counts)))
    if spec == "lpt":
        return lpt_order(counts)
    if spec.startswith("random:"):
        return random_order(len(counts), int(spec.split(":", 1)[1]))
    raise CliError(f"unknown order {spec!r} (original, lpt, random:SEED)", EXIT_INVALID)


def cmd_simulate(args):
    b = _load_bsb(args)
    counts = b.tcb_counts.tolist()
    cm = CostModel(args.alpha, args.beta)
    trace = simulate_schedule(counts, _order(args.order, counts), args.sms, cm)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv())
    original = simulate_schedule(counts, None, args.sms, cm)
    lpt = simulate_schedule(counts, lpt_order(counts), args.sms, cm)
    if args.compare_trace:
        with open(args.compare_trace, "w") as fh:
            fh.write(original.to_csv() if args.order != "original" else lpt.to_csv())
    summary = trace.summary()
    summary.update({
        "order": args.order,
        "num_sms": args.sms,
        "num_rw": len(counts),
        "total_cost": sum(cm.costs(counts)),
        "original_makespan": original.makespan,
        "lpt_makespan": lpt.makespan,
        "original_over_lpt": original.makespan / lpt.makespan if lpt.makespan else 1.0,
        "active_time": trace.active_time,
    })
    _emit(summary)
    return EXIT_OK


def _timed(fn, repeat):
    times = []
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, times


def _peak_bytes(fn):
    tracemalloc.start()
    tracemalloc.reset_peak()
    try:
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak


def bench_paths(b, d, seed=0, repeat=3, cfg=None):
    """Time the fused engine and the unfused single-precision pipeline.

    Also records the largest score/weight buffer each path allocates and its
    tracemalloc peak. Returns a dict.
    """
    cfg = cfg or FusedConfig()
    q, k, v = synth_qkv(b.n_rows, d, seed)
    mask = to_dense(b)
    fused_trk, unfused_trk = AllocationTracker(), AllocationTracker()
    out_f, t_f = _timed(lambda: fused3s_forward(b, q, k, v, cfg, tracker=fused_trk), repeat)
    out_u, t_u = _timed(lambda: unfused_3s_oracle(mask, q, k, v, precision="single", tracker=unfused_trk), repeat)
    peak_f = _peak_bytes(lambda: fused3s_forward(b, q, k, v, cfg))
    peak_u = _peak_bytes(lambda: unfused_3s_oracle(mask, q, k, v, precision="single"))
    N = b.n_rows
    block = b.r * b.c * cfg.warps_per_block
    fused_se = fused_trk.max_elements("S", "E")
    unfused_se = unfused_trk.max_elements("S", "E")
    return {
        "N": N, "d": d, "nnz": b.nnz, "repeat": repeat,
        "fused": {"median_s": statistics.median(t_f), "min_s": min(t_f), "max_s": max(t_f),
                  "checksum": _checksum(out_f), "max_SE_elements": fused_se, "peak_bytes": peak_f},
        "unfused": {"median_s": statistics.median(t_u), "min_s": min(t_u), "max_s": max(t_u),
                    "checksum": _checksum(out_u), "max_SE_elements": unfused_se, "peak_bytes": peak_u},
        "block_elements": block,
        "fused_SE_bounded_by_block": fused_se <= block,
        "fused_avoids_NxN": fused_se < N * N,
        "fused_avoids_nnz_E": fused_se < b.nnz or b.nnz <= block,
        "unfused_materializes_nnz_E": unfused_se >= b.nnz,
    }


def cmd_bench(args):
    b = _load_bsb(args)
    res = bench_paths(b, args.d, args.seed, args.repeat, _config(args, b))
    if args.json:
        _emit(res)
    else:
        print("CPU wall-clock of this implementation only; not comparable to GPU kernel timings.")
        print(f"N={res['N']} d={res['d']} nnz={res['nnz']} repeat={res['repeat']}")
        print(f"{'path':<8} {'median s':>10} {'min s':>10} {'max s':>10} {'max S/E elems':>14} {'peak bytes':>12}")
        for name in ("fused", "unfused"):
            p = res[name]
            print(f"{name:<8} {p['median_s']:>10.4f} {p['min_s']:>10.4f} {p['max_s']:>10.4f} "
                  f"{p['max_SE_elements']:>14} {p['peak_bytes']:>12}")
        print(f"fused S/E buffers <= r*c*W ({res['block_elements']}): {res['fused_SE_bounded_by_block']}")
        print(f"fused avoids N x N intermediate: {res['fused_avoids_NxN']}")
        print(f"unfused materializes nnz-sized E: {res['unfused_materializes_nnz_E']}")
        print(f"fused checksum {res['fused']['checksum'][:16]}")
    ok = res["fused_SE_bounded_by_block"] and res["fused_avoids_NxN"]
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_input(p, with_block=True):
    p.add_argument("input", nargs="?", help="Matrix Market file, edge list, or BSB file")
    p.add_argument("--synthetic", help="e.g. uniform:n=128,density=0.05 or power_law:n=1000,m=4")
    p.add_argument("--graph-seed", type=int, default=0, help="seed for --synthetic")
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--self-loops", action="store_true")
    if with_block:
        p.add_argument("--r", type=int, default=16, help="row-window height")
        p.add_argument("--c", type=int, default=8, help="TCB width")


def _add_engine(p):
    p.add_argument("--d", type=int, default=32, help="feature dimension")
    p.add_argument("--seed", type=int, default=0, help="splitmix64 seed for Q, K, V")
    p.add_argument("--warps", type=int, default=4)
    p.add_argument("--partition", choices=PARTITIONS, default="split_column")
    p.add_argument("--remap", action="store_true")
    p.add_argument("--schedule", choices=("original", "reordered"), default="original")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparse3s", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="graph -> BSB file")
    _add_input(p)
    p.add_argument("output")
    p.add_argument("--reorder", action="store_true", help="store the LPT row-window order")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("dump", help="print a BSB file as JSON")
    p.add_argument("input")
    p.add_argument("--entries", action="store_true", help="include the (row, col) support")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("run", help="fused forward vs double-precision oracle")
    _add_input(p)
    _add_engine(p)
    p.add_argument("--tolerance", type=float, default=5e-2)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="TCB/RW and nnz/TCB statistics")
    _add_input(p)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--exclude-empty", action="store_true", help="drop empty row windows from TCB/RW")
    p.add_argument("--name", help="row label for the table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("simulate", help="SM scheduling simulation")
    _add_input(p)
    p.add_argument("--sms", type=int, default=56)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--order", default="original", help="original, lpt, or random:SEED")
    p.add_argument("--trace", help="write the per-SM interval CSV here")
    p.add_argument("--compare-trace", help="write the CSV of the other baseline (original or lpt) here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="CPU timing and intermediate-size check")
    _add_input(p)
    _add_engine(p)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ParseError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

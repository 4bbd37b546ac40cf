"""Command-line interface: generate, solve, oracle, and bench subcommands."""

import argparse
import csv
import logging
import os
import sys
import time

from . import instance as instance_mod
from . import oracle as oracle_mod
from . import rounding
from .errors import QksdpError
from .solver import SolverConfig, solve_pipeline

CSV_FIELDS = [
    "instance", "n", "p", "beta", "r", "obj", "Rp", "Rd", "pdgap",
    "time_s", "status", "escapes", "relgap", "rounded_value",
]

OK_STATUSES = ("Converged", "NonRegularOptimal")


def _add_instance_args(p):
    p.add_argument("--in", dest="infile", help="instance file to read")
    p.add_argument("--format", default="qkp-text",
                   choices=["qkp-text", "knap-linear"], help="input file format")
    p.add_argument("--generate", choices=instance_mod.FAMILIES,
                   help="generate an instance instead of reading one")
    p.add_argument("--n", type=int, default=100, help="generated size")
    p.add_argument("--p", type=float, default=0.25, help="profit density")
    p.add_argument("--beta", type=float, default=0.5, help="capacity fraction")
    p.add_argument("--integer-capacity", action="store_true",
                   help="round the generated capacity up to an integer")
    p.add_argument("--seed", type=int, default=0, help="random seed")


def _add_solver_args(p):
    p.add_argument("--r", type=int, default=0, help="factor rank (0 = auto)")
    p.add_argument("--tol", type=float, default=1e-6, help="KKT tolerance")
    p.add_argument("--delta0", type=float, default=0.1,
                   help="initial rounding-guard radius")
    p.add_argument("--max-time", type=float, default=3600.0,
                   help="wall-clock budget in seconds")
    p.add_argument("--rd-mode", default="auto",
                   choices=["auto", "full-eig", "lambda-min"],
                   help="dual-residue eigenvalue mode")
    p.add_argument("--round", action="store_true", dest="do_round",
                   help="also round to a binary solution and report relgap")
    p.add_argument("--csv-out", help="append a run record to this CSV file")
    p.add_argument("--report-out", help="write a detailed text report here")


def _load_instance(args):
    if args.generate:
        spec = instance_mod.GeneratorSpec(
            args.generate, args.n, p=args.p, beta=args.beta, seed=args.seed,
            integer_capacity=args.integer_capacity,
        )
        return instance_mod.generate(spec)
    if not args.infile:
        raise QksdpError("either --in or --generate is required")
    return instance_mod.read_instance(args.infile, format=args.format)


def _instance_id(args):
    if args.generate:
        return f"{args.generate}-n{args.n}-s{args.seed}"
    return os.path.basename(args.infile)


def _write_csv_row(path, record):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            w.writeheader()
        w.writerow(record)


def _write_report(path, inst, report, rounded):
    cert = report.certificate
    R = report.point.R
    with open(path, "w") as fh:
        fh.write(f"status {report.status}\n")
        fh.write(f"n {inst.n}\nrank {report.rank}\nmodel {report.model}\n")
        fh.write(f"obj {cert.obj:.17g}\ny {cert.y:.17g}\nlambda {cert.lam:.17g}\n")
        fh.write(f"Rp {cert.Rp:.17g}\nRd {cert.Rd:.17g}\npdgap {cert.pdgap:.17g}\n")
        fh.write(f"iterations {report.iterations}\nescapes {report.escapes_triggered}\n")
        fh.write(f"time_s {report.wall_time_s:.6f}\n")
        if rounded is not None:
            fh.write(f"rounded_value {rounded.value:.17g}\n")
            fh.write(f"rounded_weight {rounded.weight:.17g}\n")
            fh.write("x " + "".join(str(int(b)) for b in rounded.x) + "\n")
        fh.write("mu " + " ".join(f"{m:.17g}" for m in cert.mu) + "\n")
        fh.write(f"R {R.shape[0]} {R.shape[1]}\n")
        for row in R:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _solve_record(inst, args, inst_id):
    config = SolverConfig(
        r=args.r, tol_kkt=args.tol, delta0=args.delta0, max_time_s=args.max_time,
        seed=args.seed, rd_mode=args.rd_mode,
    )
    report = solve_pipeline(inst, config)
    rounded = gap = None
    if args.do_round:
        rounded = rounding.round_solution(report.point, inst)
        gap = rounding.relgap(-report.certificate.obj, rounded)
        report.rounded = rounded
    cert = report.certificate
    meta = inst.meta or {}
    record = {
        "instance": inst_id, "n": inst.n,
        "p": meta.get("p", ""), "beta": meta.get("beta", ""),
        "r": report.rank, "obj": f"{cert.obj:.10e}",
        "Rp": f"{cert.Rp:.3e}", "Rd": f"{cert.Rd:.3e}", "pdgap": f"{cert.pdgap:.3e}",
        "time_s": f"{report.wall_time_s:.3f}", "status": report.status,
        "escapes": report.escapes_triggered,
        "relgap": "" if gap is None else f"{gap:.4e}",
        "rounded_value": "" if rounded is None else f"{rounded.value:.10g}",
    }
    return report, rounded, record


def cmd_generate(args):
    inst = _load_instance(args)
    out = args.out or "-"
    if out == "-":
        sys.stdout.write(instance_mod.dumps(inst, format=args.out_format))
    else:
        instance_mod.write_instance(inst, out, format=args.out_format)
    return 0


def cmd_solve(args):
    inst = _load_instance(args)
    inst_id = _instance_id(args)
    report, rounded, record = _solve_record(inst, args, inst_id)
    cert = report.certificate
    print(f"{inst_id}: status={report.status} obj={cert.obj:.10e} "
          f"Rp={cert.Rp:.3e} Rd={cert.Rd:.3e} pdgap={cert.pdgap:.3e} "
          f"time={report.wall_time_s:.2f}s escapes={report.escapes_triggered}")
    if rounded is not None:
        print(f"rounded value={rounded.value:.10g} weight={rounded.weight:.10g} "
              f"relgap={record['relgap']}")
    if args.csv_out:
        _write_csv_row(args.csv_out, record)
    if args.report_out:
        _write_report(args.report_out, inst, report, rounded)
    return 0 if report.status in OK_STATUSES else 1


def cmd_oracle(args):
    inst = _load_instance(args)
    opt, x_opt = oracle_mod.exhaustive_qkp(inst)
    print(f"exhaustive optimum {opt:.10g} at x={''.join(map(str, x_opt))}")
    report, rounded, _ = _solve_record(inst, args, _instance_id(args))
    cert = report.certificate
    bound = -cert.obj
    print(f"sdp bound {bound:.10g} (status={report.status})")
    Rp, Rd, pdgap, _obj = oracle_mod.dense_kkt(
        inst, report.point.R, cert.mu, cert.lam, cert.y
    )
    print(f"dense KKT recheck Rp={Rp:.3e} Rd={Rd:.3e} pdgap={pdgap:.3e}")
    # escape dual at the origin (always a non-regular point): fast solver vs grid
    import numpy as np

    from . import escape as escape_mod

    scaled = instance_mod.scale(inst)
    prob = escape_mod.EscapeProblem.at_point(
        np.zeros(inst.n), scaled.C, scaled.a, scaled.tau, max(3, args.r or 3)
    )
    out = escape_mod.solve_escape_sdp(prob)
    grid_val, _ = oracle_mod.escape_dual_grid(prob)
    print(f"escape dual at 0: solver {out.dual_value:.8e} grid {grid_val:.8e}")
    ok = abs(out.dual_value - grid_val) <= 1e-6 * (1.0 + abs(grid_val))
    ok = ok and bound >= opt - 1e-6 * (1.0 + abs(opt))
    if rounded is not None:
        ok = ok and rounded.value <= opt + 1e-9
        print(f"rounded value {rounded.value:.10g}")
    print("sandwich", "OK" if ok else "VIOLATED")
    return 0 if ok else 1


def _bench_one(job):
    family, n, seed, vargs = job
    ns = argparse.Namespace(**vargs)
    ns.generate, ns.n, ns.seed = family, n, seed
    inst = _load_instance(ns)
    return _solve_record(inst, ns, f"{family}-n{n}-s{seed}")[2]


def cmd_bench(args):
    families = args.families.split(",")
    sizes = [int(s) for s in args.sizes.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    vargs = dict(vars(args))
    jobs = [(f, n, s, vargs) for f in families for n in sizes for s in seeds]
    workers = max(1, int(os.environ.get("QKSDP_THREADS", "1")))
    rows = []
    start = time.perf_counter()

    def flush():
        if args.csv_out:
            for row in rows:
                _write_csv_row(args.csv_out, row)
        w = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS)
        w.writeheader()
        w.writerows(rows)

    try:
        if workers > 1:
            import concurrent.futures as cf

            with cf.ProcessPoolExecutor(max_workers=workers) as ex:
                for row in ex.map(_bench_one, jobs):
                    rows.append(row)
                    if time.perf_counter() - start > args.max_time * len(jobs):
                        break
        else:
            for job in jobs:
                rows.append(_bench_one(job))
                if time.perf_counter() - start > args.max_time * len(jobs):
                    break
    finally:
        flush()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qksdp",
        description="Low-rank feasible-method solver for quadratic knapsack SDPs",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate an instance file")
    _add_instance_args(g)
    g.add_argument("--out", help="output path (default stdout)")
    g.add_argument("--out-format", default="qkp-text",
                   choices=["qkp-text", "knap-linear"])
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    _add_instance_args(s)
    _add_solver_args(s)
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="brute-force cross-check on a small instance")
    _add_instance_args(o)
    _add_solver_args(o)
    o.set_defaults(func=cmd_oracle, do_round=True)

    b = sub.add_parser("bench", help="run a benchmark suite")
    _add_instance_args(b)
    _add_solver_args(b)
    b.add_argument("--families", default="random-qkp",
                   help="comma-separated generator families")
    b.add_argument("--sizes", default="100", help="comma-separated sizes")
    b.add_argument("--seeds", default="0", help="comma-separated seeds")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
    )
    try:
        return args.func(args)
    except QksdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

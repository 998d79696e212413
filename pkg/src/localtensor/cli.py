"""Command-line entry point: ``localtensor <subcommand> ...``.

Exit codes: 0 success, 1 verification mismatch or bound violation, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, engine, instances, m3l2, tensor_net, triangle_free as tf

# Published one-step results for triangle-free MAX-CUT, D = 2..19:
# (threshold improvement, optimal threshold, one-step QAOA improvement).
REFERENCE_TABLE = {
    2: (0.2500, 2, 0.2500), 3: (0.1875, 3, 0.1925), 4: (0.1406, 3, 0.1624),
    5: (0.1562, 4, 0.1431), 6: (0.1221, 5, 0.1294), 7: (0.1282, 5, 0.1190),
    8: (0.1166, 6, 0.1108), 9: (0.1077, 6, 0.1040), 10: (0.1077, 7, 0.0984),
    11: (0.0925, 7, 0.0936), 12: (0.0987, 8, 0.0894), 13: (0.0886, 9, 0.0858),
    14: (0.0905, 9, 0.0825), 15: (0.0853, 10, 0.0796), 16: (0.0833, 10, 0.0770),
    17: (0.0816, 11, 0.0747), 18: (0.0771, 11, 0.0725), 19: (0.0778, 12, 0.0705),
}
TABLE_TOL = 1e-4
SCAN_DMAX = 5000


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def _metadata(args, seed=None) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    meta = {"version": __version__, "command": args.command, "flags": flags}
    if seed is not None:
        meta["seed"] = seed
    return meta


def _resolve_seed(args):
    if getattr(args, "seed", None) is None:
        args.seed = int(np.random.SeedSequence().entropy % (1 << 63))
    return args.seed


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(args, header, rows, seed=None, extra_meta=None):
    meta = _metadata(args, seed)
    if extra_meta:
        meta.update(extra_meta)
    buf = io.StringIO()
    for key, val in meta.items():
        buf.write(f"# {key}: {json.dumps(val, sort_keys=True, default=str)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    _emit(args, buf.getvalue())


def _write_json(args, payload, seed=None):
    payload = {"metadata": _metadata(args, seed), **payload}
    _emit(args, json.dumps(payload, indent=1, sort_keys=True, default=str) + "\n")


def _write(args, header, rows, seed=None, extra_meta=None):
    if args.format == "json":
        payload = {"columns": header, "rows": [dict(zip(header, r)) for r in rows]}
        if extra_meta:
            payload.update(extra_meta)
        _write_json(args, payload, seed)
    else:
        _write_csv(args, header, rows, seed, extra_meta)


# --- subcommands --------------------------------------------------------------------


def cmd_generate(args):
    seed = _resolve_seed(args)
    if args.kind == "instance":
        obj = instances.gen_maxklin2(args.n, args.d, args.k, seed, args.sign_mode)
    elif args.kind == "bipartite":
        obj = instances.gen_bipartite_regular_graph(args.n, args.d, seed)
    else:
        obj = instances.gen_triangle_free_regular_graph(args.n, args.d, seed)
    _write_json(args, obj.to_json(), seed)
    return 0


def reproduce_table(d_min=2, d_max=19):
    rows, mismatches = [], []
    for d in range(d_min, d_max + 1):
        tau, thr = tf.optimize_threshold(d)
        q = tf.qaoa_one_step(d)
        rows.append((d, thr, tau, q))
        ref = REFERENCE_TABLE.get(d)
        if ref is None:
            continue
        if abs(thr - ref[0]) > TABLE_TOL or tau != ref[1] or abs(q - ref[2]) > TABLE_TOL:
            mismatches.append((d, (round(thr, 4), tau, round(q, 4)), ref))
    return rows, mismatches


def cmd_table(args):
    if not 2 <= args.dmin <= args.dmax:
        raise UsageError("need 2 <= --dmin <= --dmax")
    rows, mismatches = reproduce_table(args.dmin, args.dmax)
    header = ["D", "threshold_improvement", "threshold_value", "qaoa_improvement"]
    if args.format == "json":
        _write(args, header, rows, extra_meta={"mismatches": mismatches})
    else:
        meta = _metadata(args)
        text = "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())
        text += ",".join(header) + "\n"
        text += "".join(f"{d},{thr:.4f},{tau},{q:.4f}\n" for d, thr, tau, q in rows)
        _emit(args, text)
    for d, got, ref in mismatches:
        print(f"mismatch at D={d}: computed {got}, reference {ref}", file=sys.stderr)
    return 1 if mismatches else 0


def cmd_scan(args):
    if args.dmax > SCAN_DMAX:
        raise UsageError(f"--dmax is limited to {SCAN_DMAX}")
    if not 1 <= args.dmin <= args.dmax:
        raise UsageError("need 1 <= --dmin <= --dmax")
    rows = tf.scaling_scan(args.dmin, args.dmax)
    exceptions = tf.qaoa_wins(rows)
    header = ["D", "tau_star", "thr_improvement", "thr_scaled", "qaoa_improvement", "qaoa_scaled"]
    body = [(r.d, r.tau_star, r.thr_improvement, r.thr_scaled, r.qaoa_improvement, r.qaoa_scaled)
            for r in rows]
    _write(args, header, body, extra_meta={"qaoa_wins": exceptions})
    print(f"qaoa beats threshold at D in {exceptions}", file=sys.stderr)
    return 0


def cmd_optimize(args):
    tau, thr = tf.optimize_threshold(args.d)
    rule, soft = tf.optimize_soft_threshold(args.d, args.grid)
    payload = {
        "d": args.d,
        "threshold": {"tau": tau, "improvement": thr},
        "soft_threshold": {"q": list(rule.q), "improvement": soft},
        "qaoa_improvement": tf.qaoa_one_step(args.d),
    }
    if args.tau is not None:
        payload["requested_tau"] = {
            "tau": args.tau,
            "improvement": tf.expected_improvement(tf.threshold_rule(args.d, args.tau)),
        }
    _write_json(args, payload)
    return 0


def cmd_mc(args):
    seed = _resolve_seed(args)
    est, err = tf.mc_local_subgraph(args.d, args.init, args.c0, args.samples, seed)
    _write_json(args, {"d": args.d, "c": args.c0, "init": args.init, "samples": args.samples,
                       "improvement": est, "stderr": err}, seed)
    return 0


def cmd_enumerate(args):
    val = tf.enumerate_local_subgraph(args.d, args.init, args.c0)
    _write_json(args, {"d": args.d, "c": args.c0, "init": args.init, "improvement": val,
                       "qaoa_improvement": tf.qaoa_one_step(args.d)})
    return 0


def _load_problem(args, seed):
    if args.instance:
        obj = instances.load_json(args.instance)
    elif args.graph:
        if args.n is None or args.d is None:
            raise UsageError("--graph needs --n and --d")
        gen = (instances.gen_bipartite_regular_graph if args.graph == "bipartite"
               else instances.gen_triangle_free_regular_graph)
        obj = gen(args.n, args.d, seed)
    else:
        if args.n is None or args.d is None:
            raise UsageError("give --instance, --graph, or --n/--d/--k")
        obj = instances.gen_maxklin2(args.n, args.d, args.k, seed)
    if isinstance(obj, instances.Graph):
        return instances.maxcut_as_max2lin2(obj), obj
    return obj, None


def cmd_run(args):
    seed = _resolve_seed(args)
    try:
        schedule = engine.Schedule.from_json(json.loads(Path(args.schedule).read_text()))
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise UsageError(f"malformed schedule: {exc}") from None
    inst, graph = _load_problem(args, seed)
    if schedule.k is not None and schedule.k != inst.k:
        raise UsageError(f"schedule expects K={schedule.k} but the instance has K={inst.k}")
    z, obj = engine.run_batch(inst, schedule.init, schedule.steps, schedule.rounding,
                              seed, args.trials)
    payload = {
        "n_spins": inst.n_spins, "k": inst.k, "n_terms": inst.n_terms, "trials": args.trials,
        "objective_mean": float(obj.mean()),
        "objective_stderr": float(obj.std(ddof=1) / math.sqrt(args.trials)) if args.trials > 1 else 0.0,
    }
    if graph is not None and graph.n_edges:
        imp = obj / (2.0 * graph.n_edges)
        payload["improvement_mean"] = float(imp.mean())
        payload["improvement_stderr"] = (float(imp.std(ddof=1) / math.sqrt(args.trials))
                                         if args.trials > 1 else 0.0)
    if args.dump:
        payload["objectives"] = [float(x) for x in obj]
    _write_json(args, payload, seed)
    return 0


def cmd_m3l2(args):
    seed = _resolve_seed(args)
    rows = m3l2.scaling_experiment(args.d, args.n, args.alpha, args.trials, seed, args.k)
    header = ["D", "N", "K", "c0", "mean", "stderr", "scaled", "clamp_fraction"]
    body = [(r.d, r.n, r.k, r.c0, r.mean, r.stderr, r.scaled, r.clamp) for r in rows]
    _write(args, header, body, seed)
    return 0


def cmd_expansion(args):
    seed = _resolve_seed(args)
    if args.instance:
        inst = instances.load_json(args.instance)
    else:
        inst = instances.gen_max3lin2(args.n, args.d[0], seed)
    c0 = args.c0 if args.c0 is not None else m3l2.default_c0(inst.degree or args.d[0], args.alpha)
    report = m3l2.expansion_report(inst, c0, args.trials, seed)
    _write_json(args, report.to_json(), seed)
    return 0


def cmd_check_bounds(args):
    if args.fixture:
        data = json.loads(Path(args.fixture).read_text())
        nets = [tensor_net.TensorNetwork.from_json(x) for x in
                (data if isinstance(data, list) else [data])]
        seed = None
    else:
        seed = _resolve_seed(args)
        rng = np.random.default_rng(seed)
        nets = [tensor_net.random_network(rng, max_nnz=args.max_nnz) for _ in range(args.count)]
    rng = np.random.default_rng(0 if seed is None else seed + 1)
    violations = []
    for n, net in enumerate(nets):
        try:
            val, bound, ok = tensor_net.check_lemma_bound(net)
        except tensor_net.BoundPrecondition as exc:
            raise UsageError(f"network {n}: precondition failed: {exc}") from None
        s = [t for t in range(net.n_tensors) if rng.random() < 0.5]
        lhs, rhs, ok_cs = tensor_net.check_cauchy_schwarz(net, s)
        if not (ok and ok_cs):
            violations.append({"index": n, "value": val, "bound": bound, "cut_set": s,
                               "val_sq": lhs, "val_cut": rhs, "network": net.to_json()})
    _write_json(args, {"networks": len(nets), "violations": violations}, seed)
    return 1 if violations else 0


# --- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localtensor",
                                description="Local tensor algorithms for MAX-K-LIN-2 and MAX-CUT")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        return sp

    sp = add("generate", cmd_generate, "random instance or triangle-free graph")
    sp.add_argument("kind", choices=("instance", "bipartite", "triangle-free"))
    sp.add_argument("--n", type=int, required=True,
                    help="spins/vertices (vertices per side for bipartite)")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--sign-mode", choices=("all_plus", "uniform_random"), default="uniform_random")
    sp.add_argument("--seed", type=int)

    sp = add("table", cmd_table, "reproduce the D=2..19 threshold/QAOA table")
    sp.add_argument("--dmin", type=int, default=2)
    sp.add_argument("--dmax", type=int, default=19)

    sp = add("scan", cmd_scan, "threshold vs QAOA over a range of degrees")
    sp.add_argument("--dmin", type=int, default=2)
    sp.add_argument("--dmax", type=int, default=1000)

    sp = add("optimize", cmd_optimize, "best hard and soft threshold for one degree")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--grid", type=float, default=0.01)
    sp.add_argument("--tau", type=int)

    sp = add("mc", cmd_mc, "Monte Carlo of one step on the local subgraph")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--c0", "--c", type=float, required=True)
    sp.add_argument("--init", choices=sorted(engine.INIT_DISTRIBUTIONS), default="continuous_uniform")
    sp.add_argument("--samples", type=int, default=10**6)
    sp.add_argument("--seed", type=int)

    sp = add("enumerate", cmd_enumerate, "exact one-step value for a finite-support init")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--c0", "--c", type=float, required=True)
    sp.add_argument("--init", choices=["plus_minus_one", "plus_minus_half", "four_point"],
                    default="four_point")

    sp = add("run", cmd_run, "run a schedule on an instance or graph")
    sp.add_argument("--schedule", required=True, help="schedule JSON file")
    sp.add_argument("--instance", help="instance or graph JSON file")
    sp.add_argument("--graph", choices=("bipartite", "triangle-free"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dump", action="store_true", help="include per-trial objectives")

    sp = add("m3l2", cmd_m3l2, "MAX-K-LIN-2 scaling experiment")
    sp.add_argument("--d", type=int, nargs="+", default=[4, 8, 16, 32])
    sp.add_argument("--n", type=int, default=600)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--alpha", type=float, default=0.25)
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--seed", type=int)

    sp = add("expansion", cmd_expansion, "linear/cubic terms vs measured objective")
    sp.add_argument("--instance")
    sp.add_argument("--n", type=int, default=12)
    sp.add_argument("--d", type=int, nargs=1, default=[3])
    sp.add_argument("--c0", type=float)
    sp.add_argument("--alpha", type=float, default=0.25)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--seed", type=int)

    sp = add("check-bounds", cmd_check_bounds, "randomized checks of the contraction bound")
    sp.add_argument("--fixture", help="network JSON (object or list)")
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--max-nnz", type=int, default=None)
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, instances.GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

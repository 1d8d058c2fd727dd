"""Command-line surface: generate, robustify, score, deploy, analyze, plot,
trace. Every command with a fixed --seed writes byte-identical artifacts
regardless of --workers. Exit codes: 0 success, 2 configuration error, 3 data
format error."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .drfitness import VARIANTS, DRConfig, eval_dr_fitness
from .plotting import PlotError, render_scatter_svg
from .qd import run_map_elites, run_tr_me
from .rollout import NoiseModel, run_episode
from .scene import Genome, SceneError, decode_genome, load_scene
from .seeds import stable_hash64
from .store import DataFormatError, load_repertoire, save_repertoire
from .transfer import (
    TransferError,
    TransferReport,
    analyze_transfer,
    deploy_repertoire,
    make_domains,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


def _progress_writer(path):
    if path is None:
        return None, None
    fh = open(path, "w")

    def write(stats):
        fh.write(json.dumps(stats, sort_keys=True, separators=(",", ":")) + "\n")

    return write, fh


def _resolve_scene(args, meta=None):
    name = getattr(args, "scene", None)
    if name is None and meta is not None:
        name = meta.get("scene")
    if not name or name == "custom":
        raise ConfigError("no scene given: pass --scene (name or JSON path)")
    return load_scene(name)


def cmd_generate(args) -> int:
    scene = _resolve_scene(args)
    on_gen, fh = _progress_writer(args.log)
    try:
        rep = run_map_elites(
            scene,
            "success_greedy",
            "stability_energy",
            budget=args.budget,
            seed=args.seed,
            workers=args.workers,
            on_generation=on_gen,
            stage="me-scs",
        )
    finally:
        if fh:
            fh.close()
    save_repertoire(rep, args.output)
    print(f"wrote {args.output}: {len(rep)} elites "
          f"({sum(1 for e in rep.cells.values() if e.success)} successful)")
    return EXIT_OK


def cmd_robustify(args) -> int:
    rep = load_repertoire(args.input)
    scene = _resolve_scene(args, rep.metadata)
    on_gen, fh = _progress_writer(args.log)
    try:
        out = run_tr_me(
            scene,
            budget_stage1=0,
            budget_stage2=args.budget,
            seed=args.seed,
            workers=args.workers,
            stage1_rep=rep,
            on_generation=on_gen,
        )
    finally:
        if fh:
            fh.close()
    save_repertoire(out, args.output)
    print(f"wrote {args.output}: {len(out)} elites")
    return EXIT_OK


def cmd_score(args) -> int:
    rep = load_repertoire(args.input)
    scene = _resolve_scene(args, rep.metadata)
    variant = args.variant.upper()
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {[v.lower() for v in VARIANTS]}")
    cfg = DRConfig(variant=variant, n=args.n, master_seed=stable_hash64(args.seed, "score"))
    elites = rep.elites() if args.all else rep.successful()
    rows = []
    for e in elites:
        traj = decode_genome(Genome(e.genome), scene)
        fit = eval_dr_fitness(traj, scene, cfg, traj_id=e.elite_id)
        rows.append((e.elite_id, variant.lower(), fit, cfg.n))
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["elite_id", "variant", "fitness", "N"])
        w.writerows(rows)
    print(f"wrote {args.output}: {len(rows)} rows")
    return EXIT_OK


def cmd_deploy(args) -> int:
    rep = load_repertoire(args.input)
    scene = _resolve_scene(args, rep.metadata)
    domains = make_domains(scene, args.domains, args.severity, seed=stable_hash64(args.seed, "domains"))
    rows = deploy_repertoire(
        rep,
        domains,
        reps_per_domain=args.reps,
        seed=args.seed,
        workers=args.workers,
        successful_only=not args.all,
    )
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["elite_id", "eta", "reps_per_domain", "n_domains"]
            + [f"succ_{i}" for i in range(args.domains)]
        )
        for r in rows:
            w.writerow([r.elite_id, r.eta, r.reps_per_domain, args.domains] + list(r.per_domain))
    print(f"wrote {args.output}: {len(rows)} rows")
    return EXIT_OK


def _read_csv(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: empty CSV")
    for col in required:
        if col not in rows[0]:
            raise DataFormatError(f"{path}: missing column {col!r}")
    return rows


def cmd_analyze(args) -> int:
    fit_rows = _read_csv(args.fit, ["elite_id", "fitness"])
    eta_rows = _read_csv(args.eta, ["elite_id", "eta"])
    try:
        fits = {int(r["elite_id"]): float(r["fitness"]) for r in fit_rows}
        etas = {int(r["elite_id"]): float(r["eta"]) for r in eta_rows}
        per_domain = _per_domain_means(eta_rows)
    except ValueError as exc:
        raise DataFormatError(f"bad numeric value: {exc}") from exc
    ids = sorted(set(fits) & set(etas))
    if len(ids) < 3:
        raise DataFormatError("fewer than 3 elites shared between fitness and eta files")
    variant = fit_rows[0].get("variant", "")
    report = analyze_transfer(
        [fits[i] for i in ids],
        [etas[i] for i in ids],
        elite_ids=ids,
        variant=variant,
        per_domain_eta=per_domain,
    )
    with open(args.output, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    bins_path = args.output.rsplit(".", 1)[0] + ".bins.csv"
    with open(bins_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "lo", "hi", "count", "mean_fitness", "mean_eta"])
        for b in report.bins:
            w.writerow([b.index, b.lo, b.hi, b.count, b.mean_fitness, b.mean_eta])
    print(
        f"wrote {args.output} (r={report.pearson:.4f}, p={report.p_value:.3e}, "
        f"{len(report.bins)} retained bins) and {bins_path}"
    )
    return EXIT_OK


def _per_domain_means(eta_rows):
    cols = [c for c in eta_rows[0] if c.startswith("succ_")]
    if not cols or "reps_per_domain" not in eta_rows[0]:
        return ()
    cols.sort(key=lambda c: int(c.split("_")[1]))
    means = []
    for c in cols:
        total = sum(int(r[c]) for r in eta_rows)
        reps = sum(int(r["reps_per_domain"]) for r in eta_rows)
        means.append(total / reps if reps else 0.0)
    return tuple(means)


def cmd_plot(args) -> int:
    with open(args.input) as fh:
        try:
            report = TransferReport.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{args.input}: bad report JSON: {exc}") from exc
    render_scatter_svg(report, args.output, show_raw=args.raw)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_trace(args) -> int:
    scene = _resolve_scene(args)
    if args.genome:
        try:
            params = np.array([float(v) for v in args.genome.split(",")])
        except ValueError as exc:
            raise ConfigError(f"bad --genome: {exc}") from exc
    elif args.input is not None and args.elite_id is not None:
        rep = load_repertoire(args.input)
        matches = [e for e in rep.elites() if e.elite_id == args.elite_id]
        if not matches:
            raise ConfigError(f"elite {args.elite_id} not found in {args.input}")
        params = matches[0].genome
    else:
        raise ConfigError("trace needs --genome or (-i repertoire and --elite-id)")
    traj = decode_genome(Genome(params), scene)
    noise = NoiseModel(seed=args.seed)
    outcome, trace = run_episode(traj, scene, noise, record_trace=True)
    lines = [
        json.dumps(
            {
                "event": "episode",
                "scene": scene.name,
                "close_step": traj.close_step,
                "energy": outcome.energy,
            },
            sort_keys=True,
        )
    ]
    for row in trace:
        lines.append(json.dumps(row, sort_keys=True))
    lines.append(
        json.dumps(
            {
                "event": "outcome",
                "success": outcome.success,
                "failure_reason": outcome.failure_reason,
                "epsilon": outcome.epsilon,
                "contacts": len(outcome.contacts),
                "object_final_pose": list(outcome.object_final_pose),
            },
            sort_keys=True,
        )
    )
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdgrasp", description=__doc__)
    p.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, scene=True, workers=True):
        if scene:
            sp.add_argument("--scene", help="built-in scene name or scene JSON path")
        sp.add_argument("--seed", type=int, default=0)
        if workers:
            sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("generate", help="run success-greedy MAP-Elites on a scene")
    add_common(sp)
    sp.add_argument("--budget", type=int, default=400_000)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--log", help="progress JSON-lines path")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("robustify", help="fitness-greedy mixture-DR stage from a repertoire")
    add_common(sp)
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--budget", type=int, default=20_000)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--log", help="progress JSON-lines path")
    sp.set_defaults(func=cmd_robustify)

    sp = sub.add_parser("score", help="write per-elite DR fitness CSV")
    add_common(sp)
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--variant", required=True, help="osdr | jsdr | fdr | mdr")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--all", action="store_true", help="score failed elites too")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("deploy", help="measure pseudo-real transfer ratios")
    add_common(sp)
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--domains", type=int, default=10)
    sp.add_argument("--severity", type=float, default=0.7)
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--all", action="store_true", help="deploy failed elites too")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_deploy)

    sp = sub.add_parser("analyze", help="correlation report from fitness and eta CSVs")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--eta", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("plot", help="render a transfer report as SVG")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--raw", action="store_true", help="include the raw scatter")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("trace", help="dump a per-step episode trace as JSON lines")
    add_common(sp, workers=False)
    sp.add_argument("--genome", help="comma-separated genome components in [0,1]")
    sp.add_argument("-i", "--input", help="repertoire file to read --elite-id from")
    sp.add_argument("--elite-id", type=int)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
            if not isinstance(defaults, dict):
                raise ConfigError(f"{args.config}: config must be a JSON object")
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: bad config file: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SceneError, FileNotFoundError, TransferError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, PlotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

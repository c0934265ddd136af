"""
Command-line entry point.

Examples::

    orbitune simulate --scenario A --out runs/a
    orbitune train --scenario A --iterations 300 --directions 8 --horizon 640 --workers 8
    orbitune campaign --scenario B --count 10 --gains 1.22 5.41 0.72 5.29 0.40
    orbitune stats --input runs/b/campaign_stats.json
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from .ars import TrainingError, train, write_training_log
from .controller import Gains
from .episode import EpisodeError
from .scenarios import (
    CampaignStats,
    load_spec,
    mean_gains,
    preset,
    read_stats_json,
    run_campaign,
    sample_initial_conditions,
    train_per_run,
    write_stats_json,
    write_tables,
)

log = logging.getLogger("orbitune")


def _resolve_spec(args):
    if args.scenario.upper() in ("A", "B"):
        spec = preset(args.scenario, args.ts_mode)
    else:
        spec = load_spec(args.scenario)
    ars = {}
    for flag, key in (("iterations", "M"), ("directions", "N"), ("stepsize", "alpha"), ("sigma", "sigma"), ("seed", "seed")):
        val = getattr(args, flag, None)
        if val is not None:
            ars[key] = val
    if ars:
        spec = dataclasses.replace(spec, ars=dataclasses.replace(spec.ars, **ars))
    sim = {}
    if getattr(args, "horizon", None) is not None:
        sim["H"] = args.horizon
    if getattr(args, "substeps", None) is not None:
        sim["substeps"] = args.substeps
    if sim:
        spec = dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, **sim))
    if getattr(args, "count", None) is not None or getattr(args, "seed", None) is not None:
        camp = spec.campaign
        changes = {}
        if getattr(args, "count", None) is not None:
            changes["count"] = args.count
        if args.seed is not None:
            changes["seed"] = args.seed
        spec = dataclasses.replace(spec, campaign=dataclasses.replace(camp, **changes))
    return spec


@contextmanager
def _pool(workers: int):
    if workers <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        yield ex.map


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2))


def cmd_simulate(args) -> int:
    spec = _resolve_spec(args)
    K = Gains(args.gains) if args.gains else Gains(spec.K1)
    out = _out_dir(args)
    try:
        res = spec.episode(K)
    except EpisodeError as exc:
        log.error("%s", exc)
        return 1
    res.write_csv(out / f"trajectory_{args.run_id}.csv")
    summary = {"scenario": spec.name, "K": list(K.K), **res.summary()}
    _write_json(out / f"summary_{args.run_id}.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_train(args) -> int:
    spec = _resolve_spec(args)
    out = _out_dir(args)
    t0 = time.time()

    def progress(lg):
        if lg.iter % args.log_every == 0 or lg.iter == spec.ars.M:
            log.info("iter %d  J=%.4f  sigmaJ=%.3g  K=%s", lg.iter, lg.Jnominal, lg.sigmaJ,
                     [round(k, 4) for k in lg.K])

    with _pool(args.workers) as map_fn:
        try:
            K, logs = train(
                spec.K1, spec.evaluator(), spec.ars, map_fn=map_fn,
                checkpoint_path=out / "checkpoint.json", resume=args.resume, callback=progress,
            )
        except TrainingError as exc:
            write_training_log(out / "training_log.csv", exc.logs)
            log.error("%s", exc)
            return 1
        write_training_log(out / "training_log.csv", logs)
        J1 = spec.episode(spec.K1).J
        best = spec.episode(K)
    best.write_csv(out / "trajectory_trained.csv")
    summary = {
        "scenario": spec.name,
        "K1": list(spec.K1),
        "Kstar": list(K.K),
        "J_K1": J1,
        "J_Kstar": best.J,
        "reduction_pct": 100 * (1 - best.J / J1),
        "wall_s": time.time() - t0,
    }
    _write_json(out / "gains.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_campaign(args) -> int:
    spec = _resolve_spec(args)
    out = _out_dir(args)
    ics = sample_initial_conditions(spec.campaign, spec)
    stats: list[CampaignStats] = []
    with _pool(args.workers) as map_fn:
        if args.gains:
            stats.append(run_campaign(spec, ics, Gains(args.gains), "K", map_fn=map_fn))
        else:
            if args.shared:
                K, _ = train(spec.K1, spec.evaluator(), spec.ars, map_fn=map_fn)
                trained = [K] * len(ics)
            else:
                trained = train_per_run(
                    spec, ics, map_fn=map_fn,
                    callback=lambda i, K, _: log.info("run %d trained: %s", i, [round(k, 4) for k in K.K]),
                )
            stats.append(run_campaign(spec, ics, trained, "K*", map_fn=map_fn))
            if spec.name == "B" or args.mean:
                stats.append(run_campaign(spec, ics, mean_gains(trained), "K_hat", map_fn=map_fn))
        if args.trajectories:
            for i, psi0 in enumerate(ics):
                for st in stats:
                    rec = st.runs[i]
                    if rec.ok:
                        spec.episode(rec.K, psi0).write_csv(out / f"trajectory_{st.label}_{i:03d}.csv")
    write_stats_json(out / "campaign_stats.json", spec.name, stats)
    write_tables(out / "tables.csv", stats, full_metrics=len(stats) == 1)
    _print_tables(stats)
    return 0


def cmd_stats(args) -> int:
    scenario, stats = read_stats_json(args.input)
    out = Path(args.out) if args.out else Path(args.input).parent
    out.mkdir(parents=True, exist_ok=True)
    write_tables(out / "tables.csv", stats, full_metrics=len(stats) == 1)
    _print_tables(stats)
    return 0


def _print_tables(stats) -> None:
    for st in stats:
        print(f"[{st.label}] runs={len(st.runs)} failed={len(st.failed)}")
        for metric in ("total_cost", "settling_time", "fuel"):
            agg = st.aggregate(metric)
            print(f"  {metric:14s} avg={agg['average']:7.2f}%  min={agg['minimum']:7.2f}%  max={agg['maximum']:7.2f}%")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orbitune", description=__doc__.splitlines()[1])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="A", help="A, B or a JSON scenario file")
    common.add_argument("--ts-mode", choices=("literal", "period"), default="literal")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", default="out")
    common.add_argument("--horizon", type=int, default=None, help="samples per episode")
    common.add_argument("--substeps", type=int, default=None, help="RK4 steps per sample")

    ars = argparse.ArgumentParser(add_help=False)
    ars.add_argument("--iterations", type=int, default=None)
    ars.add_argument("--directions", type=int, default=None)
    ars.add_argument("--stepsize", type=float, default=None)
    ars.add_argument("--sigma", type=float, default=None)

    p = sub.add_parser("simulate", parents=[common], help="run one episode")
    p.add_argument("--gains", type=float, nargs=5, default=None)
    p.add_argument("--run-id", default="nominal")
    p.set_defaults(func=cmd_simulate, count=None)

    p = sub.add_parser("train", parents=[common, ars], help="tune gains on the nominal episode")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=cmd_train, count=None)

    p = sub.add_parser("campaign", parents=[common, ars], help="random initial-condition campaign")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--gains", type=float, nargs=5, default=None, help="fixed comparison gains (no training)")
    p.add_argument("--shared", action="store_true", help="train once on the nominal chaser")
    p.add_argument("--mean", action="store_true", help="also evaluate the mean of trained gains")
    p.add_argument("--trajectories", action="store_true", help="write every trajectory CSV")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("stats", help="recompute tables from campaign_stats.json")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

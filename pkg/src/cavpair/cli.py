"""Command-line front end: ``cavpair <verb> --config FILE --out PATH``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from .charts import build_chart, penetration_curve, robust_gain_region, write_boundaries_csv
from .linear import linearize
from .metrics import UndefinedMetricError, fleet_metrics, seed_ensemble, write_ensemble_csv
from .models import EquilibriumError, LinearizationError
from .simulation import IntegrationError, simulate_fleet, simulate_packet

log = logging.getLogger("cavpair")


def _sidecar(path):
    return f"{path}.meta.json"


def cmd_simulate(cfg, out, seed=None, strict=False, jobs=1) -> int:
    mode = cfg["simulate"]["mode"]
    if mode == "fleet":
        sc = cfgmod.fleet_scenario(cfg, seed)
        traj = simulate_fleet(sc)
    else:
        traj = simulate_packet(cfgmod.packet_scenario(cfg))
    traj.to_csv(out)
    meta = replace(traj, metadata={**traj.metadata, "config": cfg})
    meta.write_metadata(_sidecar(out))
    status = 0
    if traj.collision:
        log.warning("collision: vehicles %s", list(traj.collided_vehicles))
        status = 3 if strict else 0
    try:
        m = fleet_metrics(traj)
        print(f"gamma_0={m.gamma_0:.6g} gamma_bar={m.gamma_bar:.6g}")
    except UndefinedMetricError as exc:
        log.warning("%s", exc)
        status = 3 if strict else status
    return status


def cmd_chart(cfg, out, seed=None, strict=False, jobs=1) -> int:
    os.makedirs(out, exist_ok=True)
    lin = linearize(cfgmod.chart_scenario(cfg))
    grid, curves = build_chart(lin, cfgmod.chart_spec(cfg))
    grid.to_csv(os.path.join(out, "verdicts.csv"))
    write_boundaries_csv(curves, os.path.join(out, "boundaries.csv"))
    print(f"stable cells: {grid.stable_count}")
    return 0


def cmd_penetration(cfg, out, seed=None, strict=False, jobs=1) -> int:
    pen = cfg["penetration"]
    curve = penetration_curve(pen["n_values"], cfgmod.chart_scenario(cfg),
                              cfgmod.chart_spec(cfg), tuple(pen["kappa_bounds"]),
                              pen["kappa_tol"])
    curve.to_csv(out)
    missing = int(np.isnan(curve.kappa_max).sum())
    if missing:
        log.warning("%d packet sizes have no stabilizing gains", missing)
    return 3 if strict and missing else 0


def cmd_ensemble(cfg, out, seed=None, strict=False, jobs=1) -> int:
    ens = cfg["ensemble"]
    tmpl = cfgmod.fleet_template(cfg)
    results = []
    for conn in ens["connectivity"]:
        for p in ens["penetrations"]:
            res = seed_ensemble(replace(tmpl, connectivity_enabled=conn), p, ens["n_seeds"], jobs)
            s = res.summary()
            log.info("p=%.2f conn=%d gamma_0=%.3f gamma_bar=%.3f", p, conn,
                     s["gamma_0_mean"], s["gamma_bar_mean"])
            results.append(res)
    write_ensemble_csv(results, out)
    collisions = sum(m.collisions for r in results for m in r.members)
    return 3 if strict and collisions else 0


def cmd_robust_region(cfg, out, seed=None, strict=False, jobs=1) -> int:
    spec = cfgmod.chart_spec(cfg)
    lins = [linearize(cfgmod.chart_scenario(cfg, n)) for n in cfg["robust_region"]["n_values"]]
    mask = robust_gain_region(lins, spec)
    with open(out, "w") as fh:
        fh.write("beta_head_cross\\beta_tail_cross," +
                 ",".join(f"{b:.10g}" for b in spec.beta_tail) + "\n")
        for bh, row in zip(spec.beta_head, mask):
            fh.write(f"{bh:.10g}," + ",".join(str(int(x)) for x in row) + "\n")
    print(f"robust cells: {int(mask.sum())}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "chart": cmd_chart,
    "penetration": cmd_penetration,
    "ensemble": cmd_ensemble,
    "robust-region": cmd_robust_region,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavpair", description=__doc__)
    ap.add_argument("verb", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config (defaults to the built-in case study)")
    ap.add_argument("--out", required=True, help="output file (directory for 'chart')")
    ap.add_argument("--seed", type=int, help="fleet seed for 'simulate'")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for ensembles")
    ap.add_argument("--strict", action="store_true",
                    help="exit nonzero on collisions or undefined metrics")
    ap.add_argument("--print-config", action="store_true",
                    help="print the merged canonical config before running")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = cfgmod.load(args.config)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(cfgmod.canonical(cfg))
    try:
        return COMMANDS[args.verb](cfg, args.out, seed=args.seed, strict=args.strict,
                                   jobs=args.jobs)
    except IntegrationError as exc:
        print(f"integration failed at t = {exc.time:g} s", file=sys.stderr)
        return 4
    except (EquilibriumError, LinearizationError, cfgmod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

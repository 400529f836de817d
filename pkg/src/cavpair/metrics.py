"""Peak speed-fluctuation ratios from simulated trajectories."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .simulation import FleetScenario, Trajectory, allocate_cavs, simulate_fleet


class UndefinedMetricError(ValueError):
    """The reference vehicle never leaves its initial speed."""


def _peak_fluctuation(v):
    return np.max(np.abs(v - v[0]), axis=0)


def gamma(trajectory: Trajectory, i: int, lead: int | None = None) -> float:
    """Peak deviation of vehicle ``i`` from its initial speed relative to the lead's.

    ``lead`` defaults to the trajectory's lead index; passing a follower
    index measures amplification relative to that vehicle instead.
    """
    lead = trajectory.lead_index if lead is None else lead
    ref = _peak_fluctuation(trajectory.speed(lead))
    if not ref > 0:
        raise UndefinedMetricError("reference speed is constant; gamma undefined")
    return float(_peak_fluctuation(trajectory.speed(i)) / ref)


@dataclass(frozen=True)
class FleetMetrics:
    gamma: np.ndarray
    gamma_bar: float
    h2t_stable: bool
    collision_flags: np.ndarray
    min_speeds: np.ndarray

    @property
    def gamma_0(self) -> float:
        return float(self.gamma[0])

    @property
    def collisions(self) -> int:
        return int(self.collision_flags.sum())


def fleet_metrics(trajectory: Trajectory) -> FleetMetrics:
    """Per-vehicle ratios against the lead, their mean and the tail verdict."""
    ref = _peak_fluctuation(trajectory.v_lead)
    if not ref > 0:
        raise UndefinedMetricError("lead speed is constant; gamma undefined")
    g = _peak_fluctuation(trajectory.v) / ref
    return FleetMetrics(
        gamma=g,
        gamma_bar=float(np.mean(g)),
        h2t_stable=bool(g[0] < 1.0),
        collision_flags=(trajectory.h < 0).any(axis=0),
        min_speeds=trajectory.v.min(axis=0),
    )


@dataclass(frozen=True)
class EnsembleResult:
    penetration: float
    connectivity: bool
    seeds: tuple
    members: tuple   # FleetMetrics per seed, same order as ``seeds``

    def _stat(self, attr):
        return np.array([getattr(m, attr) for m in self.members], dtype=float)

    @property
    def gamma_0(self):
        return self._stat("gamma_0")

    @property
    def gamma_bar(self):
        return self._stat("gamma_bar")

    def summary(self) -> dict:
        """Mean and sample standard deviation (zero for a single seed)."""
        out = {}
        for name, vals in (("gamma_0", self.gamma_0), ("gamma_bar", self.gamma_bar)):
            vals = np.sort(vals)
            out[f"{name}_mean"] = float(np.mean(vals))
            out[f"{name}_std"] = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        return out


def _member(template: FleetScenario, penetration: float, seed: int) -> FleetMetrics:
    cavs = allocate_cavs(template.n_vehicles, penetration, seed)
    return fleet_metrics(simulate_fleet(replace(template, cav_indices=cavs, rng_seed=seed)))


def seed_ensemble(template: FleetScenario, penetration: float, n_seeds: int = 20,
                  jobs: int = 1) -> EnsembleResult:
    """Run seeds ``1..n_seeds`` at one penetration level.

    Members may run in ``jobs`` worker processes; results are gathered in
    seed order, so the outcome does not depend on ``jobs``.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    seeds = tuple(range(1, n_seeds + 1))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            members = tuple(pool.map(_member, [template] * n_seeds,
                                     [penetration] * n_seeds, seeds))
    else:
        members = tuple(_member(template, penetration, s) for s in seeds)
    return EnsembleResult(penetration, template.connectivity_enabled, seeds, members)


def write_ensemble_csv(results, path):
    """Per-seed rows followed by ``mean`` and ``std`` summary rows per ensemble."""
    with open(path, "w") as fh:
        fh.write("seed,penetration,connectivity,gamma_0,gamma_bar,collisions\n")
        for res in results:
            conn = int(res.connectivity)
            for seed, m in zip(res.seeds, res.members):
                fh.write(f"{seed},{res.penetration:.6g},{conn},{m.gamma_0:.10g},"
                         f"{m.gamma_bar:.10g},{m.collisions}\n")
        for res in results:
            s = res.summary()
            conn = int(res.connectivity)
            coll = sum(m.collisions for m in res.members)
            fh.write(f"mean,{res.penetration:.6g},{conn},{s['gamma_0_mean']:.10g},"
                     f"{s['gamma_bar_mean']:.10g},{coll}\n")
            fh.write(f"std,{res.penetration:.6g},{conn},{s['gamma_0_std']:.10g},"
                     f"{s['gamma_bar_std']:.10g},{coll}\n")

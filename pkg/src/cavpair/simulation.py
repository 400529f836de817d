"""Nonlinear delayed car-following simulation of packets and fleets.

Vehicles are indexed from the back: index 0 is the last vehicle and the lead
sits at index ``M`` (one past the last follower).  In a packet this is the
tail CAV 0, human drivers 1..N, the head CAV N+1 and the lead N+2; in a fleet
of 100 vehicles the lead is vehicle 100.

Every follower's commanded acceleration is computed from the current state and
stored; the acceleration actually applied at time ``t`` is the command from
``t - delay``, read back from the stored history with cubic interpolation,
then saturated and passed through the reverse-motion guard.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .models import (
    HEAD_CAV, HUMAN, TAIL_CAV, V_STAR, CavParams, EquilibriumError, HvParams,
    cav_equilibrium_headway, hv_equilibrium_headway,
)

HV, AV, CAV_HEAD, CAV_TAIL, LEAD = "HV", "AV", "CAV-head", "CAV-tail", "lead"


class IntegrationError(RuntimeError):
    """The state became non-finite; ``time`` is the first bad sample time."""

    def __init__(self, time: float):
        super().__init__(f"non-finite state at t = {time:g} s")
        self.time = time


@dataclass(frozen=True)
class LeadProfile:
    """Lead-vehicle motion as constant-acceleration segments.

    ``segments`` is a sequence of ``(duration_s, acceleration)`` pairs; the
    speed holds after the last segment.
    """

    segments: tuple = ()
    v_init: float = V_STAR
    v_max: float = 30.0

    def __post_init__(self):
        segs = tuple((float(d), float(a)) for d, a in self.segments)
        object.__setattr__(self, "segments", segs)
        v = self.v_init
        if not 0.0 <= v <= self.v_max:
            raise ValueError("v_init must lie in [0, v_max]")
        for d, a in segs:
            if not d > 0:
                raise ValueError("segment durations must be positive")
            v += d * a
            if not -1e-9 <= v <= self.v_max + 1e-9:
                raise ValueError(f"lead speed {v:g} m/s leaves [0, {self.v_max:g}]")

    @property
    def breakpoints(self):
        t = np.concatenate([[0.0], np.cumsum([d for d, _ in self.segments])])
        v = np.concatenate([[self.v_init],
                            self.v_init + np.cumsum([d * a for d, a in self.segments])])
        return t, v

    @property
    def is_constant(self) -> bool:
        return all(a == 0 for _, a in self.segments)


def evaluate_lead(profile: LeadProfile, t):
    """Lead speed at time(s) ``t`` (vectorized), clamped to ``[0, v_max]``."""
    tb, vb = profile.breakpoints
    return np.clip(np.interp(t, tb, vb), 0.0, profile.v_max)


def canonical_lead(v_init: float = V_STAR) -> LeadProfile:
    """Brake at -1 m/s^2 for 2 s, hold for 2 s, recover at 1 m/s^2 for 2 s, cruise.

    The 2 m/s dip is small enough that human-driven traffic amplifies it
    several-fold before vehicles come to a stop.
    """
    return LeadProfile(((2.0, -1.0), (2.0, 0.0), (2.0, 1.0)), v_init)


def reverse_guard(u, v, alpha_v: float = 10.0):
    """Keep stopped vehicles from reversing: ``max(u, -alpha_v * v)``."""
    return np.maximum(u, -alpha_v * np.asarray(v))


@dataclass(frozen=True)
class PacketScenario:
    n_hv: int = 4
    cav_tail: CavParams = TAIL_CAV
    cav_head: CavParams = HEAD_CAV
    hv: HvParams = HUMAN
    v_star: float = V_STAR
    lead: LeadProfile = field(default_factory=canonical_lead)
    dt: float = 0.01
    horizon: float = 80.0
    alpha_v: float = 10.0
    sample_dt: float | None = None

    def __post_init__(self):
        if self.n_hv < 0:
            raise ValueError("n_hv must be non-negative")
        _check_timing(self, max(self.cav_tail.sigma, self.cav_head.sigma, self.hv.tau))


@dataclass(frozen=True)
class FleetScenario:
    """A single-lane fleet; ``cav_indices`` use the back-to-front numbering."""

    n_vehicles: int = 100
    cav_indices: frozenset = frozenset()
    rng_seed: int = 0
    pairing_max_gap: int = 7
    connectivity_enabled: bool = True
    cav_tail: CavParams = TAIL_CAV
    cav_head: CavParams = HEAD_CAV
    hv: HvParams = HUMAN
    v_star: float = V_STAR
    lead: LeadProfile = field(default_factory=canonical_lead)
    dt: float = 0.01
    horizon: float = 400.0
    alpha_v: float = 10.0
    sample_dt: float | None = 0.1

    def __post_init__(self):
        object.__setattr__(self, "cav_indices", frozenset(int(i) for i in self.cav_indices))
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles must be positive")
        if any(not 0 <= i < self.n_vehicles for i in self.cav_indices):
            raise ValueError("cav_indices must lie in [0, n_vehicles)")
        if self.pairing_max_gap < 1:
            raise ValueError("pairing_max_gap must be at least 1")
        _check_timing(self, max(self.cav_tail.sigma, self.cav_head.sigma, self.hv.tau))


def _check_timing(sc, max_delay):
    if not sc.dt > 0:
        raise ValueError("dt must be positive")
    if not sc.horizon > max_delay:
        raise ValueError("horizon must exceed the largest delay")
    if sc.sample_dt is not None and not sc.sample_dt >= sc.dt:
        raise ValueError("sample_dt must be at least dt")
    if not sc.alpha_v > 0:
        raise ValueError("alpha_v must be positive")


@dataclass(frozen=True)
class PairingAssignment:
    """``pairs`` holds ``(head, tail, n_between)``; indices refer to the input order."""

    pairs: tuple = ()
    singles: tuple = ()


def pair_cavs(roles, max_gap: int = 7) -> PairingAssignment:
    """Greedy head-to-tail pairing of CAVs.

    ``roles`` lists the vehicles from the front of the traffic to the back;
    entries equal to ``"CAV"`` are CAVs, anything else counts as a human
    driver.  A CAV pairs with the next CAV behind it when between one and
    ``max_gap`` human drivers separate them; otherwise it runs alone as ACC.
    """
    roles = list(roles)
    if not roles:
        raise ValueError("empty vehicle composition")
    cavs = [k for k, r in enumerate(roles) if r == "CAV"]
    pairs, singles = [], []
    j = 0
    while j < len(cavs):
        a = cavs[j]
        if j + 1 < len(cavs) and 1 <= cavs[j + 1] - a - 1 <= max_gap:
            pairs.append((a, cavs[j + 1], cavs[j + 1] - a - 1))
            j += 2
        else:
            singles.append(a)
            j += 1
    return PairingAssignment(tuple(pairs), tuple(singles))


def allocate_cavs(n_vehicles: int, penetration: float, rng_seed: int) -> frozenset:
    """Uniformly random CAV positions, ``round(penetration * n)`` of them."""
    if not 0.0 <= penetration <= 1.0:
        raise ValueError("penetration must lie in [0, 1]")
    k = int(math.floor(penetration * n_vehicles + 0.5))
    rng = np.random.default_rng(rng_seed)
    return frozenset(int(i) for i in rng.choice(n_vehicles, size=k, replace=False))


@dataclass(frozen=True)
class Trajectory:
    """Sampled headways, speeds and (undelayed, unsaturated) commands.

    Arrays have shape ``(T, M)`` for the ``M`` followers; the lead speed is
    kept separately and ``roles`` has ``M + 1`` entries, lead last.
    """

    times: np.ndarray
    h: np.ndarray
    v: np.ndarray
    u: np.ndarray
    v_lead: np.ndarray
    roles: tuple
    collision: bool
    pairing: PairingAssignment | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_followers(self) -> int:
        return self.v.shape[1]

    @property
    def lead_index(self) -> int:
        return self.n_followers

    def speed(self, i: int):
        return self.v_lead if i == self.lead_index else self.v[:, i]

    @property
    def collided_vehicles(self):
        return tuple(int(i) for i in np.flatnonzero((self.h < 0).any(axis=0)))

    def to_csv(self, path):
        m = self.n_followers
        cols = ["t"] + [f"{x}_{i}" for i in range(m) for x in ("h", "v", "u")] + ["v_lead"]
        data = np.empty((self.times.size, 3 * m + 2))
        data[:, 0] = self.times
        data[:, 1:-1:3], data[:, 2:-1:3], data[:, 3:-1:3] = self.h, self.v, self.u
        data[:, -1] = self.v_lead
        np.savetxt(path, data, fmt="%.12g", delimiter=",", header=",".join(cols), comments="")

    def write_metadata(self, path):
        meta = {
            "roles": list(self.roles),
            "lead_index": self.lead_index,
            "collision": self.collision,
            "collided_vehicles": list(self.collided_vehicles),
            "pairing": None if self.pairing is None else {
                "pairs": [list(p) for p in self.pairing.pairs],
                "singles": list(self.pairing.singles),
            },
            **self.metadata,
        }
        with open(path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


@njit(cache=True)
def _command(i, h, v, vlead, kind, alpha, beta, bcross, partner, h_st, h_go, v_max):
    m = v.shape[0]
    vp = vlead if i == m - 1 else v[i + 1]
    x = (h[i] - h_st[i]) / (h_go[i] - h_st[i])
    x = min(max(x, 0.0), 1.0)
    if kind[i] == 0:
        return alpha[i] * (v_max[i] * x * (2.0 - x) - v[i]) + beta[i] * (vp - v[i])
    u = alpha[i] * (v_max[i] * x - v[i]) + beta[i] * (min(vp, v_max[i]) - v[i])
    j = partner[i]
    if j >= 0:
        u += bcross[i] * (min(v[j], v_max[i]) - v[i])
    return u


@njit(cache=True)
def _rhs(h, v, vlead, c, k, u_hist, dsteps, kind, alpha, beta, bcross, partner,
         h_st, h_go, v_max, a_min, a_max, alpha_v, dh, dv):
    m = v.shape[0]
    for i in range(m):
        if dsteps[i] == 0.0:
            u = _command(i, h, v, vlead, kind, alpha, beta, bcross, partner, h_st, h_go, v_max)
        else:
            pos = k + c - dsteps[i]
            base = min(int(math.floor(pos)), k - 2)
            f = pos - base
            u = (-f * (f - 1.0) * (f - 2.0) / 6.0 * u_hist[base - 1, i]
                 + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * u_hist[base, i]
                 - (f + 1.0) * f * (f - 2.0) / 2.0 * u_hist[base + 1, i]
                 + (f + 1.0) * f * (f - 1.0) / 6.0 * u_hist[base + 2, i])
        u = min(max(-a_min[i], u), a_max[i])
        dv[i] = max(u, -alpha_v * v[i])
        dh[i] = (vlead if i == m - 1 else v[i + 1]) - v[i]


@njit(cache=True)
def _integrate(h0, v0, lead_half, dt, n_steps, every, dsteps, kind, alpha, beta, bcross,
               partner, h_st, h_go, v_max, a_min, a_max, alpha_v, out_h, out_v, out_u):
    m = h0.shape[0]
    lag = int(math.ceil(dsteps.max())) + 4
    u_hist = np.empty((lag + n_steps + 1, m))
    h = h0.copy()
    v = v0.copy()
    for i in range(m):
        u0 = _command(i, h, v, lead_half[0], kind, alpha, beta, bcross, partner, h_st, h_go, v_max)
        if not math.isfinite(u0):
            return 0
        u_hist[:lag + 1, i] = u0
    out_h[0], out_v[0], out_u[0] = h, v, u_hist[lag]
    dh1, dv1 = np.empty(m), np.empty(m)
    dh2, dv2 = np.empty(m), np.empty(m)
    dh3, dv3 = np.empty(m), np.empty(m)
    dh4, dv4 = np.empty(m), np.empty(m)
    args = (dsteps, kind, alpha, beta, bcross, partner, h_st, h_go, v_max, a_min, a_max, alpha_v)
    for step in range(n_steps):
        k = lag + step
        l0, lh, l1 = lead_half[2 * step], lead_half[2 * step + 1], lead_half[2 * step + 2]
        _rhs(h, v, l0, 0.0, k, u_hist, *args, dh1, dv1)
        _rhs(h + 0.5 * dt * dh1, v + 0.5 * dt * dv1, lh, 0.5, k, u_hist, *args, dh2, dv2)
        _rhs(h + 0.5 * dt * dh2, v + 0.5 * dt * dv2, lh, 0.5, k, u_hist, *args, dh3, dv3)
        _rhs(h + dt * dh3, v + dt * dv3, l1, 1.0, k, u_hist, *args, dh4, dv4)
        h = h + dt / 6.0 * (dh1 + 2.0 * dh2 + 2.0 * dh3 + dh4)
        v = v + dt / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
        for i in range(m):
            u_hist[k + 1, i] = _command(i, h, v, l1, kind, alpha, beta, bcross, partner,
                                        h_st, h_go, v_max)
            # saturation would hide a NaN command, so commands are checked too
            if not (math.isfinite(h[i]) and math.isfinite(v[i])
                    and math.isfinite(u_hist[k + 1, i])):
                return step + 1
        if (step + 1) % every == 0:
            r = (step + 1) // every
            out_h[r], out_v[r], out_u[r] = h, v, u_hist[k + 1]
    return -1


@dataclass(frozen=True)
class _Vehicle:
    role: str
    params: object
    partner: int = -1


def _run(vehicles, lead: LeadProfile, v_star, dt, horizon, alpha_v, sample_dt,
         pairing=None, metadata=None) -> Trajectory:
    m = len(vehicles)
    for veh in vehicles:
        if not 0.0 < v_star < veh.params.limits.v_max:
            raise EquilibriumError(f"v_star={v_star!r} has no interior equilibrium")
    n_steps = int(round(horizon / dt))
    every = 1 if sample_dt is None else max(1, int(round(sample_dt / dt)))
    n_out = n_steps // every + 1

    kind = np.zeros(m, dtype=np.int64)
    arrays = {k: np.zeros(m) for k in
              ("alpha", "beta", "bcross", "h_st", "h_go", "v_max", "a_min", "a_max", "delay", "h0")}
    partner = np.full(m, -1, dtype=np.int64)
    for i, veh in enumerate(vehicles):
        p, lim = veh.params, veh.params.limits
        arrays["h_st"][i], arrays["v_max"][i] = lim.h_st, lim.v_max
        arrays["a_min"][i], arrays["a_max"][i] = lim.a_min, lim.a_max
        if veh.role == HV:
            arrays["alpha"][i], arrays["beta"][i] = p.alpha_h, p.beta_h
            arrays["h_go"][i], arrays["delay"][i] = p.h_go_h, p.tau
            arrays["h0"][i] = hv_equilibrium_headway(v_star, p)
        else:
            kind[i] = 1
            arrays["alpha"][i], arrays["beta"][i] = p.alpha, p.beta
            arrays["h_go"][i], arrays["delay"][i] = p.h_go, p.sigma
            arrays["h0"][i] = cav_equilibrium_headway(v_star, p)
            if veh.partner >= 0:
                arrays["bcross"][i] = p.beta_cross
                partner[i] = veh.partner

    lead_half = evaluate_lead(lead, np.arange(2 * n_steps + 1) * (dt / 2))
    out_h, out_v, out_u = (np.empty((n_out, m)) for _ in range(3))
    status = _integrate(arrays["h0"], np.full(m, float(v_star)), lead_half, dt, n_steps, every,
                        arrays["delay"] / dt, kind, arrays["alpha"], arrays["beta"],
                        arrays["bcross"], partner, arrays["h_st"], arrays["h_go"],
                        arrays["v_max"], arrays["a_min"], arrays["a_max"], float(alpha_v),
                        out_h, out_v, out_u)
    if status >= 0:
        raise IntegrationError(status * dt)
    times = np.arange(n_out) * every * dt
    roles = tuple(v.role for v in vehicles) + (LEAD,)
    return Trajectory(times, out_h, out_v, out_u, lead_half[::2 * every][:n_out], roles,
                      bool((out_h < 0).any()), pairing, metadata or {})


def simulate_packet(scenario: PacketScenario) -> Trajectory:
    """Tail CAV, ``n_hv`` human drivers and the head CAV behind the lead.

    The two CAVs exchange speeds only if their cross gains are nonzero; with
    both gains zero the packet is an ACC-HV-ACC string.
    """
    n = scenario.n_hv
    vehicles = ([_Vehicle(CAV_TAIL, scenario.cav_tail, n + 1)]
                + [_Vehicle(HV, scenario.hv)] * n
                + [_Vehicle(CAV_HEAD, scenario.cav_head, 0)])
    return _run(vehicles, scenario.lead, scenario.v_star, scenario.dt, scenario.horizon,
                scenario.alpha_v, scenario.sample_dt,
                metadata={"kind": "packet", "n_hv": n})


def fleet_pairing(scenario: FleetScenario) -> PairingAssignment:
    """Pairing in vehicle indices (all CAVs single when connectivity is off)."""
    n = scenario.n_vehicles
    front_to_back = list(range(n - 1, -1, -1))
    if not scenario.connectivity_enabled:
        return PairingAssignment((), tuple(sorted(scenario.cav_indices, reverse=True)))
    roles = ["CAV" if i in scenario.cav_indices else "HV" for i in front_to_back]
    pa = pair_cavs(roles, scenario.pairing_max_gap)
    return PairingAssignment(
        tuple((front_to_back[a], front_to_back[b], k) for a, b, k in pa.pairs),
        tuple(front_to_back[a] for a in pa.singles))


def simulate_fleet(scenario: FleetScenario) -> Trajectory:
    """Simulate a mixed fleet; the pairing is attached to the trajectory."""
    pairing = fleet_pairing(scenario)
    acc = replace(scenario.cav_tail, beta_cross=0.0)
    vehicles = [_Vehicle(HV, scenario.hv)] * scenario.n_vehicles
    for head, tail, _ in pairing.pairs:
        vehicles[head] = _Vehicle(CAV_HEAD, scenario.cav_head, tail)
        vehicles[tail] = _Vehicle(CAV_TAIL, scenario.cav_tail, head)
    for i in pairing.singles:
        vehicles[i] = _Vehicle(AV, acc)
    meta = {"kind": "fleet", "n_vehicles": scenario.n_vehicles, "rng_seed": scenario.rng_seed,
            "connectivity_enabled": scenario.connectivity_enabled,
            "cav_indices": sorted(scenario.cav_indices)}
    return _run(vehicles, scenario.lead, scenario.v_star, scenario.dt, scenario.horizon,
                scenario.alpha_v, scenario.sample_dt, pairing, meta)


def scenario_dict(scenario) -> dict:
    """Plain-data view of a scenario (for metadata sidecars)."""
    d = asdict(scenario)
    if "cav_indices" in d:
        d["cav_indices"] = sorted(d["cav_indices"])
    return d

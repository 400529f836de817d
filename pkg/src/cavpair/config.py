"""JSON scenario configuration with the numerical case-study values as defaults.

A config file is a JSON object that overrides any subset of :data:`DEFAULTS`.
Unknown keys are errors.  :func:`canonical` renders a merged config in a
stable form (sorted keys, fixed indentation), so parsing the canonical text
again yields the same text.
"""
from __future__ import annotations

import copy
import json
from dataclasses import replace

from .charts import ChartSpec
from .models import CavParams, HvParams, VehicleLimits
from .simulation import FleetScenario, LeadProfile, PacketScenario, allocate_cavs

SCHEMA = "cavpair-config/1"

DEFAULTS = {
    "schema": SCHEMA,
    "limits": {"a_min": 7.0, "a_max": 3.0, "v_max": 30.0, "h_st": 10.0},
    "cav_tail": {"sigma": 0.6, "h_go": 60.0, "alpha": 0.4, "beta": 0.5, "beta_cross": 0.8},
    "cav_head": {"sigma": 0.6, "h_go": 60.0, "alpha": 0.4, "beta": 0.5, "beta_cross": 0.1},
    "hv": {"tau": 0.8, "h_go_h": 60.0, "alpha_h": 0.1, "beta_h": 0.6},
    "v_star": 20.0,
    "lead": {"v_init": 20.0, "segments": [[2.0, -1.0], [2.0, 0.0], [2.0, 1.0]]},
    "packet": {"n_hv": 5, "dt": 0.01, "horizon": 80.0, "alpha_v": 10.0, "sample_dt": None},
    "fleet": {"n_vehicles": 100, "penetration": 0.1, "seed": 1, "pairing_max_gap": 7,
              "connectivity": True, "dt": 0.01, "horizon": 400.0, "alpha_v": 10.0,
              "sample_dt": 0.1},
    "simulate": {"mode": "packet"},
    "chart": {"n_hv": 4, "tail_range": [-0.5, 2.0], "head_range": [-0.5, 2.0],
              "n_tail": 151, "n_head": 151, "kappa_head": None},
    "penetration": {"n_values": list(range(0, 19)), "kappa_bounds": [0.05, 3.0],
                    "kappa_tol": 1e-3},
    "ensemble": {"penetrations": [round(0.05 * k, 2) for k in range(21)], "n_seeds": 20,
                 "connectivity": [True, False]},
    "robust_region": {"n_values": [4, 5, 6, 7]},
}


class ConfigError(ValueError):
    """Malformed or invalid configuration; the message names the key or line."""


def _merge(base, override, path):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = _merge(base[key], val, where)
        else:
            _check_type(base[key], val, where)
            out[key] = val
    return out


def _is_number(val):
    return isinstance(val, (int, float)) and not isinstance(val, bool)


def _check_type(default, val, where):
    if isinstance(default, bool):
        ok = isinstance(val, bool)
    elif isinstance(default, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(default, float):
        ok = _is_number(val)
    elif default is None:
        ok = val is None or _is_number(val)
    elif isinstance(default, list):
        ok = isinstance(val, list)
    else:
        ok = isinstance(val, type(default))
    if not ok:
        raise ConfigError(f"'{where}' has the wrong type ({type(val).__name__})")


def parse(text: str) -> dict:
    """Parse JSON text and merge it over the defaults."""
    try:
        user = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(user, dict):
        raise ConfigError("top level must be a JSON object")
    if user.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"unsupported schema {user['schema']!r} (expected {SCHEMA!r})")
    cfg = _merge(DEFAULTS, user, "")
    validate(cfg)
    return cfg


def load(path) -> dict:
    if path is None:
        return parse("")
    with open(path) as fh:
        return parse(fh.read())


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def _wrap(where, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def limits(cfg) -> VehicleLimits:
    return _wrap("limits", VehicleLimits, **cfg["limits"])


def cav_params(cfg, which: str) -> CavParams:
    return _wrap(which, CavParams, limits=limits(cfg), **cfg[which])


def hv_params(cfg) -> HvParams:
    return _wrap("hv", HvParams, limits=limits(cfg), **cfg["hv"])


def lead_profile(cfg) -> LeadProfile:
    lead = cfg["lead"]
    return _wrap("lead", LeadProfile, tuple(map(tuple, lead["segments"])), lead["v_init"],
                 cfg["limits"]["v_max"])


def packet_scenario(cfg, n_hv: int | None = None) -> PacketScenario:
    pk = cfg["packet"]
    return _wrap("packet", PacketScenario,
                 n_hv=pk["n_hv"] if n_hv is None else n_hv,
                 cav_tail=cav_params(cfg, "cav_tail"), cav_head=cav_params(cfg, "cav_head"),
                 hv=hv_params(cfg), v_star=cfg["v_star"], lead=lead_profile(cfg),
                 dt=pk["dt"], horizon=pk["horizon"], alpha_v=pk["alpha_v"],
                 sample_dt=pk["sample_dt"])


def fleet_template(cfg) -> FleetScenario:
    fl = cfg["fleet"]
    return _wrap("fleet", FleetScenario,
                 n_vehicles=fl["n_vehicles"], pairing_max_gap=fl["pairing_max_gap"],
                 connectivity_enabled=fl["connectivity"],
                 cav_tail=cav_params(cfg, "cav_tail"), cav_head=cav_params(cfg, "cav_head"),
                 hv=hv_params(cfg), v_star=cfg["v_star"], lead=lead_profile(cfg),
                 dt=fl["dt"], horizon=fl["horizon"], alpha_v=fl["alpha_v"],
                 sample_dt=fl["sample_dt"])


def fleet_scenario(cfg, seed: int | None = None) -> FleetScenario:
    fl = cfg["fleet"]
    seed = fl["seed"] if seed is None else seed
    tmpl = fleet_template(cfg)
    cavs = _wrap("fleet", allocate_cavs, tmpl.n_vehicles, fl["penetration"], seed)
    return replace(tmpl, cav_indices=cavs, rng_seed=seed)


def chart_scenario(cfg, n_hv: int | None = None) -> PacketScenario:
    ch = cfg["chart"]
    sc = packet_scenario(cfg, ch["n_hv"] if n_hv is None else n_hv)
    if ch["kappa_head"] is not None:
        sc = replace(sc, cav_head=_wrap("chart.kappa_head", sc.cav_head.with_kappa,
                                        ch["kappa_head"]))
    return sc


def chart_spec(cfg) -> ChartSpec:
    ch = cfg["chart"]
    return _wrap("chart", ChartSpec, tuple(ch["tail_range"]), tuple(ch["head_range"]),
                 ch["n_tail"], ch["n_head"])


def validate(cfg):
    """Build every object the config describes so errors surface at load time."""
    packet_scenario(cfg)
    fleet_scenario(cfg)
    chart_scenario(cfg)
    chart_spec(cfg)
    if cfg["simulate"]["mode"] not in ("packet", "fleet"):
        raise ConfigError("simulate.mode must be 'packet' or 'fleet'")
    for key in ("n_values",):
        for sec in ("penetration", "robust_region"):
            vals = cfg[sec][key]
            if not vals:
                raise ConfigError(f"{sec}.{key} must not be empty")
            if any(not isinstance(n, int) or isinstance(n, bool) or n < 0 for n in vals):
                raise ConfigError(f"{sec}.{key} must hold non-negative integers")
    lo, hi = cfg["penetration"]["kappa_bounds"]
    if not 0 < lo < hi:
        raise ConfigError("penetration.kappa_bounds must satisfy 0 < lo < hi")
    ens = cfg["ensemble"]
    if ens["n_seeds"] < 1:
        raise ConfigError("ensemble.n_seeds must be at least 1")
    if any(not 0 <= p <= 1 for p in ens["penetrations"]):
        raise ConfigError("ensemble.penetrations must lie in [0, 1]")

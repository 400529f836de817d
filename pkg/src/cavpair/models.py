"""Vehicle parameter sets, nonlinear policies and the equilibrium of a packet.

Vehicles follow the packet numbering used throughout the package: index 0 is
the tail CAV, 1..N are human-driven vehicles, N+1 is the head CAV and N+2 the
lead vehicle.  All policy functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class EquilibriumError(ValueError):
    """No interior equilibrium exists for the requested speed."""


class LinearizationError(ValueError):
    """The equilibrium sits on a saturated branch of a range policy."""


@dataclass(frozen=True)
class VehicleLimits:
    """Actuation and geometry limits shared by every vehicle class.

    ``a_min`` is a positive magnitude; the braking limit is ``-a_min``.
    """

    a_min: float = 7.0
    a_max: float = 3.0
    v_max: float = 30.0
    h_st: float = 10.0

    def __post_init__(self):
        if not (self.a_min > 0 and self.a_max > 0 and self.v_max > 0):
            raise ValueError("a_min, a_max and v_max must be positive")
        if not self.h_st >= 0:
            raise ValueError("h_st must be non-negative")


@dataclass(frozen=True)
class CavParams:
    """Controller of one CAV of a pair.

    ``beta_cross`` is the gain on the partner CAV's speed (the tail's gain on
    the head, or the head's gain on the tail).  Zero gives plain ACC.  Gains
    may be negative so that the whole gain plane can be scanned.
    """

    sigma: float = 0.6
    h_go: float = 60.0
    alpha: float = 0.4
    beta: float = 0.5
    beta_cross: float = 0.0
    limits: VehicleLimits = field(default_factory=VehicleLimits)

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if not self.h_go > self.limits.h_st:
            raise ValueError("h_go must exceed the standstill headway")
        for name in ("alpha", "beta", "beta_cross"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def kappa(self) -> float:
        """Gradient of the piecewise-linear range policy on its middle branch."""
        return self.limits.v_max / (self.h_go - self.limits.h_st)

    def with_kappa(self, kappa: float) -> CavParams:
        """Copy with ``h_go`` moved so that the range-policy gradient is ``kappa``."""
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        return replace(self, h_go=self.limits.h_st + self.limits.v_max / kappa)


@dataclass(frozen=True)
class HvParams:
    """Optimal velocity model of a human driver."""

    tau: float = 0.8
    h_go_h: float = 60.0
    alpha_h: float = 0.1
    beta_h: float = 0.6
    limits: VehicleLimits = field(default_factory=VehicleLimits)

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if not self.h_go_h > self.limits.h_st:
            raise ValueError("h_go_h must exceed the standstill headway")
        if not (self.alpha_h >= 0 and self.beta_h >= 0):
            raise ValueError("alpha_h and beta_h must be non-negative")


@dataclass(frozen=True)
class Equilibrium:
    v_star: float
    h_star_tail: float
    h_star_head: float
    h_star_hv: float
    kappa_tail: float
    kappa_head: float
    kappa_hv: float


# Numerical case study defaults.
V_STAR = 20.0
TAIL_CAV = CavParams(beta_cross=0.8)
HEAD_CAV = CavParams(beta_cross=0.1)
HUMAN = HvParams()


def saturate(u, limits: VehicleLimits):
    """Clip a commanded acceleration to ``[-a_min, a_max]``."""
    return np.minimum(np.maximum(-limits.a_min, u), limits.a_max)


def range_policy_cav(h, params: CavParams):
    """Desired speed of a CAV for headway ``h`` (piecewise linear)."""
    lim = params.limits
    x = np.clip((np.asarray(h, dtype=float) - lim.h_st) / (params.h_go - lim.h_st), 0.0, 1.0)
    return lim.v_max * x


def range_policy_hv(h, params: HvParams):
    """Desired speed of a human driver for headway ``h`` (piecewise quadratic).

    On the middle branch ``v_max * (2 h_go - h_st - h)(h - h_st) / (h_go - h_st)^2``,
    written here in the normalized form ``v_max * x (2 - x)``.
    """
    lim = params.limits
    x = np.clip((np.asarray(h, dtype=float) - lim.h_st) / (params.h_go_h - lim.h_st), 0.0, 1.0)
    return lim.v_max * x * (2.0 - x)


def speed_policy_w(v, v_max: float):
    return np.minimum(v, v_max)


def cav_control(h_own, v_own, v_pred, v_partner, params: CavParams):
    """Undelayed, unsaturated command of a CAV.

    The ego speed enters without the speed policy; only the predecessor and
    partner speeds are passed through ``W``.
    """
    v_max = params.limits.v_max
    return (params.alpha * (range_policy_cav(h_own, params) - v_own)
            + params.beta * (speed_policy_w(v_pred, v_max) - v_own)
            + params.beta_cross * (speed_policy_w(v_partner, v_max) - v_own))


def hv_control(h, v, v_pred, params: HvParams):
    return params.alpha_h * (range_policy_hv(h, params) - v) + params.beta_h * (v_pred - v)


def range_gradient(which: str, h_star: float, params) -> float:
    """Slope of the range policy at an equilibrium headway.

    Parameters
    ----------
    which : {"cav_tail", "cav_head", "hv"}
        Vehicle class; ``params`` must be a :class:`CavParams` for the CAV
        kinds and an :class:`HvParams` for ``"hv"``.
    h_star : float
        Equilibrium headway in metres.

    Raises
    ------
    LinearizationError
        If ``h_star`` is not strictly inside ``(h_st, h_go)``, where the
        gradient vanishes (or is undefined) and the linear analysis breaks.
    """
    lim = params.limits
    if which in ("cav_tail", "cav_head"):
        h_go = params.h_go
    elif which == "hv":
        h_go = params.h_go_h
    else:
        raise ValueError(f"unknown vehicle kind {which!r}")
    if not lim.h_st < h_star < h_go:
        raise LinearizationError(
            f"{which} headway {h_star:g} m is outside ({lim.h_st:g}, {h_go:g}); "
            "range-policy gradient is zero there")
    if which == "hv":
        return 2.0 * lim.v_max * (h_go - h_star) / (h_go - lim.h_st) ** 2
    return lim.v_max / (h_go - lim.h_st)


def cav_equilibrium_headway(v_star: float, params: CavParams) -> float:
    return v_star / params.kappa + params.limits.h_st


def hv_equilibrium_headway(v_star: float, params: HvParams) -> float:
    # smaller root of x (2 - x) = v*/v_max on the rising side of the parabola
    lim = params.limits
    x = 1.0 - math.sqrt(1.0 - v_star / lim.v_max)
    return lim.h_st + x * (params.h_go_h - lim.h_st)


def compute_equilibrium(v_star: float, cav_tail: CavParams, cav_head: CavParams,
                        hv: HvParams) -> Equilibrium:
    """Uniform-flow equilibrium of a packet travelling at ``v_star``.

    Range-policy gradients are always derived from the equilibrium headways,
    so the human-driver gradient follows from ``v_star`` rather than being an
    independent input.
    """
    for p in (cav_tail, cav_head, hv):
        if not 0.0 < v_star < p.limits.v_max:
            raise EquilibriumError(
                f"v_star={v_star!r} has no interior equilibrium "
                f"(need 0 < v_star < {p.limits.v_max:g})")
    h_tail = cav_equilibrium_headway(v_star, cav_tail)
    h_head = cav_equilibrium_headway(v_star, cav_head)
    h_hv = hv_equilibrium_headway(v_star, hv)
    return Equilibrium(
        v_star=v_star,
        h_star_tail=h_tail,
        h_star_head=h_head,
        h_star_hv=h_hv,
        kappa_tail=range_gradient("cav_tail", h_tail, cav_tail),
        kappa_head=range_gradient("cav_head", h_head, cav_head),
        kappa_hv=range_gradient("hv", h_hv, hv),
    )

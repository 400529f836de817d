"""Stability charts in the plane of the two cross gains.

Region membership is always decided by direct tests (argument principle for
plant stability, frequency sweep plus the low-frequency limit for string
stability).  The closed-form boundary curves are produced for plotting and
for cross-validation against those tests.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .linear import (
    LinearizedPacket, POLE_TOL, contour_path, default_omega_grid, hv_chain, hv_factor, linearize,
    numerator_terms, p_at_zero, plant_stability_test, quasi_polynomial_terms,
    string_stability_margin,
)
from .models import compute_equilibrium

log = logging.getLogger(__name__)

PLANT_UNSTABLE = "plant_unstable"
STRING_UNSTABLE = "plant_stable_string_unstable"
STABLE = "plant_and_string_stable"
VERDICTS = (PLANT_UNSTABLE, STRING_UNSTABLE, STABLE)

# boundary points farther out than this are dropped (curve break)
MAX_ABS_GAIN = 50.0


@dataclass(frozen=True)
class BoundaryCurve:
    """Polyline in the ``(beta_cross_tail, beta_cross_head)`` plane.

    ``points`` has shape ``(n, 2)`` with NaN rows at curve breaks.  ``params``
    holds the curve parameter per point: ``Omega`` for the Hopf curve,
    ``beta_cross_head`` for the low-frequency line and ``(omega, K)`` for the
    finite-frequency string boundaries.
    """

    kind: str
    points: np.ndarray
    params: np.ndarray
    coefficients: dict = field(default_factory=dict, repr=False)
    wave_number: float | None = None

    @property
    def label(self) -> str:
        if self.wave_number is None:
            return self.kind
        return f"{self.kind}:K={self.wave_number:.6f}"


def _hopf_coefficients(lin: LinearizedPacket, omega):
    w = np.asarray(omega, dtype=float)
    t, h = lin.tail, lin.head
    S, C = np.sin(w * lin.sigma), np.cos(w * lin.sigma)
    chain = hv_chain(1j * w, lin)
    gr, gi = chain.real, chain.imag
    w1 = w * lin.beta_tail * gr + t.xi * gi
    w2 = w * lin.beta_tail * gi - t.xi * gr
    return {
        "p1": w**3 * S - w**2 * h.eta,
        "q1": w**3 * S + w * (w1 - w * t.eta),
        "r1": (w**4 * (C**2 - S**2) + w**3 * (h.eta + t.eta) * S
               - w**2 * (h.xi + t.xi) * C - w**2 * h.eta * t.eta + h.xi * t.xi),
        "w1": w1,
        "p2": -w**3 * C + w * h.xi,
        "q2": -w**3 * C + w * (w2 + t.xi),
        "r2": (2 * w**4 * S * C - w**3 * (h.eta + t.eta) * C
               - w**2 * (h.xi + t.xi) * S + w * (t.xi * h.eta + h.xi * t.eta)),
        "w2": w2,
    }


def _solve_pairs(p1, q1, r1, p2, q2, r2):
    det = p2 * q1 - p1 * q2
    scale = np.abs(p2 * q1) + np.abs(p1 * q2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = (q2 * r1 - q1 * r2) / det
        head = (p1 * r2 - p2 * r1) / det
    bad = (np.abs(det) <= 1e-12 * scale) | ~np.isfinite(tail) | ~np.isfinite(head)
    bad |= (np.abs(tail) > MAX_ABS_GAIN) | (np.abs(head) > MAX_ABS_GAIN)
    pts = np.column_stack([tail, head])
    pts[bad] = np.nan
    return pts


def hopf_boundary(lin: LinearizedPacket, omega):
    """Cross gains putting a root pair at ``s = +/- j Omega``.

    Vectorized over ``omega``; rows where the 2x2 system is singular (or the
    gains leave the plotting range) are NaN.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega <= 0):
        raise ValueError("Omega must be positive")
    c = _hopf_coefficients(lin, omega)
    return _solve_pairs(c["p1"], c["q1"], c["r1"], c["p2"], c["q2"], c["r2"])


def hopf_curve(lin: LinearizedPacket, omega_max: float = 5.0, n: int = 2000) -> BoundaryCurve:
    omega = np.linspace(omega_max / n, omega_max, n)
    return BoundaryCurve("hopf", hopf_boundary(lin, omega), omega,
                         _hopf_coefficients(lin, omega))


@dataclass(frozen=True)
class ZeroFrequencyLine:
    """``p * beta_cross_tail + q * beta_cross_head + r = 0`` (where ``P(0) = 0``)."""

    p: float
    q: float
    r: float

    @property
    def slope(self) -> float:
        return -self.q / self.p

    def beta_tail(self, beta_head):
        return -(self.q * np.asarray(beta_head) + self.r) / self.p


def string_boundary_zero(lin: LinearizedPacket) -> ZeroFrequencyLine:
    t, h, hv = lin.tail, lin.head, lin.hv
    n = lin.n_hv
    p = 2 * h.xi**2 * lin.alpha_tail * (1 + n * lin.kappa_tail / lin.kappa_hv)
    if p == 0:
        raise ValueError("degenerate zero-frequency boundary (xi_head or alpha_tail is zero)")
    q = -p * t.xi / h.xi
    r = (h.xi**2 * t.xi**2 / hv.xi**2 * n * lin.alpha_hv * hv.zeta
         + h.xi**2 * lin.alpha_tail * t.zeta + t.xi**2 * lin.alpha_head * h.zeta)
    return ZeroFrequencyLine(p, q, r)


def string_zero_curve(lin: LinearizedPacket, head_range=(-0.5, 2.0), n: int = 200) -> BoundaryCurve:
    line = string_boundary_zero(lin)
    bh = np.linspace(*head_range, n)
    pts = np.column_stack([line.beta_tail(bh), bh])
    return BoundaryCurve("string_zero", pts, bh, {"p": line.p, "q": line.q, "r": line.r})


def _family_coefficients(lin: LinearizedPacket, omega, K):
    c = _hopf_coefficients(lin, omega)
    w = np.asarray(omega, dtype=float)
    bh, xh = lin.beta_head, lin.head.xi
    cK, sK = np.cos(K), np.sin(K)
    m1 = w * bh * c["w1"] + xh * c["w2"]
    m2 = w * bh * c["w2"] - xh * c["w1"]
    c.update({
        "p1'": w**2 * bh * cK + w * xh * sK + c["p1"],
        "r1'": m1 * cK - m2 * sK + c["r1"],
        "p2'": w**2 * bh * sK - w * xh * cK + c["p2"],
        "r2'": m1 * sK + m2 * cK + c["r2"],
    })
    return c


def string_boundary_family(lin: LinearizedPacket, omega, K: float):
    """Cross gains for which ``G(j omega) = exp(-j K)``; vectorized over ``omega``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega <= 0):
        raise ValueError("omega must be positive")
    c = _family_coefficients(lin, omega, K)
    return _solve_pairs(c["p1'"], c["q1"], c["r1'"], c["p2'"], c["q2"], c["r2'"])


def string_family_curves(lin: LinearizedPacket, omega_max: float = 5.0, n_omega: int = 1000,
                         n_k: int = 64) -> list[BoundaryCurve]:
    omega = np.linspace(omega_max / n_omega, omega_max, n_omega)
    curves = []
    for K in 2 * np.pi * np.arange(n_k) / n_k:
        c = _family_coefficients(lin, omega, K)
        pts = _solve_pairs(c["p1'"], c["q1"], c["r1'"], c["p2'"], c["q2"], c["r2'"])
        params = np.column_stack([omega, np.full_like(omega, K)])
        curves.append(BoundaryCurve("string_nonzero", pts, params, c, wave_number=float(K)))
    return curves


def classify_point(lin: LinearizedPacket, gains=None) -> str:
    """Verdict for one gain pair ``(beta_cross_tail, beta_cross_head)``.

    String stability is only examined once the packet is plant stable; a
    packet on the plant-stability boundary counts as plant unstable.
    """
    if gains is not None:
        lin = lin.with_cross_gains(*gains)
    if not plant_stability_test(lin).stable:
        return PLANT_UNSTABLE
    if p_at_zero(lin) <= 0:
        return STRING_UNSTABLE
    margin, _ = string_stability_margin(lin)
    return STABLE if margin < 1.0 else STRING_UNSTABLE


@dataclass(frozen=True)
class ChartSpec:
    tail_range: tuple = (-0.5, 2.0)
    head_range: tuple = (-0.5, 2.0)
    n_tail: int = 151
    n_head: int = 151

    def __post_init__(self):
        if self.n_tail < 2 or self.n_head < 2:
            raise ValueError("chart resolutions must be at least 2")

    @property
    def beta_tail(self):
        return np.linspace(*self.tail_range, self.n_tail)

    @property
    def beta_head(self):
        return np.linspace(*self.head_range, self.n_head)

    def doubled(self) -> ChartSpec:
        return replace(self, n_tail=2 * self.n_tail - 1, n_head=2 * self.n_head - 1)


@dataclass(frozen=True)
class ChartGrid:
    """Classified gain grid; ``verdicts[i, j]`` belongs to ``beta_head[i]``, ``beta_tail[j]``."""

    beta_tail: np.ndarray
    beta_head: np.ndarray
    verdicts: np.ndarray
    fingerprint: LinearizedPacket

    @property
    def stable_mask(self):
        return self.verdicts == STABLE

    @property
    def plant_stable_mask(self):
        return self.verdicts != PLANT_UNSTABLE

    @property
    def stable_count(self) -> int:
        return int(self.stable_mask.sum())

    def nearest_cell(self, beta_tail: float, beta_head: float):
        return (int(np.argmin(np.abs(self.beta_head - beta_head))),
                int(np.argmin(np.abs(self.beta_tail - beta_tail))))

    def to_csv(self, path):
        """One row per ``beta_cross_head`` value, one column per ``beta_cross_tail`` value."""
        with open(path, "w") as fh:
            fh.write("beta_head_cross\\beta_tail_cross," +
                     ",".join(f"{b:.10g}" for b in self.beta_tail) + "\n")
            for bh, row in zip(self.beta_head, self.verdicts):
                fh.write(f"{bh:.10g}," + ",".join(row) + "\n")


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _string_screen(lin, b_tail, b_head, batch=400):
    """Grid maximum of |G| and P(0) for many gain pairs at once."""
    omega = default_omega_grid()
    s = 1j * omega
    # divide out the human-driver factor so |den| equals |D(j omega)|
    scale = hv_factor(s, lin)
    x, y, z = (t / scale for t in quasi_polynomial_terms(s, lin))
    u, v, w = numerator_terms(s, lin)
    u, v = u / scale, v / scale
    gmax = np.empty(b_tail.size)
    arg = np.empty(b_tail.size, dtype=int)
    for sl in _batches(b_tail.size, batch):
        bt, bh = b_tail[sl, None], b_head[sl, None]
        den = np.abs(x + bt * y + bh * z)
        mag = np.abs((u + bt * v) * w) / np.where(den > POLE_TOL, den, np.nan)
        mag = np.where(np.isnan(mag), np.inf, mag)
        gmax[sl] = mag.max(axis=1)
        arg[sl] = mag.argmax(axis=1)
    line = string_boundary_zero(lin) if lin.tail.xi and lin.head.xi and lin.alpha_tail else None
    if line is not None:
        p0 = line.p * b_tail + line.q * b_head + line.r
    else:
        p0 = np.array([p_at_zero(lin.with_cross_gains(a, b)) for a, b in zip(b_tail, b_head)])
    return gmax, arg, omega.size, p0


def _string_verdicts(lin, b_tail, b_head):
    gmax, arg, n_omega, p0 = _string_screen(lin, b_tail, b_head)
    ok = (gmax < 1.0) & (p0 > 0)
    # peaks just under one may hide a higher maximum between grid points
    recheck = ok & (gmax > 1.0 - 1e-3) & (arg > 0) & (arg < n_omega - 1)
    for k in np.flatnonzero(recheck):
        ok[k] = string_stability_margin(lin.with_cross_gains(b_tail[k], b_head[k]))[0] < 1.0
    return ok


def _plant_verdicts(lin, b_tail, b_head, batch=300, stop_at_first=False):
    """Plant stability for many gain pairs, ``None`` entries left unevaluated."""
    path = contour_path(0.0, 5.0, 50.0)
    x, y, z = quasi_polynomial_terms(path, lin)
    on_axis = path.real == 0.0
    dh_n = np.abs(hv_factor(path[on_axis], lin))
    out = np.zeros(b_tail.size, dtype=bool)
    for sl in _batches(b_tail.size, batch):
        bt, bh = b_tail[sl, None], b_head[sl, None]
        q = x + bt * y + bh * z
        step = np.angle(q[:, 1:] / q[:, :-1])
        wind = np.rint(step.sum(axis=1) / np.pi).astype(int)
        d_axis = np.abs(q[:, on_axis]) / dh_n
        res = (wind == 0) & (d_axis.min(axis=1) > 1e-9)
        unsure = (np.abs(step).max(axis=1) > np.pi / 4) | (d_axis.min(axis=1) < 1e-6)
        for k in np.flatnonzero(unsure):
            g = sl.start + k
            res[k] = plant_stability_test(lin.with_cross_gains(b_tail[g], b_head[g])).stable
        out[sl] = res
        if stop_at_first and res.any():
            break
    return out


def build_chart(lin: LinearizedPacket, spec: ChartSpec = ChartSpec(),
                boundaries: bool = True):
    """Classify every cell of a gain grid and trace the boundary curves.

    Parameters
    ----------
    lin : LinearizedPacket
        Fingerprint of the packet; its cross gains are ignored.
    spec : ChartSpec
        Window and resolution of the grid.
    boundaries : bool
        Also compute the Hopf curve, the zero-frequency line and the
        finite-frequency string boundary family.

    Returns
    -------
    (ChartGrid, list[BoundaryCurve])
    """
    bt, bh = np.meshgrid(spec.beta_tail, spec.beta_head)
    bt, bh = bt.ravel(), bh.ravel()
    plant = _plant_verdicts(lin, bt, bh)
    string = np.zeros_like(plant)
    if plant.any():
        string[plant] = _string_verdicts(lin, bt[plant], bh[plant])
    verdicts = np.where(plant, np.where(string, STABLE, STRING_UNSTABLE), PLANT_UNSTABLE)
    grid = ChartGrid(spec.beta_tail, spec.beta_head,
                     verdicts.reshape(spec.n_head, spec.n_tail), lin)
    curves = []
    if boundaries:
        curves.append(hopf_curve(lin))
        if lin.tail.xi and lin.head.xi and lin.alpha_tail:
            curves.append(string_zero_curve(lin, spec.head_range))
        curves.extend(string_family_curves(lin))
    return grid, curves


def write_boundaries_csv(curves, path):
    with open(path, "w") as fh:
        fh.write("kind,param,beta_tail_cross,beta_head_cross\n")
        for c in curves:
            param = c.params[:, 0] if c.params.ndim == 2 else c.params
            for prm, (a, b) in zip(param, c.points):
                if np.isfinite(a) and np.isfinite(b):
                    fh.write(f"{c.label},{prm:.10g},{a:.17g},{b:.17g}\n")


def stable_region_nonempty(lin: LinearizedPacket, spec: ChartSpec = ChartSpec()) -> bool:
    """Whether any cell of the grid is plant and string stable (stops early)."""
    bt, bh = np.meshgrid(spec.beta_tail, spec.beta_head)
    bt, bh = bt.ravel(), bh.ravel()
    gmax, _, _, p0 = _string_screen(lin, bt, bh)
    cand = np.flatnonzero((gmax < 1.0) & (p0 > 0))
    if cand.size == 0:
        return False
    # most robust candidates first
    cand = cand[np.argsort(gmax[cand])]
    for chunk in np.array_split(cand, max(1, cand.size // 200)):
        plant = _plant_verdicts(lin, bt[chunk], bh[chunk], stop_at_first=True)
        for k in np.flatnonzero(plant):
            if _string_verdicts(lin, bt[chunk[k:k + 1]], bh[chunk[k:k + 1]])[0]:
                return True
    return False


def robust_gain_region(lins, spec: ChartSpec = ChartSpec()):
    """Cells that are plant and string stable for every fingerprint in ``lins``."""
    mask = None
    for lin in lins:
        m = build_chart(lin, spec, boundaries=False)[0].stable_mask
        mask = m if mask is None else mask & m
    return mask


def _with_head_kappa(scenario, kappa):
    return replace(scenario, cav_head=scenario.cav_head.with_kappa(kappa))


def max_kappa(scenario, spec: ChartSpec = ChartSpec(), bounds=(0.05, 3.0), tol=1e-3):
    """Largest head-CAV range-policy gradient with a non-empty stable region.

    ``scenario`` fixes everything but the head CAV's gradient (its ``h_go``
    is moved to realize each trial gradient).  Bisection on ``bounds``;
    returns ``None`` when even the smallest gradient admits no stable gains.
    """
    def ok(kappa):
        return stable_region_nonempty(linearize(_with_head_kappa(scenario, kappa)), spec)

    lo, hi = bounds
    if not ok(lo):
        return None
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        log.debug("N=%d kappa bracket [%.4f, %.4f]", scenario.n_hv, lo, hi)
    return lo


@dataclass(frozen=True)
class PenetrationCurve:
    n_hv: np.ndarray
    penetration: tuple          # exact fractions 2 / (N + 2)
    kappa_max: np.ndarray       # NaN where no stable packet exists
    h_bar_min: np.ndarray
    v_star: float

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("N,p,kappa_max,h_bar_min\n")
            for n, p, k, h in zip(self.n_hv, self.penetration, self.kappa_max, self.h_bar_min):
                fh.write(f"{n},{float(p):.10g},{k:.10g},{h:.10g}\n")


def min_average_headway(p, kappa_max: float, v_star: float, h_tail: float,
                        h_st: float, h_hv: float) -> float:
    p = float(p)
    return 0.5 * p * (h_tail + v_star / kappa_max + h_st) + (1.0 - p) * h_hv


def penetration_curve(n_values, scenario, spec: ChartSpec = ChartSpec(),
                      bounds=(0.05, 3.0), tol=1e-3) -> PenetrationCurve:
    """Minimum average headway of a stabilizable packet versus CAV penetration."""
    n_values = [int(n) for n in n_values]
    if not n_values:
        raise ValueError("empty range of N")
    eq = compute_equilibrium(scenario.v_star, scenario.cav_tail, scenario.cav_head, scenario.hv)
    kappas, hbar, pens = [], [], []
    for n in n_values:
        p = Fraction(2, n + 2)
        k = max_kappa(replace(scenario, n_hv=n), spec, bounds, tol)
        log.info("N=%d p=%.3f kappa_max=%s", n, float(p), k)
        pens.append(p)
        kappas.append(np.nan if k is None else k)
        hbar.append(np.nan if k is None else min_average_headway(
            p, k, scenario.v_star, eq.h_star_tail, scenario.cav_head.limits.h_st, eq.h_star_hv))
    return PenetrationCurve(np.array(n_values), tuple(pens), np.array(kappas),
                            np.array(hbar), scenario.v_star)

"""Linearized packet dynamics and frequency-domain stability tests.

The packet is linearized around its uniform-flow equilibrium.  Link transfer
functions relate the speed perturbations of neighbouring vehicles; the
head-to-tail transfer function ``G`` maps the lead vehicle's speed
perturbation to the tail CAV's.

Two representations of the characteristic function are used:

* ``D(s)``: the denominator of ``G`` with the human-driven chain kept as the
  factor ``T_hv(s)**N``.  Stability boundaries and ``P(omega)`` are written in
  this form.
* ``Q(s) = D(s) exp(-2 s sigma) d_h(s)**N``: the pole-free retarded
  quasi-polynomial of the whole packet, used for root counting.  It is affine
  in the two cross gains, ``Q = X + beta_cross_tail * Y + beta_cross_head * Z``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .models import Equilibrium, compute_equilibrium, range_gradient

POLE_TOL = 1e-14

LINK_KINDS = ("tail_pred", "tail_cross", "hv", "head_pred", "head_cross")


class PoleError(ValueError):
    """A transfer function was evaluated (numerically) at one of its poles."""


@dataclass(frozen=True)
class CombinedParams:
    xi: float
    eta: float
    zeta: float


def combine_params(alpha: float, beta: float, kappa: float) -> CombinedParams:
    return CombinedParams(xi=alpha * kappa, eta=alpha + beta,
                          zeta=alpha + 2.0 * beta - 2.0 * kappa)


@dataclass(frozen=True)
class LinearizedPacket:
    """Linear model of a CAV pair enclosing ``n_hv`` human drivers.

    Holds the scalar gains; coefficient matrices are derived on access so
    they can never drift from the gains.  The two cross gains are the
    coordinates of the stability charts.
    """

    n_hv: int
    sigma: float
    tau: float
    alpha_tail: float
    beta_tail: float
    kappa_tail: float
    beta_cross_tail: float
    alpha_head: float
    beta_head: float
    kappa_head: float
    beta_cross_head: float
    alpha_hv: float
    beta_hv: float
    kappa_hv: float

    def __post_init__(self):
        if self.n_hv < 0:
            raise ValueError("n_hv must be non-negative")

    @property
    def tail(self) -> CombinedParams:
        return combine_params(self.alpha_tail, self.beta_tail, self.kappa_tail)

    @property
    def head(self) -> CombinedParams:
        return combine_params(self.alpha_head, self.beta_head, self.kappa_head)

    @property
    def hv(self) -> CombinedParams:
        return combine_params(self.alpha_hv, self.beta_hv, self.kappa_hv)

    def with_cross_gains(self, beta_cross_tail: float, beta_cross_head: float) -> LinearizedPacket:
        return replace(self, beta_cross_tail=float(beta_cross_tail),
                       beta_cross_head=float(beta_cross_head))

    # coefficient matrices of the delayed linear model
    @property
    def a(self):
        return np.array([[0.0, -1.0], [0.0, 0.0]])

    @property
    def a_tail(self):
        t = self.tail
        return np.array([[0.0, 0.0], [t.xi, -(t.eta + self.beta_cross_tail)]])

    @property
    def a_hv(self):
        h = self.hv
        return np.array([[0.0, 0.0], [h.xi, -h.eta]])

    @property
    def a_head(self):
        h = self.head
        return np.array([[0.0, 0.0], [h.xi, -(h.eta + self.beta_cross_head)]])

    @property
    def b(self):
        return np.array([1.0, 0.0])

    @property
    def b_tail(self):
        return np.array([0.0, self.beta_tail])

    @property
    def b_tail_cross(self):
        return np.array([0.0, self.beta_cross_tail])

    @property
    def b_hv(self):
        return np.array([0.0, self.beta_hv])

    @property
    def b_head(self):
        return np.array([0.0, self.beta_head])

    @property
    def b_head_cross(self):
        return np.array([0.0, self.beta_cross_head])

    @property
    def c(self):
        return np.array([0.0, 1.0])


def linearize(scenario, equilibrium: Equilibrium | None = None) -> LinearizedPacket:
    """Linearize a packet scenario around its equilibrium.

    ``scenario`` needs ``n_hv``, ``cav_tail``, ``cav_head``, ``hv`` and
    ``v_star`` attributes (a :class:`~cavpair.simulation.PacketScenario`
    qualifies).  Raises :class:`~cavpair.models.LinearizationError` when the
    equilibrium sits on a saturated branch.
    """
    tail, head, hv = scenario.cav_tail, scenario.cav_head, scenario.hv
    if equilibrium is None:
        equilibrium = compute_equilibrium(scenario.v_star, tail, head, hv)
    else:
        # gradients are re-derived so a saturated headway cannot slip through
        equilibrium = replace(
            equilibrium,
            kappa_tail=range_gradient("cav_tail", equilibrium.h_star_tail, tail),
            kappa_head=range_gradient("cav_head", equilibrium.h_star_head, head),
            kappa_hv=range_gradient("hv", equilibrium.h_star_hv, hv))
    if tail.sigma != head.sigma:
        raise ValueError("both CAVs must share the same delay sigma")
    return LinearizedPacket(
        n_hv=int(scenario.n_hv), sigma=tail.sigma, tau=hv.tau,
        alpha_tail=tail.alpha, beta_tail=tail.beta, kappa_tail=equilibrium.kappa_tail,
        beta_cross_tail=tail.beta_cross,
        alpha_head=head.alpha, beta_head=head.beta, kappa_head=equilibrium.kappa_head,
        beta_cross_head=head.beta_cross,
        alpha_hv=hv.alpha_h, beta_hv=hv.beta_h, kappa_hv=equilibrium.kappa_hv,
    )


def _check_poles(den):
    if np.any(np.abs(den) <= POLE_TOL):
        raise PoleError("transfer function evaluated at a pole")


def _link_parts(kind: str, s, lin: LinearizedPacket):
    if kind in ("tail_pred", "tail_cross"):
        p = lin.tail
        den = s**2 * np.exp(s * lin.sigma) + (p.eta + lin.beta_cross_tail) * s + p.xi
        num = lin.beta_tail * s + p.xi if kind == "tail_pred" else lin.beta_cross_tail * s
    elif kind in ("head_pred", "head_cross"):
        p = lin.head
        den = s**2 * np.exp(s * lin.sigma) + (p.eta + lin.beta_cross_head) * s + p.xi
        num = lin.beta_head * s + p.xi if kind == "head_pred" else lin.beta_cross_head * s
    elif kind == "hv":
        p = lin.hv
        den = s**2 * np.exp(s * lin.tau) + p.eta * s + p.xi
        num = lin.beta_hv * s + p.xi
    else:
        raise ValueError(f"unknown link kind {kind!r}; expected one of {LINK_KINDS}")
    return num + 0 * s, den


def link_tf(kind: str, s, lin: LinearizedPacket):
    """Closed-form link transfer function evaluated at complex ``s``.

    ``kind`` selects the link: ``tail_pred`` (tail CAV from the first human
    driver), ``tail_cross`` (tail from head CAV), ``hv`` (one human driver
    from its predecessor), ``head_pred`` (head CAV from the lead) and
    ``head_cross`` (head from tail CAV).
    """
    s = np.asarray(s, dtype=complex)
    num, den = _link_parts(kind, s, lin)
    _check_poles(den)
    return num / den


def link_tf_matrix(kind: str, s, lin: LinearizedPacket):
    """Same link transfer functions computed from the coefficient matrices.

    ``c (sI - a - a_d e^{-s d})^{-1} (b + b_d e^{-s d})``; independent of the
    closed forms in :func:`link_tf` and used to cross-check them.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    zero = np.zeros(2)
    table = {
        "tail_pred": (lin.a_tail, lin.b, lin.b_tail, lin.sigma),
        "tail_cross": (lin.a_tail, zero, lin.b_tail_cross, lin.sigma),
        "hv": (lin.a_hv, lin.b, lin.b_hv, lin.tau),
        "head_pred": (lin.a_head, lin.b, lin.b_head, lin.sigma),
        "head_cross": (lin.a_head, zero, lin.b_head_cross, lin.sigma),
    }
    if kind not in table:
        raise ValueError(f"unknown link kind {kind!r}")
    a_d, b, b_d, delay = table[kind]
    e = np.exp(-s * delay)[:, None, None]
    m = s[:, None, None] * np.eye(2) - lin.a - a_d * e
    rhs = (b[None, :] + b_d[None, :] * e[:, :, 0])[..., None]
    x = np.linalg.solve(m, rhs)[..., 0]
    return x @ lin.c


def hv_chain(s, lin: LinearizedPacket):
    """``T_hv(s)**N``; its real and imaginary parts are Gamma_R and Gamma_I."""
    s = np.asarray(s, dtype=complex)
    if lin.n_hv == 0:
        return np.ones_like(s)
    return link_tf("hv", s, lin) ** lin.n_hv


def head_to_tail_parts(s, lin: LinearizedPacket):
    """Numerator and denominator of ``G`` with the chain kept as a factor.

    Returns ``(num, den)`` with ``G = num / den`` and
    ``den = d_tail d_head - beta_cross_head s ((beta_tail s + xi_tail) Gamma + beta_cross_tail s)``.
    """
    s = np.asarray(s, dtype=complex)
    t, h = lin.tail, lin.head
    gam = hv_chain(s, lin)
    e = np.exp(s * lin.sigma)
    d_tail = s**2 * e + (t.eta + lin.beta_cross_tail) * s + t.xi
    d_head = s**2 * e + (h.eta + lin.beta_cross_head) * s + h.xi
    forward = (lin.beta_tail * s + t.xi) * gam + lin.beta_cross_tail * s
    num = forward * (lin.beta_head * s + h.xi)
    den = d_tail * d_head - lin.beta_cross_head * s * forward
    return num, den


def characteristic_function(s, lin: LinearizedPacket):
    """``D(s)``, the denominator of the head-to-tail transfer function."""
    return head_to_tail_parts(s, lin)[1]


def head_to_tail_tf(s, lin: LinearizedPacket):
    """Head-to-tail transfer function built from the link transfer functions."""
    s = np.asarray(s, dtype=complex)
    forward = link_tf("tail_pred", s, lin) * hv_chain(s, lin) + link_tf("tail_cross", s, lin)
    den = 1.0 - forward * link_tf("head_cross", s, lin)
    _check_poles(den)
    return forward * link_tf("head_pred", s, lin) / den


def quasi_polynomial_terms(s, lin: LinearizedPacket):
    """Gain-independent parts ``(X, Y, Z)`` of the packet quasi-polynomial.

    ``Q = X + beta_cross_tail * Y + beta_cross_head * Z``; the cross gains
    stored in ``lin`` are ignored.
    """
    s = np.asarray(s, dtype=complex)
    t, h, hv = lin.tail, lin.head, lin.hv
    es = np.exp(-s * lin.sigma)
    et = np.exp(-s * lin.tau)
    n = lin.n_hv
    dh_n = (s**2 + (hv.eta * s + hv.xi) * et) ** n
    nh_n = ((lin.beta_hv * s + hv.xi) * et) ** n
    a_tail = s**2 + (t.eta * s + t.xi) * es
    a_head = s**2 + (h.eta * s + h.xi) * es
    x = dh_n * a_tail * a_head
    y = dh_n * s * es * a_head
    z = dh_n * s * es * a_tail - s * es**2 * (lin.beta_tail * s + t.xi) * nh_n
    return x, y, z


def hv_factor(s, lin: LinearizedPacket):
    """``d_h(s)**N``, the human-driver factor that makes ``Q`` pole free."""
    s = np.asarray(s, dtype=complex)
    hv = lin.hv
    return (s**2 + (hv.eta * s + hv.xi) * np.exp(-s * lin.tau)) ** lin.n_hv


def numerator_terms(s, lin: LinearizedPacket):
    """Parts ``(U, V, W)`` with ``G = (U + beta_cross_tail * V) * W / Q``."""
    s = np.asarray(s, dtype=complex)
    t, h, hv = lin.tail, lin.head, lin.hv
    es = np.exp(-s * lin.sigma)
    et = np.exp(-s * lin.tau)
    n = lin.n_hv
    dh_n = (s**2 + (hv.eta * s + hv.xi) * et) ** n
    nh_n = ((lin.beta_hv * s + hv.xi) * et) ** n
    u = (lin.beta_tail * s + t.xi) * es * nh_n
    v = s * es * dh_n
    w = (lin.beta_head * s + h.xi) * es
    return u, v, w


def quasi_polynomial(s, lin: LinearizedPacket):
    x, y, z = quasi_polynomial_terms(s, lin)
    return x + lin.beta_cross_tail * y + lin.beta_cross_head * z


def default_omega_grid(omega_max: float = 10.0, n_samples: int = 1000):
    """Composite grid: 40% log-spaced on [1e-3, 1], the rest linear up to ``omega_max``."""
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    if omega_max <= 1.0:
        return np.logspace(-3, np.log10(omega_max), n_samples)
    n_log = max(2, int(round(0.4 * n_samples)))
    n_lin = max(2, n_samples - n_log)
    lin_part = np.linspace(1.0, omega_max, n_lin + 1)[1:]
    return np.concatenate([np.logspace(-3, 0, n_log), lin_part])


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    links: dict
    g: np.ndarray
    hv_chain_real: np.ndarray
    hv_chain_imag: np.ndarray
    sin_omega_sigma: np.ndarray
    cos_omega_sigma: np.ndarray

    @property
    def magnitude(self):
        return np.abs(self.g)

    def to_csv(self, path, links: bool = False):
        cols = [self.omega, self.g.real, self.g.imag, np.abs(self.g)]
        header = ["omega", "re_G", "im_G", "abs_G"]
        if links:
            for kind in LINK_KINDS:
                val = self.links[kind]
                cols += [val.real, val.imag, np.abs(val)]
                header += [f"re_{kind}", f"im_{kind}", f"abs_{kind}"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.17g")


def frequency_response(lin: LinearizedPacket, omega=None) -> FrequencyResponse:
    omega = default_omega_grid() if omega is None else np.asarray(omega, dtype=float)
    if omega.ndim != 1 or np.any(omega <= 0) or np.any(np.diff(omega) <= 0):
        raise ValueError("omega grid must be strictly increasing and positive")
    s = 1j * omega
    links = {kind: link_tf(kind, s, lin) for kind in LINK_KINDS}
    chain = hv_chain(s, lin)
    return FrequencyResponse(
        omega=omega, links=links, g=head_to_tail_tf(s, lin),
        hv_chain_real=chain.real, hv_chain_imag=chain.imag,
        sin_omega_sigma=np.sin(omega * lin.sigma), cos_omega_sigma=np.cos(omega * lin.sigma),
    )


def _abs_g(omega: float, lin: LinearizedPacket) -> float:
    num, den = head_to_tail_parts(1j * omega, lin)
    return float(np.abs(num) / np.abs(den))


def string_stability_margin(lin: LinearizedPacket, omega_max: float = 10.0,
                            n_samples: int = 1000):
    """Supremum of ``|G(j omega)|`` over ``(0, omega_max]``.

    The maximum over :func:`default_omega_grid` is refined by a golden-section
    search between the neighbouring grid points.  The packet is head-to-tail
    string stable iff the returned value is below one (given plant stability
    and a positive ``P(0)``).

    Returns
    -------
    (float, float)
        The supremum and the frequency where it is attained.  ``(inf, nan)``
        if a pole lies on the grid.
    """
    omega = default_omega_grid(omega_max, n_samples)
    num, den = head_to_tail_parts(1j * omega, lin)
    if np.any(np.abs(den) <= POLE_TOL):
        return np.inf, np.nan
    mag = np.abs(num) / np.abs(den)
    k = int(np.argmax(mag))
    best, w_best = float(mag[k]), float(omega[k])
    # the low-frequency end tends to |G(0)| = 1; only refine interior peaks
    if 0 < k < omega.size - 1:
        res = minimize_scalar(lambda w: -_abs_g(w, lin), method="golden",
                              bracket=(omega[k - 1], omega[k], omega[k + 1]),
                              options={"xtol": 1e-10})
        if -res.fun > best and omega[k - 1] <= res.x <= omega[k + 1]:
            best, w_best = float(-res.fun), float(res.x)
    return best, w_best


def p_at_zero(lin: LinearizedPacket) -> float:
    """Low-frequency limit of ``P``; affine in the two cross gains."""
    t, h, hv = lin.tail, lin.head, lin.hv
    n = lin.n_hv
    chain_term = n * lin.alpha_hv * hv.zeta / hv.xi**2 if n else 0.0
    gamma_i_slope = -n / lin.kappa_hv if n else 0.0
    return (h.xi**2 * t.xi**2 * chain_term
            + h.xi**2 * lin.alpha_tail * t.zeta
            + t.xi**2 * lin.alpha_head * h.zeta
            + 2.0 * h.xi * lin.alpha_tail
            * (t.xi * lin.beta_cross_head - h.xi * lin.beta_cross_tail)
            * (lin.kappa_tail * gamma_i_slope - 1.0))


def p_of_omega(lin: LinearizedPacket, omega):
    """``P(omega) = (|D|^2 - |N|^2) / omega^2``; positive iff ``|G(j omega)| < 1``.

    At ``omega == 0`` the closed-form limit :func:`p_at_zero` is used.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    out = np.empty(omega.shape)
    pos = omega > 0
    if np.any(pos):
        num, den = head_to_tail_parts(1j * omega[pos], lin)
        out[pos] = (np.abs(den) ** 2 - np.abs(num) ** 2) / omega[pos] ** 2
    out[~pos] = p_at_zero(lin)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PlantStability:
    verdict: str          # "stable", "unstable" or "boundary"
    n_roots: int          # characteristic roots inside the contour
    min_abs_d: float      # smallest |D(j omega)| found on the imaginary axis

    @property
    def stable(self) -> bool:
        return self.verdict == "stable"


def contour_path(re_min: float, re_max: float, omega_max: float):
    """Initial samples of the upper half of a rectangular contour.

    Runs up the right edge, left along the top and down the left edge to the
    real axis.  The left edge is sampled densely at low frequency where the
    delayed terms oscillate against comparable polynomial terms.
    """
    right = re_max + 1j * np.linspace(0.0, omega_max, 600)
    top = np.linspace(re_max, re_min, 200)[1:] + 1j * omega_max
    w_hi = np.linspace(omega_max, min(10.0, omega_max), 1500)[1:]
    w_lo = np.linspace(min(10.0, omega_max), 0.0, 3000)[1:]
    left = re_min + 1j * np.concatenate([w_hi, w_lo])
    return np.concatenate([right, top, left])


def _winding_half(f, path, max_rounds: int = 14, max_step: float = np.pi / 4):
    """Argument change of ``f`` along ``path`` with adaptive bisection.

    Returns ``(delta_arg, path, values, resolved)``.
    """
    path = np.asarray(path, dtype=complex)
    vals = f(path)
    for _ in range(max_rounds):
        step = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(step) > max_step
        if not bad.any():
            return float(step.sum()), path, vals, True
        mid = 0.5 * (path[:-1][bad] + path[1:][bad])
        mid_vals = f(mid)
        idx = np.flatnonzero(bad) + 1
        path = np.insert(path, idx, mid)
        vals = np.insert(vals, idx, mid_vals)
    step = np.angle(vals[1:] / vals[:-1])
    return float(step.sum()), path, vals, False


def count_roots(lin: LinearizedPacket, re_min: float = 0.0, re_max: float = 5.0,
                omega_max: float = 50.0):
    """Number of characteristic roots with ``re_min < Re s < re_max``, ``|Im s| < omega_max``.

    Uses the argument principle on the packet quasi-polynomial, which is real
    on the real axis so only the upper half of the rectangle is traversed.
    Returns ``None`` when a root sits (numerically) on the contour.
    """
    f = lambda s: quasi_polynomial(s, lin)
    ends = np.array([re_min + 0j, re_max + 0j])
    # compare against |D|, not |Q|: the human-driver factor can be tiny for long chains
    scale = np.maximum(np.abs(hv_factor(ends, lin)), 1e-300)
    if np.any(np.abs(f(ends)) / scale < 1e-12):
        return None
    delta, path, vals, ok = _winding_half(f, contour_path(re_min, re_max, omega_max))
    if not ok:
        return None
    return int(round(delta / np.pi))


def _min_abs_d_on_axis(lin: LinearizedPacket, omega_max: float) -> float:
    w = np.concatenate([np.linspace(0.0, min(10.0, omega_max), 4001),
                        np.linspace(min(10.0, omega_max), omega_max, 2001)[1:]])
    mag = np.abs(characteristic_function(1j * w, lin))
    best = float(mag.min())
    interior = np.flatnonzero((mag[1:-1] <= mag[:-2]) & (mag[1:-1] <= mag[2:])) + 1
    for k in interior[np.argsort(mag[interior])[:6]]:
        res = minimize_scalar(lambda x: float(np.abs(characteristic_function(1j * x, lin))),
                              bounds=(w[k - 1], w[k + 1]), method="bounded",
                              options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def plant_stability_test(lin: LinearizedPacket, sigma_max: float = 5.0,
                         omega_max: float = 50.0, boundary_tol: float = 1e-9) -> PlantStability:
    """Plant stability of the linearized packet via the argument principle.

    Counts characteristic roots in ``[0, sigma_max] x [-omega_max, omega_max]``.
    The verdict is ``"boundary"`` when ``|D|`` drops below ``boundary_tol``
    somewhere on the imaginary axis (including ``s = 0``, where
    ``D(0) = xi_tail * xi_head``) or the winding number cannot be resolved.
    """
    if sigma_max <= 0 or omega_max <= 0:
        raise ValueError("contour bounds must be positive")
    min_d = _min_abs_d_on_axis(lin, omega_max)
    if min_d < boundary_tol:
        return PlantStability("boundary", 0, min_d)
    n = count_roots(lin, 0.0, sigma_max, omega_max)
    if n is None:
        return PlantStability("boundary", 0, min_d)
    return PlantStability("stable" if n == 0 else "unstable", n, min_d)


def simulate_linear(lin: LinearizedPacket, lead_perturbation, dt: float = 0.01,
                    horizon: float = 60.0):
    """Integrate the linearized packet for a given lead speed perturbation.

    ``lead_perturbation`` maps an array of times to the lead's speed
    deviation from equilibrium.  Fixed-step RK4; delayed states are read from
    the stored history with cubic Lagrange interpolation.

    Returns ``(times, h_tilde, v_tilde)`` with arrays of shape
    ``(n_steps + 1, N + 2)``.
    """
    n = lin.n_hv
    m = n + 2
    n_steps = int(round(horizon / dt))
    delays = np.array([lin.sigma] + [lin.tau] * n + [lin.sigma])
    xi = np.array([lin.tail.xi] + [lin.hv.xi] * n + [lin.head.xi])
    damp = np.array([lin.tail.eta + lin.beta_cross_tail] + [lin.hv.eta] * n
                    + [lin.head.eta + lin.beta_cross_head])
    beta = np.array([lin.beta_tail] + [lin.beta_hv] * n + [lin.beta_head])
    cross = np.zeros(m)
    cross[0], cross[-1] = lin.beta_cross_tail, lin.beta_cross_head
    partner = np.arange(m)
    partner[0], partner[-1] = m - 1, 0

    lag = max(int(np.ceil(delays.max() / dt)) + 4, 4)
    rows = lag + n_steps + 1
    hist_h = np.zeros((rows, m))
    # speeds of the m followers plus the lead in the last column
    hist_v = np.zeros((rows, m + 1))
    times = np.arange(n_steps + 1) * dt
    lead_full = np.asarray(lead_perturbation(np.arange(2 * n_steps + 1) * dt / 2), dtype=float)
    hist_v[lag:, m] = lead_full[::2]
    own = np.arange(m)
    pred = own + 1

    def delayed(arr, cols, k, c):
        # cubic Lagrange value at row position k + c - delay/dt; newest node is row k
        pos = k + c - delays / dt
        base = np.minimum(np.floor(pos).astype(int), k - 2)
        f = pos - base
        w = (-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2,
             -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6)
        return sum(wi * arr[base + j - 1, cols] for j, wi in enumerate(w))

    def delayed_command(k, c):
        return (xi * delayed(hist_h, own, k, c) - damp * delayed(hist_v, own, k, c)
                + beta * delayed(hist_v, pred, k, c) + cross * delayed(hist_v, partner, k, c))

    def rhs(v, v_lead, u_del):
        return np.append(v[1:], v_lead) - v, u_del

    for step in range(n_steps):
        k = lag + step
        h, v = hist_h[k], hist_v[k, :m]
        u0, u_mid, u1 = delayed_command(k, 0.0), delayed_command(k, 0.5), delayed_command(k, 1.0)
        lead0, lead_half, lead1 = lead_full[2 * step:2 * step + 3]
        dh1, dv1 = rhs(v, lead0, u0)
        dh2, dv2 = rhs(v + 0.5 * dt * dv1, lead_half, u_mid)
        dh3, dv3 = rhs(v + 0.5 * dt * dv2, lead_half, u_mid)
        dh4, dv4 = rhs(v + dt * dv3, lead1, u1)
        hist_h[k + 1] = h + dt / 6 * (dh1 + 2 * dh2 + 2 * dh3 + dh4)
        hist_v[k + 1, :m] = v + dt / 6 * (dv1 + 2 * dv2 + 2 * dv3 + dv4)
    return times, hist_h[lag:], hist_v[lag:, :m]

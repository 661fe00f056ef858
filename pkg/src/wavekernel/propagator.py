"""Boundary controls and the representation formula for the driven wave.

A control is a smooth C^n-valued boundary input on [0, T] that vanishes
(with two derivatives) near t = 0 and is extended by zero to negative
arguments.  The wave generated by a control is evaluated through the
kernel representation: the reflected control plus a causal integral of
the kernel against the control history.  Second space derivatives come
from the interior equation rather than from differentiating the kernel
twice, which is the only route the kernel's regularity supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import ControlError, DomainError
from .goursat import KernelField, _interp_triangle

_SUPPORT_TOL = 1e-12


def _as_vec(values, dim: int) -> np.ndarray:
    out = np.asarray(values, dtype=complex)
    if out.ndim == 0:
        out = out[None]
    if out.shape != (dim,):
        raise ControlError(f"expected a length-{dim} amplitude, got shape {out.shape}")
    return out


def _bump_profile(t: np.ndarray, start: float, stop: float):
    """Compactly supported C-infinity profile on (start, stop), peak 1.

    Returns the profile and its first two derivatives; all three vanish
    identically outside the open support interval.
    """
    t = np.asarray(t, dtype=float)
    f = np.zeros_like(t)
    f1 = np.zeros_like(t)
    f2 = np.zeros_like(t)
    pad = 1e-9 * (stop - start)
    inside = (t > start + pad) & (t < stop - pad)
    if not inside.any():
        return f, f1, f2
    ti = t[inside]
    d1 = ti - start
    d2 = stop - ti
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        g = -1.0 / d1 - 1.0 / d2 + 4.0 / (stop - start)
        phi = np.exp(g)
        g1 = 1.0 / d1**2 - 1.0 / d2**2
        g2 = -2.0 / d1**3 - 2.0 / d2**3
        f[inside] = phi
        f1[inside] = np.where(phi == 0.0, 0.0, phi * g1)
        f2[inside] = np.where(phi == 0.0, 0.0, phi * (g1**2 + g2))
    return f, f1, f2


def _ramp_profile(t: np.ndarray, start: float, stop: float):
    """C-infinity ramp: 0 before start, 1 after stop."""
    t = np.asarray(t, dtype=float)
    width = stop - start
    s = (t - start) / width
    f = np.zeros_like(s)
    f1 = np.zeros_like(s)
    f2 = np.zeros_like(s)
    f[s >= 1.0] = 1.0
    mid = (s > 1e-9) & (s < 1.0 - 1e-9)
    if not mid.any():
        return f, f1, f2
    si = s[mid]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        bs = np.exp(-1.0 / si)
        cs = np.exp(-1.0 / (1.0 - si))
        b1 = bs / si**2
        c1 = -cs / (1.0 - si) ** 2
        b2 = bs * (1.0 / si**4 - 2.0 / si**3)
        c2 = cs * (1.0 / (1.0 - si) ** 4 - 2.0 / (1.0 - si) ** 3)
        den = bs + cs
        num = b1 * cs - bs * c1
        f[mid] = bs / den
        f1[mid] = num / den**2 / width
        num_p = b2 * cs - bs * c2
        den_p = b1 + c1
        f2[mid] = (num_p / den**2 - 2.0 * num * den_p / den**3) / width**2
    return f, f1, f2


@dataclass
class Control:
    """Smooth boundary control with two derivatives, vanishing near t = 0."""

    T: float
    dim: int
    support_start: float
    _eval: callable    # t array -> (f, f', f'') stacked as (3, ..., dim)
    label: str = "control"

    def sample(self, t):
        """Values and first two derivatives at t; zero for negative arguments."""
        t = np.asarray(t, dtype=float)
        out = self._eval(t)
        neg = (t < 0.0)[..., None]
        return tuple(np.where(neg, 0.0, out[k]) for k in range(3))

    def __add__(self, other: "Control") -> "Control":
        if abs(other.T - self.T) > 1e-12 or other.dim != self.dim:
            raise ControlError("can only add controls with equal horizon and dimension")
        f, g = self._eval, other._eval

        def ev(t):
            a = f(t)
            b = g(t)
            return tuple(a[k] + b[k] for k in range(3))

        return Control(self.T, self.dim, min(self.support_start, other.support_start),
                       ev, label=f"{self.label}+{other.label}")

    def scaled(self, alpha: complex) -> "Control":
        f = self._eval

        def ev(t):
            a = f(t)
            return tuple(alpha * a[k] for k in range(3))

        return Control(self.T, self.dim, self.support_start, ev,
                       label=f"{alpha}*{self.label}")

    def delayed(self, tau: float) -> "Control":
        """The same control started tau later (zero-padded at the front)."""
        f = self._eval

        def ev(t):
            ts = np.asarray(t, dtype=float) - tau
            a = f(ts)
            neg = (ts < 0.0)[..., None]
            return tuple(np.where(neg, 0.0, a[k]) for k in range(3))

        return Control(self.T, self.dim, self.support_start + tau, ev,
                       label=f"{self.label}@+{tau}")

    def reflected(self, support_start: float) -> "Control":
        """Time reversal about the horizon; caller asserts the new support."""
        f = self._eval
        T = self.T

        def ev(t):
            a = f(T - np.asarray(t, dtype=float))
            return a[0], -a[1], a[2]

        return _checked(Control(self.T, self.dim, support_start, ev,
                                label=f"refl({self.label})"))


def _checked(ctrl: Control) -> Control:
    """Verify the vanishing-near-zero contract at 16 probe points."""
    probes = np.linspace(0.0, ctrl.support_start, 16)
    f, f1, f2 = ctrl.sample(probes)
    grid = np.linspace(0.0, ctrl.T, 257)
    scale = max(float(np.max(np.abs(ctrl.sample(grid)[0]))), 1.0)
    worst = max(float(np.max(np.abs(f))), float(np.max(np.abs(f1))),
                float(np.max(np.abs(f2))))
    if worst > _SUPPORT_TOL * scale:
        raise ControlError(
            f"control {ctrl.label!r} does not vanish on [0, {ctrl.support_start}]: "
            f"worst probe magnitude {worst:.3e}"
        )
    return ctrl


def zero_control(T: float, dim: int = 1) -> Control:
    def ev(t):
        shape = np.shape(t) + (dim,)
        z = np.zeros(shape, dtype=complex)
        return z, z.copy(), z.copy()

    return Control(T, dim, T, ev, label="zero")


def bump_control(T: float, start: float, stop: float, amplitude=1.0) -> Control:
    """Bump profile times a constant amplitude vector; support in (start, stop)."""
    if not (0.0 < start < stop <= T):
        raise ControlError(f"need 0 < start < stop <= T, got ({start}, {stop}, {T})")
    amp = np.atleast_1d(np.asarray(amplitude, dtype=complex))
    dim = amp.size

    def ev(t):
        f, f1, f2 = _bump_profile(t, start, stop)
        return f[..., None] * amp, f1[..., None] * amp, f2[..., None] * amp

    return _checked(Control(T, dim, start, ev, label=f"bump({start},{stop})"))


def ramp_control(T: float, start: float, stop: float, amplitude=1.0) -> Control:
    """Smooth step from zero to the amplitude vector; nonzero at t = T."""
    if not (0.0 < start < stop <= T):
        raise ControlError(f"need 0 < start < stop <= T, got ({start}, {stop}, {T})")
    amp = np.atleast_1d(np.asarray(amplitude, dtype=complex))
    dim = amp.size

    def ev(t):
        f, f1, f2 = _ramp_profile(t, start, stop)
        return f[..., None] * amp, f1[..., None] * amp, f2[..., None] * amp

    return _checked(Control(T, dim, start, ev, label=f"ramp({start},{stop})"))


def control_from_samples(ts, values, T: float = None, support_start: float = None) -> Control:
    """Quintic-spline fit of sampled control values.

    The samples must be identically zero on an initial segment; the spline
    is clamped to zero below support_start and the smoothness contract is
    verified at construction.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None]
    if ts.ndim != 1 or ts.size != values.shape[0] or ts.size < 7:
        raise ControlError("need at least 7 samples aligned with their times")
    T = float(ts[-1]) if T is None else float(T)
    dim = values.shape[1]
    mags = np.max(np.abs(values), axis=1)
    nz = np.nonzero(mags > _SUPPORT_TOL * max(mags.max(), 1.0))[0]
    if support_start is None:
        if nz.size == 0:
            return zero_control(T, dim)
        if nz[0] == 0:
            raise ControlError("sampled control must vanish on an initial segment")
        support_start = float(ts[nz[0] - 1])
    spl = make_interp_spline(ts, values, k=5)
    d1 = spl.derivative(1)
    d2 = spl.derivative(2)

    def ev(t):
        tc = np.clip(np.asarray(t, dtype=float), 0.0, T)
        flat = (np.asarray(spl(tc), dtype=complex),
                np.asarray(d1(tc), dtype=complex),
                np.asarray(d2(tc), dtype=complex))
        dead = (tc <= support_start)[..., None]
        return tuple(np.where(dead, 0.0, g) for g in flat)

    return _checked(Control(T, dim, support_start, ev, label="sampled"))


def random_smooth_control(T: float, dim: int, rng: np.random.Generator,
                          n_bumps: int = 3) -> Control:
    """Random combination of bumps; reproducible from the generator state."""
    ctrl = None
    for _ in range(n_bumps):
        start = float(rng.uniform(0.05, 0.45)) * T
        width = float(rng.uniform(0.25, 0.5)) * T
        stop = min(start + width, 0.97 * T)
        amp = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        piece = bump_control(T, start, stop, amp)
        ctrl = piece if ctrl is None else ctrl + piece
    return ctrl


# --- wave snapshots ----------------------------------------------------------

@dataclass(frozen=True)
class WaveSnapshot:
    """State u(., T) with two space derivatives on a uniform grid over [0, T]."""

    T: float
    grid: np.ndarray
    u: np.ndarray
    u_x: np.ndarray
    u_xx: np.ndarray

    @property
    def dim(self) -> int:
        return self.u.shape[-1]


def _kernel_matrix(field: KernelField, T: float, N: int):
    """Kernel samples w(x_k, s_m) on the shared uniform grid, with the
    causal trapezoid weights over [x_k, T]; zero below the diagonal."""
    delta = T / N
    s = np.arange(N + 1) * delta
    X, S = np.meshgrid(s, s, indexing="ij")
    causal = S >= X
    xi = np.where(causal, S - X, 0.0)
    eta = np.where(causal, S + X, 0.0)
    W = _interp_triangle(field.v, xi, eta, field.step, field.M)
    W[~causal] = 0.0
    wgt = np.where(causal, delta, 0.0)
    idx = np.arange(N + 1)
    wgt[idx, idx] = 0.5 * delta
    wgt[:-1, N] = 0.5 * delta
    wgt[N, N] = 0.0
    return s, W, wgt, causal


def propagate(field: KernelField, f: Control, T: float, N: int) -> WaveSnapshot:
    """Wave snapshot at time T on N+1 uniform nodes.

    u comes from the representation formula, u_x from its differentiated
    form, and u_xx from the interior equation u_xx = u_tt + q u with u_tt
    evaluated by pushing two time derivatives onto the control.
    """
    if T > field.T * (1 + 1e-12) + 1e-12:
        raise DomainError(f"horizon T = {T} exceeds the kernel horizon {field.T}")
    if f.dim != field.dim:
        raise ControlError(f"control dimension {f.dim} != kernel dimension {field.dim}")
    s, W, wgt, causal = _kernel_matrix(field, T, N)
    f0, f1, f2 = f.sample(T - s)
    u = f0 + np.einsum("km,kmab,mb->ka", wgt, W, f0)

    q_x = field.q_at(s)
    u_tt = f2 + np.einsum("km,kmab,mb->ka", wgt, W, f2)
    u_xx = u_tt + np.einsum("kab,kb->ka", q_x, u)

    w_diag = _interp_triangle(field.v, np.zeros_like(s), 2.0 * np.minimum(s, field.T),
                              field.step, field.M)
    X, S = np.meshgrid(s, s, indexing="ij")
    xi = np.where(causal, S - X, 0.0)
    eta = np.where(causal, S + X, 0.0)
    Wx = _interp_triangle(field.wx_lat, xi, eta, field.step, field.M)
    w0x = -0.25 * (field.q_at(np.where(causal, (S + X) / 2.0, 0.0))
                   + field.q_at(np.where(causal, (S - X) / 2.0, 0.0)))
    Wfull = Wx + w0x
    Wfull[~causal] = 0.0
    u_x = -f1 - np.einsum("kab,kb->ka", w_diag, f0) \
        + np.einsum("km,kmab,mb->ka", wgt, Wfull, f0)
    return WaveSnapshot(T=float(T), grid=s, u=u, u_x=u_x, u_xx=u_xx)


def u_tt(field: KernelField, f: Control, x: float, t: float) -> np.ndarray:
    """Second time derivative of the wave at one interior point."""
    if not (-1e-12 <= x <= t + 1e-12 and t <= field.T * (1 + 1e-12)):
        raise DomainError("point outside 0 <= x <= t <= T")
    f2x = f.sample(np.asarray([t - x]))[2][0]
    if t - x < 1e-14:
        return f2x
    k = max(2, int(math.ceil((t - x) / (field.step / 2.0))) + 1)
    s = np.linspace(x, t, k)
    W = _interp_triangle(field.v, s - x, s + x, field.step, field.M)
    f2 = f.sample(t - s)[2]
    return f2x + np.trapezoid(np.einsum("kab,kb->ka", W, f2), x=s, axis=0)


def _u_values(field: KernelField, f: Control, t_prime: float, xs: np.ndarray,
              deriv: int = 0) -> np.ndarray:
    """Representation-formula values of the wave (or a time derivative) at
    time t_prime on arbitrary x nodes; zero beyond the wave front."""
    xs = np.asarray(xs, dtype=float)
    live = xs < t_prime - 1e-14
    out = np.zeros((xs.size, field.dim), dtype=complex)
    if not live.any():
        return out
    xl = xs[live]
    k = max(2, int(math.ceil(t_prime / (field.step / 2.0))) + 1)
    frac = np.linspace(0.0, 1.0, k)
    s = xl[:, None] + (t_prime - xl)[:, None] * frac[None, :]
    W = _interp_triangle(field.v, s - xl[:, None], s + xl[:, None], field.step, field.M)
    fv = f.sample(t_prime - s)[deriv]
    g = np.einsum("rkab,rkb->rka", W, fv)
    dx = (t_prime - xl) / (k - 1)
    integ = dx[:, None] * (g.sum(axis=1) - 0.5 * g[:, 0] - 0.5 * g[:, -1])
    out[live] = f.sample(t_prime - xl)[deriv] + integ
    return out


@dataclass(frozen=True)
class DifferenceQuotientReport:
    h_values: np.ndarray
    errors: np.ndarray
    slope: float


def difference_quotient_test(field: KernelField, f: Control, t: float,
                             h_list, N: int = 400) -> DifferenceQuotientReport:
    """Convergence of time difference quotients of the wave to its derivative.

    For each step h the L2 distance between (u(., t+h) - u(., t))/h and
    u_t(., t) is measured; the report carries the fitted log-log slope.
    """
    h_arr = np.asarray(sorted(h_list, reverse=True), dtype=float)
    if np.any(h_arr <= 0):
        raise DomainError("steps must be positive")
    if t + h_arr.max() > field.T * (1 + 1e-12) + 1e-12:
        raise DomainError("t + max(h) exceeds the kernel horizon")
    xs = np.linspace(0.0, t + h_arr.max(), N + 1)
    base = _u_values(field, f, t, xs, deriv=0)
    rate = _u_values(field, f, t, xs, deriv=1)
    errs = []
    for h in h_arr:
        ahead = _u_values(field, f, t + h, xs, deriv=0)
        diff = (ahead - base) / h - rate
        errs.append(float(np.sqrt(np.trapezoid(np.sum(np.abs(diff) ** 2, axis=1), x=xs))))
    errs = np.asarray(errs)
    if np.all(errs < 1e-15):
        slope = math.inf
    else:
        slope = float(np.polyfit(np.log(h_arr), np.log(np.maximum(errs, 1e-300)), 1)[0])
    return DifferenceQuotientReport(h_values=h_arr, errors=errs, slope=slope)

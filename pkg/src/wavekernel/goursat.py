"""Transmutation kernel of the half-line telegraph equation.

The kernel w(x,t) is computed in characteristic coordinates xi = t - x,
eta = t + x, where the hyperbolic problem becomes a fixed-point equation
v = v0 + V v for the field v on the triangle 0 <= xi <= eta <= 2T.  The
fixed point is reached by Picard sweeps; every integral is a composite
trapezoid on a uniform characteristic lattice with spacing h, so one
sweep costs O(M^2) via cumulative prefix sums (M = 2T/h).

Alongside the field itself the solver precomputes cumulative line
integrals of q*v along lattice rows and columns.  Those tables give the
first derivatives of the kernel and the explicit second time derivative
of its smooth part in closed vectorized form.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DomainError
from .potential import PotentialGrid, _opnorms, integral_Q

_TOL = 1e-9


def _cumtrapz(vals: np.ndarray, dx: float, axis: int) -> np.ndarray:
    pair = np.moveaxis(vals, axis, 0)
    out = np.zeros_like(pair)
    np.cumsum(0.5 * dx * (pair[:-1] + pair[1:]), axis=0, out=out[1:])
    return np.moveaxis(out, 0, axis)


def _grids(M: int):
    idx = np.arange(M + 1)
    A, B = np.meshgrid(idx, idx, indexing="ij")
    return idx, A, B


def _triangle_mask(M: int) -> np.ndarray:
    _, A, B = _grids(M)
    return A <= B


@dataclass
class KernelField:
    """Kernel values on the characteristic triangle plus derived tables.

    v[i, j] holds the field at (xi_i, eta_j) = (i*h, j*h) for i <= j; entries
    below the diagonal are zero.  qh holds the potential sampled at half-step
    points m*h/2, the resolution every internal quadrature uses.
    """

    T: float
    step: float
    v: np.ndarray                   # (M+1, M+1, n, n)
    v0: np.ndarray
    iterations: int
    tail_bound: float
    qh: np.ndarray = field(repr=False, default=None)       # (M+1, n, n)
    e_cum: np.ndarray = field(repr=False, default=None)    # row integrals of q*v
    d_cum: np.ndarray = field(repr=False, default=None)    # column integrals of q*v
    wx_lat: np.ndarray = field(repr=False, default=None)   # d/dx of the smooth part
    _wtt_lat: np.ndarray = field(repr=False, default=None)

    @property
    def M(self) -> int:
        return self.v.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.v.shape[-1]

    def q_at(self, pts) -> np.ndarray:
        """Potential at arbitrary points of [0, T], interpolated from qh."""
        pts = np.asarray(pts, dtype=float)
        pos = np.clip(pts, 0.0, self.T) / (0.5 * self.step)
        k = np.minimum(np.floor(pos).astype(int), self.M - 1)
        frac = (pos - k)[..., None, None]
        return self.qh[k] * (1.0 - frac) + self.qh[k + 1] * frac

    def wtilde_lattice(self) -> np.ndarray:
        return self.v - self.v0

    def wtt_lattice(self) -> np.ndarray:
        """Explicit second time derivative of the smooth kernel part.

        Lazily cached; recomputation is idempotent, so concurrent readers
        at worst duplicate work.
        """
        if self._wtt_lat is None:
            self._wtt_lat = _assemble_wtt(self)
        return self._wtt_lat

    def wxx_lattice(self) -> np.ndarray:
        """Second space derivative of the smooth part via the interior identity."""
        _, A, B = _grids(self.M)
        qx = self.qh[np.clip(B - A, 0, self.M)]
        return self.wtt_lattice() + np.einsum("ijab,ijbc->ijac", qx, self.v)


def _interp_triangle(arr: np.ndarray, xi, eta, h: float, M: int) -> np.ndarray:
    """Interpolate a lattice field at points of the characteristic triangle.

    Off-diagonal cells use bilinear interpolation; cells touching the
    diagonal use linear interpolation on their three valid corners, which
    keeps diagonal values exact.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    top = M * h
    if np.any(xi < -_TOL) or np.any(eta > top + _TOL * (1 + top)) or np.any(xi > eta + _TOL):
        raise DomainError("interpolation point outside the characteristic triangle")
    xic = np.clip(xi, 0.0, top)
    etac = np.clip(np.maximum(eta, xic), 0.0, top)
    i = np.minimum((xic / h).astype(int), M - 1)
    j = np.minimum((etac / h).astype(int), M - 1)
    j = np.maximum(j, i)
    s = (xic / h - i)[..., None, None]
    u = (etac / h - j)[..., None, None]
    bilin = (
        arr[i, j] * (1 - s) * (1 - u)
        + arr[i + 1, j] * s * (1 - u)
        + arr[i, j + 1] * (1 - s) * u
        + arr[i + 1, j + 1] * s * u
    )
    bary = arr[i, j] * (1 - u) + arr[i + 1, j + 1] * s + arr[i, j + 1] * (u - s)
    diag = (i == j)[..., None, None]
    return np.where(diag, bary, bilin)


# --- construction ----------------------------------------------------------

def _lattice_setup(p: PotentialGrid, T: float, h: float):
    M = int(round(2.0 * T / h))
    if abs(M * h - 2.0 * T) > _TOL * max(1.0, T):
        raise DomainError(f"step h = {h} does not divide 2T = {2 * T}")
    if M % 2 != 0:
        raise DomainError(f"step h = {h} must divide T (even lattice), got M = {M}")
    if M < 2:
        raise DomainError("lattice too coarse; need at least two steps")
    if p.x_max < T - _TOL * max(1.0, T):
        raise DomainError(f"potential domain [0, {p.x_max}] does not cover [0, {T}]")
    qh = p.eval(np.minimum(np.arange(M + 1) * (h / 2.0), p.x_max))
    return M, qh


def _v0_lattice(qh: np.ndarray, h: float) -> np.ndarray:
    M = qh.shape[0] - 1
    q_cum = _cumtrapz(qh, h / 2.0, axis=0)
    v0 = -0.5 * (q_cum[None, :, :, :] - q_cum[:, None, :, :])
    v0[~_triangle_mask(M)] = 0.0
    return v0


def initial_v0(p: PotentialGrid, T: float, h: float) -> KernelField:
    """Field holding only the explicit part: the potential integral between
    the two characteristic coordinates."""
    M, qh = _lattice_setup(p, T, h)
    v0 = _v0_lattice(qh, h)
    f = KernelField(T=float(T), step=float(h), v=v0.copy(), v0=v0, iterations=0,
                    tail_bound=float("inf"), qh=qh)
    _attach_tables(f)
    return f


def apply_V(p: PotentialGrid, values: np.ndarray, h: float) -> np.ndarray:
    """One application of the fixed-point integral operator to a lattice field."""
    M = values.shape[0] - 1
    qh = p.eval(np.arange(M + 1) * (h / 2.0))
    return _apply_V_core(qh, values, h)


def _apply_V_core(qh: np.ndarray, values: np.ndarray, h: float) -> np.ndarray:
    M = values.shape[0] - 1
    idx, A, B = _grids(M)
    g = np.einsum("ijab,ijbc->ijac", qh[np.clip(B - A, 0, M)], values)
    g[A > B] = 0.0
    inner = _cumtrapz(g, h, axis=1)          # along eta
    outer = _cumtrapz(inner, h, axis=0)      # along xi
    out = -0.25 * (outer - outer[idx, idx][:, None])
    out[A > B] = 0.0
    out[idx, idx] = 0.0
    return out


def _tail_bound(S: float, width: float, n_done: int) -> float:
    """Factorial tail of the iteration remainder after n_done sweeps."""
    if S <= 0.0 or width <= 0.0:
        return 0.0
    total = 0.0
    for k in range(n_done + 1, n_done + 400):
        term = math.exp((k + 1) * math.log(S) + k * math.log(width) - math.lgamma(k + 1))
        total += term
        if term < 1e-30 * max(total, 1e-300):
            break
    return total


def solve_goursat(p: PotentialGrid, T: float, h: float, tol: float,
                  max_sweeps: int = 100) -> KernelField:
    """Solve the kernel fixed-point equation by Picard sweeps.

    Stops when the sup-norm change over all nodes falls below tol, or when
    the analytic factorial tail of the remainder does; raises
    ConvergenceError at the sweep cap.  Diagonal nodes are pinned to zero.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    M, qh = _lattice_setup(p, T, h)
    idx = np.arange(M + 1)
    v0 = _v0_lattice(qh, h)
    S_full = float(0.5 * np.trapezoid(_opnorms(qh), dx=h / 2.0))
    v = v0.copy()
    iterations = 0
    delta = math.inf
    tail = _tail_bound(S_full, 2.0 * T, 0)
    while not (tail < tol or delta < tol):
        if iterations >= max_sweeps:
            raise ConvergenceError(
                f"no convergence after {max_sweeps} sweeps "
                f"(last change {delta:.3e}, tol {tol:.3e}); "
                "tol may be below the quadrature floor for this h"
            )
        v_new = v0 + _apply_V_core(qh, v, h)
        v_new[idx, idx] = 0.0
        delta = float(np.max(np.sqrt(np.sum(np.abs(v_new - v) ** 2, axis=(-2, -1)))))
        v = v_new
        iterations += 1
        tail = _tail_bound(S_full, 2.0 * T, iterations)
    f = KernelField(T=float(T), step=float(h), v=v, v0=v0, iterations=max(iterations, 1),
                    tail_bound=tail, qh=qh)
    _attach_tables(f)
    return f


def _attach_tables(f: KernelField) -> None:
    """Cumulative line integrals of q*v along both lattice directions.

    e_cum[j, m] integrates q(s) v(eta_j - 2s, eta_j) over s in [0, m*h/2]
    (constant eta); d_cum[i, m] integrates q(s) v(xi_i, xi_i + 2s) over the
    same range (constant xi).  Both power the derivative formulas.
    """
    M, h = f.M, f.step
    idx, A, B = _grids(M)

    ge = np.einsum("mab,jmbc->jmac", f.qh, f.v[np.clip(A - B, 0, M), A])
    ge[B > A] = 0.0
    f.e_cum = _cumtrapz(ge, h / 2.0, axis=1)

    gd = np.einsum("mab,imbc->imac", f.qh, f.v[A, np.clip(A + B, 0, M)])
    gd[A + B > M] = 0.0
    f.d_cum = _cumtrapz(gd, h / 2.0, axis=1)

    # d/dx of the smooth part at node (i, j), from the derivative formulas in
    # characteristic coordinates:
    #   wx = -(1/2) e_cum[j, j] + (1/2) e_cum[j, j-i] + (1/2) d_cum[i, j-i]
    #        -(1/2) e_cum[i, i]
    e_diag = f.e_cum[idx, idx]
    JM = np.clip(B - A, 0, M)
    wx = 0.5 * (-e_diag[B] + f.e_cum[B, JM] + f.d_cum[A, JM] - e_diag[A])
    wx[A > B] = 0.0
    f.wx_lat = wx


def _assemble_wtt(f: KernelField) -> np.ndarray:
    """Explicit second time derivative of the smooth kernel part.

    Assembled from the differentiated fixed-point equation: pointwise
    products of q with edge kernel values, six single q*q integrals, and
    the remaining double-integral terms built from e_cum/d_cum by one more
    cumulative trapezoid along the outer integration variable.
    """
    M, h = f.M, f.step
    idx, A, B = _grids(M)
    JM = np.clip(B - A, 0, M)           # JM[i, j] = j - i on the triangle
    e_diag = f.e_cum[idx, idx]

    # outer integrand over tau = m*h/2 at fixed xi_i (A = i, B = m):
    #   q(tau) [ d_cum[i, m] - e_cum[i, i] + e_cum[i+m, i+m] - e_cum[i+m, m] ]
    ipm = np.clip(A + B, 0, M)
    g1 = np.einsum("mab,imbc->imac", f.qh,
                   f.d_cum[A, B] - e_diag[A] + e_diag[ipm] - f.e_cum[ipm, B])
    g1[A + B > M] = 0.0
    cum_x1 = _cumtrapz(g1, h / 2.0, axis=1)

    # outer integrand over tau at fixed eta_j (A = j, B = m):
    #   q(tau) [ d_cum[j-m, m] - e_cum[j-m, j-m] + e_cum[j, j] - e_cum[j, m] ]
    jmm = np.clip(A - B, 0, M)
    g3 = np.einsum("mab,jmbc->jmac", f.qh,
                   f.d_cum[jmm, B] - e_diag[jmm] + e_diag[A] - f.e_cum[A, B])
    g3[B > A] = 0.0
    cum_x3 = _cumtrapz(g3, h / 2.0, axis=1)
    x3_diag = cum_x3[idx, idx]

    w_hat = 0.25 * (cum_x1[A, JM] - x3_diag[A] + x3_diag[B] - cum_x3[B, JM])

    # pointwise edge terms
    qv_edge = np.einsum("kab,kbc->kac", f.qh, f.v[0])
    point = 0.25 * (qv_edge[A] - qv_edge[B])

    # single q*q integrals; cc1 integrates q(s) q(xi/2 + s), cc6 integrates
    # q(s) q(c - s) up to the diagonal (the self-convolution at full range)
    qq_fwd = np.einsum("mab,imbc->imac", f.qh, f.qh[ipm])
    qq_fwd[A + B > M] = 0.0
    cc1 = _cumtrapz(qq_fwd, h / 2.0, axis=1)
    qq_bwd = np.einsum("mab,kmbc->kmac", f.qh, f.qh[jmm])
    qq_bwd[B > A] = 0.0
    cc6 = _cumtrapz(qq_bwd, h / 2.0, axis=1)
    cc6_diag = cc6[idx, idx]
    q_cum = _cumtrapz(f.qh, h / 2.0, axis=0)

    eighth = (
        cc1[A, JM]
        - np.einsum("ijab,ijbc->ijac", q_cum[JM], f.qh[A])
        + cc6_diag[A]
        - np.einsum("ijab,ijbc->ijac", q_cum[A], f.qh[A])
        + np.einsum("ijab,ijbc->ijac", q_cum[B] - q_cum[JM], f.qh[B])
        - cc6_diag[B]
        + cc6[B, JM]
    )

    out = point + 0.125 * eighth + w_hat
    out[A > B] = 0.0
    return out


# --- point evaluation -------------------------------------------------------

def kernel_w(f: KernelField, x, t) -> np.ndarray:
    """Kernel value w(x, t) by interpolation of the characteristic lattice."""
    _check_xt(f, x, t)
    return _interp_triangle(f.v, np.asarray(t) - x, np.asarray(t) + x, f.step, f.M)


def split_w(p: PotentialGrid, f: KernelField, x: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the kernel into its explicit potential integral and the smooth rest."""
    _check_xt(f, x, t)
    w0 = -0.5 * integral_Q(p, (t - x) / 2.0, (t + x) / 2.0)
    return w0, kernel_w(f, x, t) - w0


def _check_xt(f: KernelField, x, t) -> None:
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(x < -_TOL) or np.any(x > t + _TOL) or np.any(t > f.T * (1 + _TOL) + _TOL):
        raise DomainError(f"(x, t) outside the triangle 0 <= x <= t <= {f.T}")


def derivatives_v(p: PotentialGrid, f: KernelField, xi: float, eta: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """First derivatives of the field at one characteristic point.

    Evaluates the explicit formulas: a pointwise q term plus single line
    integrals of q*v along lattice-parallel segments, by trapezoid
    quadrature of the interpolated field.
    """
    if not (-_TOL <= xi <= eta + _TOL and eta <= 2 * f.T * (1 + _TOL) + _TOL):
        raise DomainError("characteristic point outside the triangle")
    h = f.step

    def _line(a: float, b: float, q_arg, v_pt):
        if b - a < 1e-14:
            return np.zeros((f.dim, f.dim), dtype=complex)
        k = max(2, int(np.ceil((b - a) / (h / 2.0))) + 1)
        s = np.linspace(a, b, k)
        qv = np.einsum("kab,kbc->kac", p.eval(q_arg(s)),
                       _interp_triangle(f.v, *v_pt(s), h, f.M))
        return np.trapezoid(qv, x=s, axis=0)

    int1 = _line(xi, eta, lambda s: (s - xi) / 2.0, lambda s: (np.full_like(s, xi), s))
    int2 = _line(0.0, xi, lambda s: (xi - s) / 2.0, lambda s: (s, np.full_like(s, xi)))
    int3 = _line(0.0, xi, lambda s: (eta - s) / 2.0, lambda s: (s, np.full_like(s, eta)))
    v_xi = 0.25 * p.eval(xi / 2.0) - 0.25 * int1 + 0.25 * int2
    v_eta = -0.25 * p.eval(eta / 2.0) - 0.25 * int3
    return v_xi, v_eta


def wtilde_x(p: PotentialGrid, f: KernelField, x: float, t: float) -> np.ndarray:
    """Space derivative of the smooth kernel part at (x, t)."""
    _check_xt(f, x, t)
    return _interp_triangle(f.wx_lat, t - x, t + x, f.step, f.M)


def wtt_explicit(p: PotentialGrid, f: KernelField, x: float, t: float) -> np.ndarray:
    """Second time derivative of the smooth kernel part at (x, t)."""
    _check_xt(f, x, t)
    return _interp_triangle(f.wtt_lattice(), t - x, t + x, f.step, f.M)


# --- diagnostics ------------------------------------------------------------

@dataclass(frozen=True)
class KernelConstants:
    b1: float   # sup norm of the smooth part
    b2: float   # sup norm of its space derivative
    b3: float   # integrated squared L1 profile of its second space derivative
    b4: float   # sup norm of the full kernel


def kernel_constants(p: PotentialGrid, f: KernelField) -> KernelConstants:
    """Sup norms and the integrated second-derivative constant of the kernel.

    All suprema run over the physical region 0 <= x <= t <= T, i.e. lattice
    nodes with i + j <= M.
    """
    M, h = f.M, f.step
    _, A, B = _grids(M)
    phys = (A <= B) & (A + B <= M)
    b1 = float(np.max(_opnorms(f.wtilde_lattice())[phys]))
    b2 = float(np.max(_opnorms(f.wx_lat)[phys]))
    b4 = float(np.max(_opnorms(f.v)[phys]))
    wxx_norm = _opnorms(f.wxx_lattice())
    inner = []
    xs = []
    for d in range(0, M + 1, 2):
        rows = np.arange((M - d) // 2 + 1)
        vals = wxx_norm[rows, rows + d]
        inner.append(float(np.trapezoid(vals, dx=h)) if rows.size > 1 else 0.0)
        xs.append(d * h / 2.0)
    b3 = float(np.trapezoid(np.asarray(inner) ** 2, x=np.asarray(xs)))
    return KernelConstants(b1=b1, b2=b2, b3=b3, b4=b4)


@dataclass(frozen=True)
class GoursatReport:
    diag_residual: float      # max violation of the zero diagonal condition
    edge_residual: float      # max violation of the explicit edge condition
    interior_residual: float  # max mixed-difference residual of the PDE
    bound_violations: int     # nodes exceeding the a priori growth bound
    bound_excess: float       # worst exceedance (0 when none)


def check_goursat(p: PotentialGrid, f: KernelField) -> GoursatReport:
    """Residuals of the two characteristic conditions and the interior equation.

    The edge condition is checked against the potential's own (finer)
    quadrature, the interior equation as a mixed second difference against
    the pointwise product q*v at the lower cell corner.
    """
    M, h = f.M, f.step
    idx, A, B = _grids(M)
    diag = float(np.max(_opnorms(f.v[idx, idx])))
    ref = np.stack([integral_Q(p, 0.0, j * h / 2.0) for j in idx])
    edge = float(np.max(_opnorms(f.v[0] + 0.5 * ref)))
    mixed = (f.v[1:, 1:] - f.v[:-1, 1:] - f.v[1:, :-1] + f.v[:-1, :-1]) / h**2
    q_cell = f.qh[np.clip(B - A, 0, M)][:-1, :-1]
    resid = mixed + 0.25 * np.einsum("ijab,ijbc->ijac", q_cell, f.v[:-1, :-1])
    interior_mask = (A[:-1, :-1] + 1) <= B[:-1, :-1]
    interior = float(np.max(_opnorms(resid)[interior_mask])) if interior_mask.any() else 0.0
    count, excess = bound_violations(f)
    return GoursatReport(diag_residual=diag, edge_residual=edge,
                         interior_residual=interior,
                         bound_violations=count, bound_excess=excess)


def bound_violations(f: KernelField, rel_slack: float = 1e-10) -> tuple[int, float]:
    """Nodes where the field exceeds its exponential a priori bound.

    The majorant is evaluated with the same lattice quadrature the solver
    uses, so the edge-equality case is reproduced exactly.
    """
    M, h = f.M, f.step
    norms_qh = _opnorms(f.qh)
    s_lat = np.concatenate(([0.0], np.cumsum(0.125 * h * (norms_qh[:-1] + norms_qh[1:]))))
    xi = np.arange(M + 1) * h
    bound = s_lat[None, :] * np.exp(xi[:, None] * s_lat[None, :]) + f.tail_bound
    excess = _opnorms(f.v) - (bound + rel_slack * (1.0 + bound))
    bad = (excess > 0) & _triangle_mask(M)
    worst = float(np.max(excess[bad])) if bad.any() else 0.0
    return int(np.count_nonzero(bad)), worst


# --- persistence ------------------------------------------------------------

def dump_kernel(f: KernelField, p: PotentialGrid, csv_path, json_path) -> None:
    """Write the lattice field as CSV plus a JSON summary."""
    M, n = f.M, f.dim
    kc = kernel_constants(p, f)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["xi", "eta"]
        for a in range(n):
            for b in range(n):
                header += [f"v{a}{b}_re", f"v{a}{b}_im"]
        writer.writerow(header)
        for i in range(M + 1):
            for j in range(i, M + 1):
                row = [f"{i * f.step:.17g}", f"{j * f.step:.17g}"]
                for a in range(n):
                    for b in range(n):
                        row += [f"{f.v[i, j, a, b].real:.17g}",
                                f"{f.v[i, j, a, b].imag:.17g}"]
                writer.writerow(row)
    summary = {
        "T": f.T, "h": f.step, "n": n,
        "iterations": f.iterations, "tail_bound": f.tail_bound,
        "b1": kc.b1, "b2": kc.b2, "b3": kc.b3, "b4": kc.b4,
    }
    Path(json_path).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")


def load_kernel(csv_path, json_path, p: PotentialGrid) -> KernelField:
    """Reconstruct a field from a dump; derivative tables are recomputed."""
    meta = json.loads(Path(json_path).read_text())
    T, h, n = float(meta["T"]), float(meta["h"]), int(meta["n"])
    M, qh = _lattice_setup(p, T, h)
    v = np.zeros((M + 1, M + 1, n, n), dtype=complex)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            i = int(round(float(row[0]) / h))
            j = int(round(float(row[1]) / h))
            flat = np.asarray([float(z) for z in row[2:]])
            v[i, j] = (flat[0::2] + 1j * flat[1::2]).reshape(n, n)
    f = KernelField(T=T, step=h, v=v, v0=_v0_lattice(qh, h),
                    iterations=int(meta["iterations"]),
                    tail_bound=float(meta["tail_bound"]), qh=qh)
    _attach_tables(f)
    return f

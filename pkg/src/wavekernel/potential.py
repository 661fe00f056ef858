"""Sampled Hermitian matrix potentials on [0, x_max] with cached integrals.

Potentials are stored as uniformly sampled, piecewise-linear grid functions.
All antiderivatives use the composite trapezoid rule; endpoints that fall
between nodes are handled by linear interpolation of the integrand, so the
cumulative evaluator is exactly additive.  The matrix norm used everywhere
is the operator 2-norm (largest singular value).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, PotentialError

_HERMITIAN_TOL = 1e-8
_RANGE_TOL = 1e-9


def _opnorms(mats: np.ndarray) -> np.ndarray:
    """Operator 2-norm of a batch of matrices (largest singular value)."""
    if mats.shape[-1] == 1:
        return np.abs(mats[..., 0, 0])
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def _cumtrapz(vals: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative trapezoid along axis 0, starting at zero."""
    out = np.zeros_like(vals)
    np.cumsum(0.5 * dx * (vals[:-1] + vals[1:]), axis=0, out=out[1:])
    return out


@dataclass(frozen=True)
class PotentialGrid:
    """Hermitian matrix potential q sampled on a uniform grid over [0, x_max].

    Immutable after construction; all methods are pure reads.
    """

    x_max: float
    step: float
    samples: np.ndarray            # (m+1, n, n) complex, Hermitian at each node
    norms: np.ndarray = field(repr=False, default=None)
    cum_integral: np.ndarray = field(repr=False, default=None)
    cum_norm_integral: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.samples.shape[-1]

    @property
    def n_nodes(self) -> int:
        return self.samples.shape[0]

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -_RANGE_TOL) or np.any(x > self.x_max * (1 + _RANGE_TOL) + _RANGE_TOL):
            raise DomainError(
                f"evaluation at x outside [0, {self.x_max}] "
                f"(requested range [{x.min()}, {x.max()}])"
            )
        xc = np.clip(x, 0.0, self.x_max)
        pos = xc / self.step
        k = np.minimum(np.floor(pos).astype(int), self.n_nodes - 2)
        frac = pos - k
        return xc, k, frac

    def eval(self, x) -> np.ndarray:
        """Linearly interpolated q(x); x may be a scalar or an array."""
        _, k, frac = self._locate(x)
        w = frac[..., None, None]
        return self.samples[k] * (1.0 - w) + self.samples[k + 1] * w

    def _cum_at(self, cum: np.ndarray, nodal: np.ndarray, x) -> np.ndarray:
        # cum holds node values of the antiderivative; finish the partial cell
        # with a trapezoid against the linearly interpolated integrand.
        xc, k, frac = self._locate(x)
        if nodal.ndim == 3:
            q_x = nodal[k] * (1.0 - frac)[..., None, None] + nodal[k + 1] * frac[..., None, None]
            part = (xc - k * self.step)[..., None, None] * 0.5 * (nodal[k] + q_x)
        else:
            q_x = nodal[k] * (1.0 - frac) + nodal[k + 1] * frac
            part = (xc - k * self.step) * 0.5 * (nodal[k] + q_x)
        return cum[k] + part

    def integral(self, a, b) -> np.ndarray:
        """Matrix antiderivative difference: integral of q over [a, b]."""
        return self._cum_at(self.cum_integral, self.samples, b) - self._cum_at(
            self.cum_integral, self.samples, a
        )

    def norm_integral(self, x) -> np.ndarray:
        """Integral of the operator norm of q over [0, x]."""
        return self._cum_at(self.cum_norm_integral, self.norms, x)


def _finish(x_max: float, step: float, samples: np.ndarray) -> PotentialGrid:
    samples = np.ascontiguousarray(samples, dtype=complex)
    if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
        raise PotentialError(f"samples must be (m+1, n, n), got {samples.shape}")
    asym = _opnorms(samples - samples.conj().transpose(0, 2, 1))
    scale = np.maximum(_opnorms(samples), 1e-30)
    worst = float(np.max(asym / scale)) if samples.size else 0.0
    if worst > _HERMITIAN_TOL:
        raise PotentialError(
            f"potential is not Hermitian: relative asymmetry {worst:.3e} "
            f"exceeds tolerance {_HERMITIAN_TOL:.0e}"
        )
    samples = 0.5 * (samples + samples.conj().transpose(0, 2, 1))
    norms = _opnorms(samples)
    return PotentialGrid(
        x_max=float(x_max),
        step=float(step),
        samples=samples,
        norms=norms,
        cum_integral=_cumtrapz(samples, step),
        cum_norm_integral=_cumtrapz(norms, step),
    )


def zero_potential(dim: int = 1, x_max: float = 4.0, step: float = 1.0 / 2048) -> PotentialGrid:
    m = int(round(x_max / step))
    return _finish(m * step, step, np.zeros((m + 1, dim, dim), dtype=complex))


def constant_potential(matrix, x_max: float = 4.0, step: float = 1.0 / 2048) -> PotentialGrid:
    c = np.atleast_2d(np.asarray(matrix, dtype=complex))
    m = int(round(x_max / step))
    return _finish(m * step, step, np.broadcast_to(c, (m + 1, *c.shape)).copy())


def sampled_potential(x: np.ndarray, values: np.ndarray) -> PotentialGrid:
    """Potential from explicit node samples; the x grid must be uniform from 0."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None, None]
    if x.size < 2:
        raise PotentialError("need at least two sample points")
    if abs(x[0]) > _RANGE_TOL:
        raise PotentialError("sample grid must start at x = 0")
    steps = np.diff(x)
    step = steps[0]
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-8 * max(step, 1.0):
        raise PotentialError("nonuniform sample grid is unsupported")
    return _finish(x[-1], step, values)


def potential_from_callable(fn, dim: int, x_max: float, step: float) -> PotentialGrid:
    m = int(round(x_max / step))
    xs = np.arange(m + 1) * step
    vals = np.asarray(fn(xs), dtype=complex)
    if vals.ndim == 1:
        vals = vals[:, None, None]
    if vals.shape != (m + 1, dim, dim):
        raise PotentialError(f"preset callable returned shape {vals.shape}")
    return _finish(m * step, step, vals)


def _smooth_bump(x: np.ndarray, left: float, right: float) -> np.ndarray:
    """C-infinity bump supported on (left, right), peak value 1."""
    s = (np.asarray(x, dtype=float) - left) / (right - left)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (4.0 * si * (1.0 - si)))
    return out


_PRESETS = {
    "one": (1, lambda xs: np.ones_like(xs)[:, None, None].astype(complex)),
    "diag14": (2, lambda xs: np.einsum("k,ab->kab", np.ones_like(xs), np.diag([1.0, 4.0])).astype(complex)),
    "herm2": (
        2,
        lambda xs: np.einsum(
            "k,ab->kab",
            np.ones_like(xs),
            np.array([[1.0, 0.3 + 0.4j], [0.3 - 0.4j, 2.0]]),
        ),
    ),
    "one_plus_bump": (1, lambda xs: (1.0 + _smooth_bump(xs, 0.0, 1.0))[:, None, None].astype(complex)),
    "one_plus_quadratic": (1, lambda xs: (1.0 + 0.5 * xs**2)[:, None, None].astype(complex)),
}


def preset_potential(name: str, x_max: float = 4.0, step: float = 1.0 / 2048) -> PotentialGrid:
    if name not in _PRESETS:
        raise PotentialError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    dim, fn = _PRESETS[name]
    return potential_from_callable(fn, dim, x_max, step)


def build_potential(spec: dict) -> PotentialGrid:
    """Build a PotentialGrid from a parsed spec mapping.

    Recognized kinds: zero, constant, sampled, preset.  Constant takes a
    row-major ``matrix`` list; sampled takes node arrays ``x`` and ``values``;
    preset takes a registry ``name``.
    """
    kind = spec.get("kind")
    if kind == "zero":
        return zero_potential(
            dim=int(spec.get("dimension", 1)),
            x_max=float(spec.get("x_max", 4.0)),
            step=float(spec.get("step", 1.0 / 2048)),
        )
    if kind == "constant":
        n = int(spec.get("dimension", 1))
        entries = spec["matrix"]
        if len(entries) != n * n:
            raise PotentialError(f"constant matrix needs {n * n} entries, got {len(entries)}")
        c = np.asarray(entries, dtype=complex).reshape(n, n)
        return constant_potential(
            c, x_max=float(spec.get("x_max", 4.0)), step=float(spec.get("step", 1.0 / 2048))
        )
    if kind == "sampled":
        return sampled_potential(spec["x"], spec["values"])
    if kind == "preset":
        return preset_potential(
            spec["name"],
            x_max=float(spec.get("x_max", 4.0)),
            step=float(spec.get("step", 1.0 / 2048)),
        )
    raise PotentialError(f"unknown potential kind {kind!r}")


# --- spec'd operations ----------------------------------------------------

def integral_Q(p: PotentialGrid, a: float, b: float) -> np.ndarray:
    """Trapezoid value of the matrix integral of q over [a, b]."""
    if not (0.0 <= a <= b + _RANGE_TOL and b <= p.x_max * (1 + _RANGE_TOL) + _RANGE_TOL):
        raise DomainError(f"integral bounds [{a}, {b}] outside [0, {p.x_max}]")
    return p.integral(a, min(b, p.x_max))


def majorant_S(p: PotentialGrid, eta: float) -> float:
    """Scalar majorant: half the integral of the operator norm of q over [0, eta/2]."""
    if not (0.0 <= eta <= 2.0 * p.x_max * (1 + _RANGE_TOL) + _RANGE_TOL):
        raise DomainError(f"eta = {eta} outside [0, {2 * p.x_max}]")
    return float(0.5 * p.norm_integral(min(eta / 2.0, p.x_max)))


def norm_constants(p: PotentialGrid, T: float) -> tuple[float, float]:
    """L1 and L2 norm constants of q over [0, T]: (half the L1 norm, the L2 norm)."""
    if T > p.x_max * (1 + _RANGE_TOL) + _RANGE_TOL:
        raise DomainError(f"T = {T} exceeds potential domain [0, {p.x_max}]")
    T = min(T, p.x_max)
    a1 = float(0.5 * p.norm_integral(T))
    sq = p.norms**2
    cum_sq = _cumtrapz(sq, p.step)
    a2 = float(np.sqrt(np.real(p._cum_at(cum_sq, sq, T))))
    return a1, a2


def convolution_p(p: PotentialGrid, x: float) -> np.ndarray:
    """Matrix self-convolution of q evaluated at x by the trapezoid rule."""
    if not (0.0 <= x <= p.x_max * (1 + _RANGE_TOL) + _RANGE_TOL):
        raise DomainError(f"x = {x} outside [0, {p.x_max}]")
    x = min(x, p.x_max)
    if x == 0.0:
        return np.zeros((p.dim, p.dim), dtype=complex)
    k_full = int(np.floor(x / p.step + _RANGE_TOL))
    taus = np.arange(k_full + 1) * p.step
    if x - taus[-1] > _RANGE_TOL * max(1.0, x):
        taus = np.append(taus, x)
    left = p.eval(taus)
    right = p.eval(x - taus)
    prods = np.einsum("kab,kbc->kac", left, right)
    widths = np.diff(taus)
    return np.einsum("k,kab->ab", widths, 0.5 * (prods[:-1] + prods[1:]))


# --- potential spec files ---------------------------------------------------

def parse_complex(token: str) -> complex:
    """Parse a complex scalar written with an ``i`` imaginary unit."""
    t = token.strip().replace(" ", "")
    if not t:
        raise PotentialError("empty complex entry")
    t = re.sub(r"i\b", "j", t.replace("I", "i"))
    if t.endswith("i"):
        t = t[:-1] + "j"
    try:
        return complex(t)
    except ValueError as exc:
        raise PotentialError(f"cannot parse complex entry {token!r}") from exc


def parse_potential_file(path) -> dict:
    """Parse a plain-text key-value potential description.

    Fields: kind, dimension, x_max, step, and one of ``matrix`` (row-major
    complex entries), ``csv`` (sample file path, relative to the spec file)
    or ``name`` (preset registry key).
    """
    path = Path(path)
    spec: dict = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise PotentialError(f"cannot read potential file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PotentialError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        spec[key.strip()] = value.strip()
    kind = spec.get("kind")
    if kind not in {"zero", "constant", "sampled", "preset"}:
        raise PotentialError(f"{path}: kind must be zero/constant/sampled/preset, got {kind!r}")
    out: dict = {"kind": kind}
    for key in ("dimension",):
        if key in spec:
            out[key] = int(spec[key])
    for key in ("x_max", "step"):
        if key in spec:
            out[key] = float(spec[key])
    if kind == "constant":
        if "matrix" not in spec:
            raise PotentialError(f"{path}: constant potential needs a 'matrix' field")
        out["matrix"] = [parse_complex(tok) for tok in spec["matrix"].split()]
    if kind == "preset":
        if "name" not in spec:
            raise PotentialError(f"{path}: preset potential needs a 'name' field")
        out["name"] = spec["name"]
    if kind == "sampled":
        if "csv" not in spec:
            raise PotentialError(f"{path}: sampled potential needs a 'csv' field")
        csv_path = (path.parent / spec["csv"]).resolve()
        try:
            raw = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise PotentialError(f"cannot read sample csv {csv_path}: {exc}") from exc
        except ValueError as exc:
            raise PotentialError(f"malformed sample csv {csv_path}: {exc}") from exc
        n_sq, rem = divmod(raw.shape[1] - 1, 2)
        if rem != 0 or n_sq < 1:
            raise PotentialError(f"{csv_path}: expected columns x plus re/im pairs")
        n = int(round(np.sqrt(n_sq)))
        if n * n != n_sq:
            raise PotentialError(f"{csv_path}: {n_sq} entries per row is not a square matrix")
        vals = raw[:, 1::2] + 1j * raw[:, 2::2]
        out["x"] = raw[:, 0]
        out["values"] = vals.reshape(-1, n, n)
    return out

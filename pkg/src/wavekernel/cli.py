"""Batch front-end: reproducible runs driven by flat key-value config files.

Subcommands: kernel, propagate, apply, invert, bounds, validate, oracle.
Exit codes: 0 ok, 1 input error, 2 non-convergence, 3 validation failure.
Every command writes a manifest echoing the resolved configuration, and
identical configurations with identical seeds produce byte-identical
output files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .control_op import (build_volterra, certify_h2_bound, condition_estimate,
                         invert_W, reflect)
from .errors import (CertificationError, ConfigError, ControlError,
                     ConvergenceError, DomainError, PotentialError,
                     SingularSystemError)
from .goursat import (check_goursat, dump_kernel, load_kernel, solve_goursat,
                      kernel_constants)
from .oracle import FDConfig, compare, fd_solve
from .potential import build_potential, parse_complex, parse_potential_file
from .propagator import (Control, bump_control, control_from_samples,
                         difference_quotient_test, propagate, ramp_control,
                         zero_control)

_FMT = "%.17g"


def _parse_config(path: Path) -> dict:
    cfg: dict = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    cfg["_dir"] = path.parent
    return cfg


def _cfg_float(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"config is missing required key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} is not a number: {cfg[key]!r}") from exc


def _cfg_int(cfg: dict, key: str, default=None) -> int:
    return int(_cfg_float(cfg, key, default))


def _load_potential(cfg: dict):
    if "potential" not in cfg:
        raise ConfigError("config is missing required key 'potential'")
    pot_path = (cfg["_dir"] / cfg["potential"]).resolve()
    return build_potential(parse_potential_file(pot_path))


def _load_control(cfg: dict, T: float, dim: int) -> Control:
    spec = cfg.get("control", "zero")
    parts = spec.split()
    kind = parts[0]
    kv = {}
    for tok in parts[1:]:
        if "=" in tok:
            k, _, v = tok.partition("=")
            kv[k] = v
        else:
            kv["path"] = tok
    if kind == "zero":
        return zero_control(T, dim)
    if kind in ("bump", "ramp"):
        start = float(kv.get("start", 0.1 * T))
        stop = float(kv.get("stop", 0.9 * T))
        amp = [parse_complex(tok) for tok in kv.get("amp", "1").split(",")]
        if len(amp) == 1 and dim > 1:
            amp = amp * dim
        if len(amp) != dim:
            raise ControlError(f"control amplitude has {len(amp)} entries, need {dim}")
        maker = bump_control if kind == "bump" else ramp_control
        return maker(T, start, stop, np.asarray(amp))
    if kind == "csv":
        path = (cfg["_dir"] / kv["path"]).resolve()
        try:
            raw = np.loadtxt(path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ControlError(f"cannot read control csv {path}: {exc}") from exc
        vals = raw[:, 1::2] + 1j * raw[:, 2::2]
        return control_from_samples(raw[:, 0], vals, T=T)
    raise ControlError(f"unknown control kind {kind!r}")


def _write_manifest(out: Path, command: str, cfg: dict, seed: int) -> None:
    echo = {k: v for k, v in cfg.items() if not k.startswith("_")}
    payload = {"command": command, "version": __version__, "seed": seed, "config": echo}
    (out / "manifest.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_snapshot_csv(path: Path, snap) -> None:
    n = snap.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["x"]
        for name in ("u", "ux", "uxx"):
            for comp in range(n):
                header += [f"{name}{comp}_re", f"{name}{comp}_im"]
        writer.writerow(header)
        for k, x in enumerate(snap.grid):
            row = [_FMT % x]
            for arr in (snap.u, snap.u_x, snap.u_xx):
                for comp in range(n):
                    row += [_FMT % arr[k, comp].real, _FMT % arr[k, comp].imag]
            writer.writerow(row)


def _write_series_csv(path: Path, grid: np.ndarray, values: np.ndarray, name: str) -> None:
    n = values.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + [f"{name}{c}_{p}" for c in range(n) for p in ("re", "im")]
        writer.writerow(header)
        for k, t in enumerate(grid):
            row = [_FMT % t]
            for c in range(n):
                row += [_FMT % values[k, c].real, _FMT % values[k, c].imag]
            writer.writerow(row)


def _solve_field(cfg: dict, p):
    T = _cfg_float(cfg, "T")
    h = _cfg_float(cfg, "h")
    tol = _cfg_float(cfg, "tol", 1e-10)
    max_sweeps = _cfg_int(cfg, "max_sweeps", 100)
    return solve_goursat(p, T, h, tol, max_sweeps=max_sweeps)


def _field_for(cfg: dict, p):
    """Field from a dump when the config names one, else a fresh solve."""
    if "kernel_dump" in cfg:
        csv_path = (cfg["_dir"] / cfg["kernel_dump"]).resolve()
        json_path = csv_path.with_suffix(".json")
        if not csv_path.exists() or not json_path.exists():
            raise ConfigError(f"kernel dump {csv_path} (with sibling .json) not found")
        return load_kernel(csv_path, json_path, p)
    return _solve_field(cfg, p)


# --- subcommands -------------------------------------------------------------

def cmd_kernel(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _solve_field(cfg, p)
    dump_kernel(field, p, out / "kernel.csv", out / "kernel.json")
    _write_manifest(out, "kernel", cfg, seed)
    return 0


def cmd_propagate(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _field_for(cfg, p)
    T = _cfg_float(cfg, "T")
    N = _cfg_int(cfg, "N")
    f = _load_control(cfg, T, p.dim)
    snap = propagate(field, f, T, N)
    _write_snapshot_csv(out / "snapshot.csv", snap)
    _write_manifest(out, "propagate", cfg, seed)
    return 0


def cmd_apply(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _field_for(cfg, p)
    T = _cfg_float(cfg, "T")
    N = _cfg_int(cfg, "N")
    f = _load_control(cfg, T, p.dim)
    snap = propagate(field, f, T, N)
    _write_series_csv(out / "wave.csv", snap.grid, snap.u, "u")
    _write_manifest(out, "apply", cfg, seed)
    return 0


def cmd_invert(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _field_for(cfg, p)
    T = _cfg_float(cfg, "T")
    if "snapshot" not in cfg:
        raise ConfigError("invert needs a 'snapshot' key pointing at wave samples")
    snap_path = (cfg["_dir"] / cfg["snapshot"]).resolve()
    try:
        raw = np.loadtxt(snap_path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {snap_path}: {exc}") from exc
    n = p.dim
    if raw.shape[1] < 1 + 2 * n:
        raise ConfigError(f"snapshot {snap_path} has too few columns for dimension {n}")
    u = raw[:, 1:1 + 2 * n:2] + 1j * raw[:, 2:2 + 2 * n:2]
    N = raw.shape[0] - 1
    if N < 2:
        raise ConfigError("snapshot needs at least 3 rows")
    sysv = build_volterra(field, T, N)
    g = invert_W(sysv, u)
    recovered = reflect(g)
    _write_series_csv(out / "control_recovered.csv", sysv.grid, recovered, "f")
    summary = {"N": N, "T": T}
    if "control" in cfg:
        ref = _load_control(cfg, T, n).sample(sysv.grid)[0]
        num = np.sqrt(np.trapezoid(np.sum(np.abs(recovered - ref) ** 2, axis=1), x=sysv.grid))
        den = np.sqrt(np.trapezoid(np.sum(np.abs(ref) ** 2, axis=1), x=sysv.grid))
        summary["roundtrip_rel_l2"] = float(num / den) if den > 0 else 0.0
    _write_json(out / "invert.json", summary)
    _write_manifest(out, "invert", cfg, seed)
    return 0


def cmd_bounds(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _field_for(cfg, p)
    T = _cfg_float(cfg, "T")
    N = _cfg_int(cfg, "N", 256)
    trials = _cfg_int(cfg, "trials", 100)
    rep = certify_h2_bound(field, p, T, trials=trials, N=N, seed=seed)
    s_min, s_max, cond = condition_estimate(build_volterra(field, T, min(N, 512)))
    payload = {
        "a1": rep.a1, "a2": rep.a2, "b1": rep.b1, "b2": rep.b2, "b3": rep.b3,
        "b4": rep.b4,
        "bounds": {"i": rep.bound_i, "ii": rep.bound_ii, "iii": rep.bound_iii},
        "ratios": {"i": rep.ratio_i, "ii": rep.ratio_ii, "iii": rep.ratio_iii},
        "empirical_ratio": rep.empirical_ratio,
        "composite_bound": rep.composite_bound,
        "inverse_ratio": rep.inverse_ratio,
        "sigma_min": s_min, "sigma_max": s_max, "cond": cond,
        "seed": seed, "trials": trials,
    }
    _write_json(out / "bounds.json", payload)
    _write_manifest(out, "bounds", cfg, seed)
    return 0


def cmd_validate(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _solve_field(cfg, p)
    T = _cfg_float(cfg, "T")
    N = _cfg_int(cfg, "N", 200)
    f = _load_control(cfg, T, p.dim)

    report = check_goursat(p, field)
    kc = kernel_constants(p, field)
    snap = propagate(field, f, T, N)
    fd = fd_solve(p, f, FDConfig(N_x=_cfg_int(cfg, "fd_nx", 2 * N), T=T))
    _, _, rel = compare(snap, fd)
    rep = certify_h2_bound(field, p, T, trials=_cfg_int(cfg, "trials", 25),
                           N=min(N, 256), seed=seed)
    dq_t = _cfg_float(cfg, "dq_t", 0.75 * T)
    dq_h = [2.0**-k for k in range(4, 9)]
    nonzero = f.sample(np.linspace(0, T, 64))[0]
    if np.max(np.abs(nonzero)) == 0.0 or dq_t + max(dq_h) > field.T:
        dq_slope = float("inf")
    else:
        dq_slope = difference_quotient_test(field, f, dq_t, dq_h).slope
    s_min, s_max, cond = condition_estimate(build_volterra(field, T, min(N, 512)))

    thresholds = {
        "edge_tol": _cfg_float(cfg, "edge_tol", 1e-4),
        "interior_tol": _cfg_float(cfg, "interior_tol", max(10.0 * field.step, 0.05)),
        "oracle_rel_tol": _cfg_float(cfg, "oracle_rel_tol", 1e-2),
        "dq_slope_min": _cfg_float(cfg, "dq_slope_min", 0.9),
    }
    failing = []
    if report.diag_residual > 0.0:
        failing.append("goursat_diagonal")
    if report.edge_residual > thresholds["edge_tol"]:
        failing.append("goursat_edge")
    if report.interior_residual > thresholds["interior_tol"]:
        failing.append("goursat_interior")
    if report.bound_violations > 0:
        failing.append("apriori_bound")
    if rel > thresholds["oracle_rel_tol"]:
        failing.append("oracle_agreement")
    if rep.ratio_i > rep.bound_i or rep.ratio_ii > rep.bound_ii \
            or rep.ratio_iii > rep.bound_iii or rep.empirical_ratio > rep.composite_bound:
        failing.append("h2_bounds")
    if dq_slope < thresholds["dq_slope_min"]:
        failing.append("difference_quotient")

    payload = {
        "goursat": {
            "diag": report.diag_residual, "edge": report.edge_residual,
            "interior": report.interior_residual,
            "bound_violations": report.bound_violations,
        },
        "constants": {"b1": kc.b1, "b2": kc.b2, "b3": kc.b3, "b4": kc.b4},
        "oracle_rel_l2": rel,
        "h2": {
            "ratio_i": rep.ratio_i, "bound_i": rep.bound_i,
            "ratio_ii": rep.ratio_ii, "bound_ii": rep.bound_ii,
            "ratio_iii": rep.ratio_iii, "bound_iii": rep.bound_iii,
            "empirical_ratio": rep.empirical_ratio,
            "composite_bound": rep.composite_bound,
        },
        "dq_slope": dq_slope,
        "cond": {"sigma_min": s_min, "sigma_max": s_max, "cond": cond},
        "thresholds": thresholds,
        "failing": failing,
        "pass": not failing,
    }
    _write_json(out / "validate.json", payload)
    _write_manifest(out, "validate", cfg, seed)
    if failing:
        print(f"validation failed: {', '.join(failing)}", file=sys.stderr)
        return 3
    return 0


def cmd_oracle(cfg: dict, out: Path, seed: int) -> int:
    p = _load_potential(cfg)
    field = _field_for(cfg, p)
    T = _cfg_float(cfg, "T")
    N = _cfg_int(cfg, "N")
    f = _load_control(cfg, T, p.dim)
    snap = propagate(field, f, T, N)
    fd = fd_solve(p, f, FDConfig(N_x=_cfg_int(cfg, "fd_nx", 2 * N), T=T))
    l2, mx, rel = compare(snap, fd)
    _write_snapshot_csv(out / "fd_snapshot.csv", fd)
    _write_json(out / "oracle.json", {"l2_err": l2, "max_err": mx, "rel_l2": rel})
    _write_manifest(out, "oracle", cfg, seed)
    return 0


_COMMANDS = {
    "kernel": cmd_kernel,
    "propagate": cmd_propagate,
    "apply": cmd_apply,
    "invert": cmd_invert,
    "bounds": cmd_bounds,
    "validate": cmd_validate,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavekernel",
        description="Transmutation kernels and control operators for the "
                    "boundary-driven telegraph equation.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (best effort)")
    args = parser.parse_args(argv)

    if args.threads is not None:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(args.threads)
        except ImportError:
            pass

    try:
        cfg = _parse_config(args.config)
        out = args.out if args.out is not None else Path(cfg.get("out", "."))
        if not out.is_absolute():
            base = Path.cwd() if args.out is not None else cfg["_dir"]
            out = base / out
        out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else _cfg_int(cfg, "seed", 0)
        return _COMMANDS[args.command](cfg, out, seed)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, PotentialError, ControlError, DomainError,
            SingularSystemError, CertificationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

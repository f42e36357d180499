"""Command-line drivers: ``fraclayer {eval,layer,sweep,radial,properties}``.

Runs are configured by an INI file (sections ``[run]``, ``[nonlinearity]``,
``[mesh]``, ``[tolerances]``, ``[eval]``, ``[radial]``, ``[properties]``)
plus ``--set section.key=value`` overrides.  Every run writes the fully
resolved configuration back as ``config.resolved.ini`` next to its outputs.

Exit codes: 0 success, 1 property failure, 2 configuration error,
3 numerical failure, 4 non-convergence, 5 partial results.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError, GridError, PreconditionError, TailError
from .extension import (
    HalfStripField,
    StripData,
    check_hopf,
    check_max_principle,
    dual_conjugate,
    duality_residual,
    estimate_harnack,
    hopf_barrier,
    solve_dirichlet,
)
from .fraclap import fraclap_fourier, fraclap_pv, nonlocal_residual
from .grid import GridFunction, read_grid_csv
from .hamiltonian import hamiltonian_profile, radial_hamiltonian, s_limit_split, verify_identity, verify_modica
from .kernels import FracOrder
from .mesh import HalfStripMesh
from .profiles import (
    RadialSolution,
    check_necessary_conditions,
    continuation_in_s,
    make_nonlinearity,
    solve_layer,
    solve_ode_layer,
    solve_radial,
)

__all__ = ["RunConfig", "load_config", "main", "run"]

COMMANDS = ("eval", "layer", "sweep", "radial", "properties")
OUTPUT_ENV = "FRACLAYER_OUTPUT_DIR"

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NONCONVERGENCE = 4
EXIT_PARTIAL = 5

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {
        "command": "layer",
        "s": "0.5",
        "s_list": "0.7, 0.8, 0.9, 0.95",
        "output_dir": "",
        "seed": "0",
        "threads": "0",
        "prescale": "false",
        "strategy": "newton",
        "sides": "neumann",
    },
    "nonlinearity": {"name": "cubic"},
    "mesh": {"X": "60", "Y": "40", "nx": "2048", "ny": "256", "grading": "auto"},
    "tolerances": {
        "newton": "1e-10",
        "identity": "2e-2",
        "modica": "1e-3",
        "sweep_slack": "0.1",
        "split": "0.2",
        "window": "5.0",
        "radial_slope": "0.1",
    },
    "eval": {"function": "bump", "k": "1", "N": "2048", "L": "40", "input": "", "pad_factor": "8"},
    "radial": {"n": "2", "nonlinearity": "ground_state", "p": "2", "X": "30", "Y": "30", "nx": "512", "ny": "256"},
    "properties": {
        "fixtures": "100",
        "harnack_trials": "20",
        "harnack_stability": "0.05",
        "duality_order": "0.9",
        "force_violation": "false",
    },
}


# ------------------------------------------------------------------ configuration


@dataclass
class RunConfig:
    """Validated run parameters (the raw sections are kept for write-back)."""

    command: str
    s: float
    s_list: tuple[float, ...]
    nonlinearity: str
    nl_params: dict
    mesh: dict
    tolerances: dict
    output_dir: Path
    seed: int
    threads: int
    prescale: bool
    strategy: str
    sides: str
    eval: dict = field(default_factory=dict)
    radial: dict = field(default_factory=dict)
    properties: dict = field(default_factory=dict)
    raw: configparser.ConfigParser | None = None

    def order(self, s: float | None = None, n: int = 1) -> FracOrder:
        return FracOrder(self.s if s is None else s, n)

    def layer_mesh(self, order: FracOrder) -> HalfStripMesh:
        m = self.mesh
        return HalfStripMesh.for_order(order, m["X"], m["Y"], m["nx"], m["ny"], m["grading"])

    def write_resolved(self, path: Path) -> None:
        buf = io.StringIO()
        self.raw.write(buf)
        path.write_text(buf.getvalue())


def _parser(path: str | Path | None, overrides: list[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep X / Y / N case
    cp.read_dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not (sep and dot and section and name):
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())
    return cp


def _float(cp, section, key) -> float:
    raw = cp.get(section, key)
    try:
        val = float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc
    if not math.isfinite(val):
        raise ConfigError(f"[{section}] {key} must be finite")
    return val


def _int(cp, section, key, minimum: int | None = None) -> int:
    raw = cp.get(section, key)
    try:
        val = int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer") from exc
    if minimum is not None and val < minimum:
        raise ConfigError(f"[{section}] {key} must be >= {minimum}, got {val}")
    return val


def _bool(cp, section, key) -> bool:
    try:
        return cp.getboolean(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} is not a boolean") from exc


def _s_value(val: float, what: str) -> float:
    if not (0.0 < val < 1.0):
        raise ConfigError(f"{what} must lie in (0, 1), got {val}")
    return val


def load_config(
    path: str | Path | None = None,
    overrides: list[str] | None = None,
    *,
    command: str | None = None,
    output_dir: str | Path | None = None,
) -> RunConfig:
    """Defaults, then the file, then overrides, then the explicit arguments."""
    cp = _parser(path, list(overrides or []))
    if command is not None:
        cp.set("run", "command", command)
    cmd = cp.get("run", "command").strip()
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; choose from {', '.join(COMMANDS)}")
    if output_dir is not None:
        cp.set("run", "output_dir", str(output_dir))
    out = cp.get("run", "output_dir").strip() or os.environ.get(OUTPUT_ENV, "") or "fraclayer_out"
    cp.set("run", "output_dir", out)

    s = _s_value(_float(cp, "run", "s"), "s")
    try:
        s_list = tuple(float(t) for t in cp.get("run", "s_list").replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError("s_list must be a list of numbers") from exc
    if not s_list:
        raise ConfigError("s_list is empty")
    for v in s_list:
        _s_value(v, "every s in s_list")
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise ConfigError("s_list must be strictly ascending")

    mesh = {
        "X": _float(cp, "mesh", "X"),
        "Y": _float(cp, "mesh", "Y"),
        "nx": _int(cp, "mesh", "nx", 8),
        "ny": _int(cp, "mesh", "ny", 8),
    }
    if mesh["X"] <= 0 or mesh["Y"] <= 0:
        raise ConfigError("mesh X and Y must be positive")
    g = cp.get("mesh", "grading").strip().lower()
    mesh["grading"] = None if g in ("", "auto") else _float(cp, "mesh", "grading")
    if mesh["grading"] is not None and mesh["grading"] < 1:
        raise ConfigError("mesh grading must be >= 1")

    tol = {k: _float(cp, "tolerances", k) for k in cp["tolerances"]}
    for k, v in tol.items():
        if v < 0:
            raise ConfigError(f"tolerance {k} must be nonnegative")

    nl_section = dict(cp["nonlinearity"])
    name = nl_section.pop("name").strip()
    nl_params = {}
    for k, v in nl_section.items():
        try:
            nl_params[k] = float(v)
        except ValueError as exc:
            raise ConfigError(f"[nonlinearity] {k} must be numeric") from exc

    try:
        make_nonlinearity(name, **nl_params)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"[nonlinearity] {exc}") from exc

    strategy = cp.get("run", "strategy").strip()
    if strategy not in ("newton", "gradient_flow"):
        raise ConfigError(f"unknown strategy {strategy!r}")
    sides = cp.get("run", "sides").strip()
    if sides not in ("neumann", "dirichlet"):
        raise ConfigError(f"unknown side condition {sides!r}")

    ev = {
        "function": cp.get("eval", "function").strip(),
        "k": _float(cp, "eval", "k"),
        "N": _int(cp, "eval", "N", 16),
        "L": _float(cp, "eval", "L"),
        "input": cp.get("eval", "input").strip(),
        "pad_factor": _int(cp, "eval", "pad_factor", 1),
    }
    if ev["function"] not in ("cos", "arctan", "bump", "constant", "file"):
        raise ConfigError(f"unknown eval function {ev['function']!r}")
    if ev["function"] == "file" and not ev["input"]:
        raise ConfigError("eval function 'file' needs [eval] input")
    if ev["L"] <= 0:
        raise ConfigError("[eval] L must be positive")

    rad = {
        "n": _int(cp, "radial", "n", 1),
        "nonlinearity": cp.get("radial", "nonlinearity").strip(),
        "p": _float(cp, "radial", "p"),
        "X": _float(cp, "radial", "X"),
        "Y": _float(cp, "radial", "Y"),
        "nx": _int(cp, "radial", "nx", 8),
        "ny": _int(cp, "radial", "ny", 8),
    }
    if cmd == "radial" and rad["n"] < 2:
        raise ConfigError("radial runs need n >= 2")

    props = {
        "fixtures": _int(cp, "properties", "fixtures", 1),
        "harnack_trials": _int(cp, "properties", "harnack_trials", 1),
        "harnack_stability": _float(cp, "properties", "harnack_stability"),
        "duality_order": _float(cp, "properties", "duality_order"),
        "force_violation": _bool(cp, "properties", "force_violation"),
    }

    return RunConfig(
        command=cmd,
        s=s,
        s_list=s_list,
        nonlinearity=name,
        nl_params=nl_params,
        mesh=mesh,
        tolerances=tol,
        output_dir=Path(out),
        seed=_int(cp, "run", "seed", 0),
        threads=_int(cp, "run", "threads", 0),
        prescale=_bool(cp, "run", "prescale"),
        strategy=strategy,
        sides=sides,
        eval=ev,
        radial=rad,
        properties=props,
        raw=cp,
    )


# ------------------------------------------------------------------------ output


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python scalars."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"


def _write_csv(path: Path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _plotting():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "fraclayer"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()
    import matplotlib.pyplot as plt

    plt.close(fig)


# -------------------------------------------------------------------------- eval


def _eval_input(cfg: RunConfig) -> tuple[GridFunction, np.ndarray | None, str]:
    ev = cfg.eval
    s = cfg.s
    fn = ev["function"]
    N, L = ev["N"], ev["L"]
    if fn == "file":
        if not Path(ev["input"]).is_file():
            raise ConfigError(f"[eval] input {ev['input']} not found")
        return read_grid_csv(ev["input"]), None, "file"
    if fn == "cos":
        k = ev["k"]
        if k <= 0:
            raise ConfigError("[eval] k must be positive for the cosine mode")
        period = 2.0 * math.pi / k
        h = period / N
        x = h * np.arange(N)
        v = GridFunction(x0=0.0, h=h, values=np.cos(k * x), periodic=True)
        return v, k ** (2 * s) * np.cos(k * x), f"cos({k:g} x)"
    x = np.linspace(-L, L, N + 1)
    h = x[1] - x[0]
    if fn == "arctan":
        v = GridFunction(
            x0=-L, h=h, values=(2 / math.pi) * np.arctan(x), left_asymptote=-1.0, right_asymptote=1.0, decay_power=1.0
        )
        exact = (2 / math.pi) * x / (1 + x**2) if s == 0.5 else None
        return v, exact, "(2/pi) arctan x"
    if fn == "bump":
        return GridFunction(x0=-L, h=h, values=np.exp(-(x**2))), None, "exp(-x^2)"
    return GridFunction(x0=-L, h=h, values=np.ones_like(x), left_asymptote=1.0, right_asymptote=1.0), np.zeros_like(x), "1"


def cmd_eval(cfg: RunConfig, out: Path) -> int:
    order = cfg.order()
    v, exact, label = _eval_input(cfg)
    pv = fraclap_pv(v, order)
    report: dict = {"command": "eval", "function": label, "s": cfg.s, "N": v.size, "h": v.h}
    four = None
    try:
        four = fraclap_fourier(v, order, pad_factor=cfg.eval["pad_factor"])
    except (GridError, DomainError) as exc:
        report["fourier"] = f"not applicable: {exc}"
    valid = pv.valid
    cols = [v.x, v.values, pv.values.values]
    header = ["x", "v", "pv"]
    pv_vals = pv.values.values
    scale = max(float(np.max(np.abs(pv_vals[valid]))), 1e-300)
    report["pv_tail_estimate"] = pv.tail_estimate
    if four is not None:
        fv = four.values.values
        cols.append(fv)
        header.append("fourier")
        # the comparison window is the inner half, away from truncation effects
        inner = valid & (np.abs(v.x - 0.5 * (v.x0 + v.x_end)) <= 0.25 * (v.x_end - v.x0))
        if v.periodic:
            inner = valid
        d = np.abs(pv_vals - fv)[inner]
        report["agreement_sup"] = float(d.max())
        report["agreement_relative"] = float(d.max() / scale)
    if exact is not None:
        cols.append(exact)
        header.append("exact")
        report["pv_error_sup"] = float(np.max(np.abs(pv_vals - exact)[valid]))
        if four is not None:
            report["fourier_error_sup"] = float(np.max(np.abs(four.values.values - exact)))
    if cfg.eval["function"] == "arctan" and cfg.s == 0.5:
        res = nonlocal_residual(v, make_nonlinearity("sine_pi"), order)
        report["layer_residual_sup"] = float(np.nanmax(np.abs(res.values)))
    _write_csv(out / "operator.csv", header, cols)
    _write_json(out / "eval_report.json", report)
    return EXIT_OK


# ------------------------------------------------------------------------- layer


def _nonlinearity(cfg: RunConfig, order: FracOrder, name: str | None = None, params: dict | None = None):
    base = make_nonlinearity(name or cfg.nonlinearity, **(cfg.nl_params if params is None else params))
    if cfg.prescale:
        # divide by d_s / (1+a) so the trace solves (-Delta)^s v = f(v) exactly
        return base.scaled(1.0 / order.boundary_scale)
    return base


def _necessary_report(nl) -> dict:
    nec = check_necessary_conditions(nl)
    return {
        "nec1_pass": nec.nec1_pass,
        "nec2_pass": nec.nec2_pass,
        "failing": list(nec.failing),
        "integral_f": nec.integral_f,
        "f_at_plus1": nec.f_at_plus1,
        "f_at_minus1": nec.f_at_minus1,
        "min_gap": nec.min_gap,
        "g_asymmetry": nec.g_asymmetry,
    }


def _layer_bundle(cfg: RunConfig, sol, nl, out: Path, plots: bool = True) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    mesh = sol.mesh
    x = mesh.x
    v = sol.trace.values
    try:
        ode = solve_ode_layer(nl, x).values
    except (DomainError, ConvergenceError):
        ode = np.full_like(x, np.nan)
    _write_csv(out / "trace.csv", ["x", "v", "ode_layer"], [x, v, ode])

    prof = hamiltonian_profile(sol.field, sol.order)
    ident = verify_identity(sol, nl)
    mod = verify_modica(sol, nl)
    gap = np.asarray(nl.G(v)) - nl.g_ref
    _write_csv(
        out / "hamiltonian.csv",
        ["x", "H", "G_gap", "margin_min_y", "tail_bound", "x_part", "y_part"],
        [x, prof.H, gap, mod.margin_min_y, prof.tail_bound, prof.x_part, prof.y_part],
    )
    sx = max(1, mesh.nx // 128)
    sy = max(1, mesh.ny // 64)
    X, Yg = np.meshgrid(x[::sx], mesh.y[::sy], indexing="ij")
    _write_csv(
        out / "modica.csv", ["x", "y", "margin"], [X.ravel(), Yg.ravel(), mod.margin[::sx, ::sy].ravel()]
    )
    nec = _necessary_report(nl)
    _write_json(out / "necessary.json", nec)

    tol = cfg.tolerances
    id_ok = ident.max_residual <= tol["identity"] * ident.gap_scale
    mod_ok = mod.passed(tol["modica"])
    summary = {
        "s": sol.order.s,
        "a": sol.order.a,
        "nonlinearity": nl.name,
        "prescale": cfg.prescale,
        "mesh": mesh.to_dict(),
        "sides": sol.field.meta.get("sides"),
        "monotone": sol.is_monotone(),
        "end_values": list(sol.end_values()),
        "newton_iterations": sol.stats.iterations,
        "boundary_residual": sol.stats.residual_norm,
        "interior_residual": sol.stats.interior_residual,
        "identity": {
            "max_residual": ident.max_residual,
            "relative": ident.relative,
            "spread": ident.spread,
            "g_asymmetry": ident.g_asymmetry,
            "tolerance_relative": tol["identity"],
            "pass": id_ok,
        },
        "modica": {
            "min_margin": mod.min_margin,
            "min_margin_core": mod.min_margin_core,
            "gap_scale": mod.gap_scale,
            "core": mod.core,
            "core_height": mod.core_height,
            "tolerance_relative": tol["modica"],
            "pass": mod_ok,
        },
        "ode_error_window": float(np.nanmax(np.abs(v - ode)[np.abs(x) <= tol["window"]])),
        "necessary": nec,
    }
    _write_json(out / "summary.json", summary)
    if plots:
        _layer_plots(out, x, v, ode, prof.H, gap, mesh, mod.margin, sol.order.s)
    return summary


def _layer_plots(out: Path, x, v, ode, H, gap, mesh, margin, s) -> None:
    plt = _plotting()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, v, label=f"trace, s={s:g}")
    if np.all(np.isfinite(ode)):
        ax.plot(x, ode, "--", label="classical layer")
    ax.set_xlabel("x")
    ax.set_ylabel("v")
    ax.legend()
    _save_svg(fig, out / "trace.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, H, label="H(x)")
    ax.plot(x, gap, "--", label="G(v) - G(1)")
    ax.set_xlabel("x")
    ax.legend()
    _save_svg(fig, out / "hamiltonian.svg")

    # heat strip resampled to a coarse uniform grid (embedded as one image)
    fig, ax = plt.subplots(figsize=(6, 3))
    stride = max(1, mesh.nx // 256)
    ys = np.linspace(0.0, 0.5 * mesh.Y, 64)
    strip = np.array([np.interp(ys, mesh.y, row) for row in margin[::stride]])
    im = ax.imshow(strip.T, origin="lower", aspect="auto", extent=(x[0], x[-1], ys[0], ys[-1]))
    fig.colorbar(im, ax=ax, label="margin")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    _save_svg(fig, out / "modica.svg")


def _diagnostics(out: Path, exc: ConvergenceError, extra: dict | None = None) -> None:
    info = dict(extra or {})
    info["message"] = str(exc)
    stats = exc.info.get("stats")
    if stats is None and "solution" in exc.info:
        stats = exc.info["solution"].stats
    if stats is not None:
        info["iterations"] = stats.iterations
        info["boundary_residual"] = stats.residual_norm
        info["history"] = list(stats.history)
    _write_json(out / "diagnostics.json", info)


def cmd_layer(cfg: RunConfig, out: Path) -> int:
    order = cfg.order()
    nl = _nonlinearity(cfg, order)
    mesh = cfg.layer_mesh(order)
    try:
        sol = solve_layer(nl, order, mesh, sides=cfg.sides, strategy=cfg.strategy, tol=cfg.tolerances["newton"])
    except ConvergenceError as exc:
        _diagnostics(out, exc, {"s": cfg.s, "nonlinearity": nl.name, "necessary": _necessary_report(nl)})
        return EXIT_NONCONVERGENCE
    _layer_bundle(cfg, sol, nl, out)
    return EXIT_OK


# ------------------------------------------------------------------------- sweep


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    s_list = cfg.s_list
    base = make_nonlinearity(cfg.nonlinearity, **cfg.nl_params)
    nec = _necessary_report(base)
    warnings = []
    if not (nec["nec1_pass"] and nec["nec2_pass"]):
        warnings.append(
            f"nonlinearity fails {', '.join(nec['failing'])}: no layer exists, the sweep is expected to fail"
        )
        print(f"warning: {warnings[-1]}", file=sys.stderr)
    if cfg.prescale:
        # a different scale per s; solve one s at a time with warm starts
        layers, errors, failure, init = [], [], None, None
        for s in s_list:
            order = cfg.order(s)
            nl = _nonlinearity(cfg, order)
            try:
                sol = solve_layer(nl, order, cfg.layer_mesh(order), init=init, sides=cfg.sides,
                                  strategy=cfg.strategy, tol=cfg.tolerances["newton"])
            except (ConvergenceError, DomainError) as exc:
                failure = f"s={s}: {exc}"
                break
            ode = solve_ode_layer(nl, sol.mesh.x).values
            sel = np.abs(sol.mesh.x) <= cfg.tolerances["window"]
            errors.append(float(np.max(np.abs(sol.trace.values - ode)[sel])))
            layers.append((sol, nl))
            init = sol.trace
        done = [L.order.s for L, _ in layers]
    else:
        try:
            res = continuation_in_s(
                base, s_list, lambda o: cfg.layer_mesh(o), window=cfg.tolerances["window"],
                sides=cfg.sides, strategy=cfg.strategy,
            )
        except DomainError as exc:
            res = None
            failure, layers, errors, done = str(exc), [], [], []
        if res is not None:
            failure = res.failure
            layers = [(L, base) for L in res.layers]
            errors = list(res.errors)
            done = list(res.s_values)

    rows = []
    for (sol, nl), err in zip(layers, errors):
        sub = out / f"s_{sol.order.s:.4f}"
        summ = _layer_bundle(cfg, sol, nl, sub)
        prof = hamiltonian_profile(sol.field, sol.order)
        x = sol.mesh.x
        rows.append({
            "s": sol.order.s,
            "sup_error": err,
            "x_part_x0": float(np.interp(0.0, x, prof.x_part)),
            "y_part_x0": float(np.interp(0.0, x, prof.y_part)),
            "y_part_x1": float(np.interp(1.0, x, prof.y_part)),
            "identity_relative": summ["identity"]["relative"],
        })
    if rows:
        keys = ["s", "sup_error", "x_part_x0", "y_part_x0", "y_part_x1", "identity_relative"]
        _write_csv(out / "convergence.csv", keys, [[r[k] for r in rows] for k in keys])
    slack = cfg.tolerances["sweep_slack"]
    errs = [e for s, e in zip(done, errors) if s >= 0.7]
    decreasing = all(b <= (1 + slack) * a for a, b in zip(errs, errs[1:])) if len(errs) > 1 else None
    split = None
    late = [(L, nl) for L, nl in layers if L.order.s >= 0.7]
    if len(late) >= 3:
        rep = s_limit_split([L for L, _ in late], [0.0, 1.0], late[-1][1], rel_tol=cfg.tolerances["split"])
        split = {
            "s_values": list(rep.s_values),
            "x_probe": list(rep.x_probe),
            "x_part": rep.x_part,
            "y_part": rep.y_part,
            "target": rep.target,
            "y_decreasing": rep.y_decreasing,
            "x_close": rep.x_close,
            "pass": rep.passed,
        }
    complete = failure is None and len(done) == len(s_list)
    _write_json(out / "sweep.json", {
        "command": "sweep",
        "s_list": list(s_list),
        "completed": done,
        "complete": complete,
        "failure": failure,
        "warnings": warnings,
        "necessary": nec,
        "rows": rows,
        "errors_decreasing": decreasing,
        "slack": slack,
        "s_limit_split": split,
    })
    if len(rows) >= 2:
        plt = _plotting()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.semilogy([r["s"] for r in rows], [r["sup_error"] for r in rows], "o-")
        ax.set_xlabel("s")
        ax.set_ylabel("sup error to classical layer")
        _save_svg(fig, out / "convergence.svg")
    return EXIT_OK if complete else EXIT_PARTIAL


# ------------------------------------------------------------------------ radial


def _radial_mesh(cfg: RunConfig, order: FracOrder) -> HalfStripMesh:
    r = cfg.radial
    return HalfStripMesh.for_order(order, r["X"], r["Y"], r["nx"], r["ny"], cfg.mesh["grading"], radial=True)


def cmd_radial(cfg: RunConfig, out: Path) -> int:
    r = cfg.radial
    n = r["n"]
    order = FracOrder(cfg.s, n)
    params = {"p": r["p"]} if r["nonlinearity"] == "ground_state" else {}
    nl = _nonlinearity(cfg, order, r["nonlinearity"], params)
    mesh = _radial_mesh(cfg, order)
    report: dict = {"command": "radial", "s": cfg.s, "n": n, "nonlinearity": nl.name, "mesh": mesh.to_dict()}

    # the constant solution u = 0 always has a constant profile
    zero = RadialSolution(
        GridFunction(x0=0.0, h=mesh.hx, values=np.zeros(mesh.nx + 1)),
        HalfStripField(mesh, np.zeros(mesh.shape)),
        order, n, "trivial",
    )
    zh = radial_hamiltonian(zero, nl)
    report["zero_solution"] = {
        "monotone_pass": zh.monotone_pass,
        "profile_constant": bool(np.ptp(zh.profile) <= 1e-14 * max(1.0, abs(float(zh.profile[0])))),
        "value": float(zh.profile[0]),
    }

    try:
        rad = solve_radial(nl, order, n, mesh, tol=cfg.tolerances["newton"])
    except ConvergenceError as exc:
        report["status"] = "not exercised"
        report["reason"] = f"no solution converged: {exc}"
        rad = None
    except DomainError as exc:
        report["status"] = "not exercised"
        report["reason"] = str(exc)
        rad = None
    if rad is not None and not rad.nonconstant:
        report["status"] = "not exercised"
        report["reason"] = "solver converged to the zero solution"
    if rad is not None and rad.nonconstant:
        rh = radial_hamiltonian(rad, nl)
        v = rad.profile.values
        G0 = float(nl.G(np.array(0.0)))
        Gv0 = float(nl.G(np.array(v[0])))
        decreasing = rad.is_decreasing()
        fp0 = float(nl.fprime(np.array(0.0)))
        report.update({
            "status": "nonconstant",
            "v0": float(v[0]),
            "monotone_pass": rh.monotone_pass,
            "slope_error": rh.slope_error,
            "slope_pass": rh.slope_error <= cfg.tolerances["radial_slope"],
            "G0": G0,
            "G_v0": Gv0,
            "G0_exceeds_G_v0": G0 > Gv0,
            "profile_decreasing": decreasing,
            "fprime0": fp0,
            "fprime0_nonpositive": (fp0 <= 0) if decreasing else None,
            "stats": {"iterations": rad.stats.iterations, "boundary_residual": rad.stats.residual_norm},
        })
        _write_csv(out / "radial_profile.csv", ["r", "v", "hamiltonian"], [mesh.x, v, rh.profile])
        plt = _plotting()
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
        a1.plot(mesh.x, v)
        a1.set_xlabel("r")
        a1.set_ylabel("v")
        a2.plot(mesh.x, rh.profile)
        a2.set_xlabel("r")
        a2.set_ylabel("radial Hamiltonian")
        _save_svg(fig, out / "radial.svg")
    _write_json(out / "radial.json", report)
    checks = [report["zero_solution"]["monotone_pass"], report["zero_solution"]["profile_constant"]]
    if report["status"] == "nonconstant":
        checks += [report["monotone_pass"], report["slope_pass"], report["G0_exceeds_G_v0"]]
        if report["fprime0_nonpositive"] is not None:
            checks.append(report["fprime0_nonpositive"])
    return EXIT_OK if all(checks) else EXIT_PROPERTY


# -------------------------------------------------------------------- properties


def _suite_max_principle(cfg: RunConfig, rng: np.random.Generator) -> dict:
    count = cfg.properties["fixtures"]
    fails, worst = [], 0.0
    for k in range(count):
        s = float(rng.uniform(0.1, 0.9))
        m = HalfStripMesh.for_order(FracOrder(s), 4.0, 4.0, 32, 16)
        b = np.maximum(0.0, rng.normal(size=m.nx + 1))
        data = StripData(
            bottom=b,
            left=np.abs(rng.normal(size=m.ny + 1)),
            right=np.abs(rng.normal(size=m.ny + 1)),
            top=np.maximum(0.0, rng.normal(size=m.nx + 1)),
        )
        if cfg.properties["force_violation"] and k == 0:
            # deliberately broken fixture: negative bottom data
            data = StripData(bottom=b - 1.0, left=data.left, right=data.right, top=data.top)
        u, _ = solve_dirichlet(m, data)
        rep = check_max_principle(u)
        worst = min(worst, rep.min_interior)
        if not rep.passed:
            fails.append({"fixture": k, "s": s, "min_interior": rep.min_interior})
    return {"name": "max_principle", "count": count, "failures": len(fails), "worst": worst,
            "details": fails, "passed": not fails}


def _suite_comparison(rng: np.random.Generator, count: int = 10) -> dict:
    fails = 0
    for _ in range(count):
        m = HalfStripMesh.for_order(FracOrder(float(rng.uniform(0.1, 0.9))), 4.0, 4.0, 32, 16)
        parts = [rng.normal(size=sz) for sz in (m.nx + 1, m.ny + 1, m.ny + 1, m.nx + 1)]
        bumps = [np.abs(rng.normal(size=p.size)) for p in parts]
        u1, _ = solve_dirichlet(m, StripData(*parts))
        u2, _ = solve_dirichlet(m, StripData(*[p + q for p, q in zip(parts, bumps)]))
        if np.min(u2.values - u1.values) < -1e-12:
            fails += 1
    return {"name": "comparison", "count": count, "failures": fails, "passed": fails == 0}


def _suite_duality(cfg: RunConfig) -> dict:
    rows, ok = [], True
    for s in (0.3, 0.5, 0.7):
        order = FracOrder(s)
        res = []
        for nx, ny in ((64, 32), (128, 64), (256, 128)):
            m = HalfStripMesh.for_order(order, 4.0, 4.0, nx, ny)
            u, _ = solve_dirichlet(m, StripData(bottom=np.exp(-m.x**2), left=0.0, right=0.0, top=0.0))
            res.append(duality_residual(dual_conjugate(u)))
        rates = [math.log2(a / b) for a, b in zip(res, res[1:])]
        good = all(r >= cfg.properties["duality_order"] for r in rates)
        ok = ok and good
        rows.append({"s": s, "residuals": res, "rates": rates, "passed": good})
    return {"name": "duality", "count": len(rows), "failures": sum(not r["passed"] for r in rows),
            "details": rows, "passed": ok}


def _suite_hopf() -> dict:
    rows = []
    for s in (0.3, 0.5, 0.7):
        m = HalfStripMesh.for_order(FracOrder(s), 1.0, 1.0, 64, 64)
        barrier = check_hopf(hopf_barrier(m), m.nx // 2, region_height=1.0)
        u, _ = solve_dirichlet(m, StripData(bottom=m.x**2, left=1.0, right=1.0, top=1.0))
        solver = check_hopf(u, m.nx // 2)
        rows.append({"s": s, "barrier_flux": barrier, "solver_flux": solver,
                     "passed": barrier < 0 and solver < 0})
    return {"name": "hopf", "count": len(rows), "failures": sum(not r["passed"] for r in rows),
            "details": rows, "passed": all(r["passed"] for r in rows)}


def _suite_harnack(cfg: RunConfig) -> dict:
    trials = cfg.properties["harnack_trials"]
    stab = cfg.properties["harnack_stability"]
    rows = []
    for a in (-0.5, 0.0, 0.5):
        order = FracOrder((1.0 - a) / 2.0)
        coarse = estimate_harnack(order, trials, seed=cfg.seed, resolution=8)
        fine = estimate_harnack(order, trials, seed=cfg.seed, resolution=16)
        change = abs(fine - coarse) / fine
        row = {"a": a, "ratio_coarse": coarse, "ratio_fine": fine, "relative_change": change,
               "passed": math.isfinite(fine) and change <= stab}
        if a == 0.0:
            # Neumann reflection makes phi harmonic in B_4; classical bound ((4+1)/(4-1))^2
            classical = estimate_harnack(order, trials, seed=cfg.seed, resolution=16, d_bound=0.0)
            row["classical_ratio"] = classical
            row["classical_bound"] = 25.0 / 9.0
            row["passed"] = row["passed"] and classical <= 25.0 / 9.0
        rows.append(row)
    return {"name": "harnack", "count": len(rows), "failures": sum(not r["passed"] for r in rows),
            "details": rows, "passed": all(r["passed"] for r in rows)}


def _suite_energy_descent() -> dict:
    nl = make_nonlinearity("cubic")
    rows = []
    for s in (0.5, 0.7):
        order = FracOrder(s)
        m = HalfStripMesh.for_order(order, 30.0, 30.0, 128, 64)
        sol = solve_layer(nl, order, m, strategy="gradient_flow", tol=1e-8)
        drops = np.asarray(sol.stats.decrements)
        rows.append({"s": s, "iterations": sol.stats.iterations, "max_decrement": float(drops.max()),
                     "passed": bool(drops.size > 0 and np.all(drops < 0))})
    return {"name": "energy_descent", "count": len(rows), "failures": sum(not r["passed"] for r in rows),
            "details": rows, "passed": all(r["passed"] for r in rows)}


def cmd_properties(cfg: RunConfig, out: Path) -> int:
    rng = np.random.default_rng(cfg.seed)
    suites = [
        _suite_max_principle(cfg, rng),
        _suite_comparison(rng),
        _suite_duality(cfg),
        _suite_hopf(),
        _suite_harnack(cfg),
        _suite_energy_descent(),
    ]
    passed = all(s["passed"] for s in suites)
    _write_json(out / "properties.json", {"command": "properties", "seed": cfg.seed, "suites": suites,
                                          "passed": passed})
    lines = ["suite,count,failures,passed"] + [
        f"{s['name']},{s['count']},{s['failures']},{int(s['passed'])}" for s in suites
    ]
    (out / "properties.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK if passed else EXIT_PROPERTY


# -------------------------------------------------------------------------- main

_DRIVERS = {
    "eval": cmd_eval,
    "layer": cmd_layer,
    "sweep": cmd_sweep,
    "radial": cmd_radial,
    "properties": cmd_properties,
}


def _limits(threads: int):
    if threads <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the exit code."""
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    cfg.write_resolved(out / "config.resolved.ini")
    with _limits(cfg.threads):
        return _DRIVERS[cfg.command](cfg, out)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="fraclayer", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("-c", "--config", help="INI configuration file")
    ap.add_argument("-o", "--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./fraclayer_out)")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override a configuration entry (repeatable)")
    ap.add_argument("--prescale", action="store_true",
                    help="divide f by d_s/(1+a) so the trace solves (-Delta)^s v = f(v)")
    args = ap.parse_args(argv)
    overrides = list(args.set)
    if args.prescale:
        overrides.append("run.prescale=true")
    try:
        cfg = load_config(args.config, overrides, command=args.command, output_dir=args.output_dir)
        code = run(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DomainError, GridError, TailError, PreconditionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

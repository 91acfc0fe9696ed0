"""Batch front door: ``ldps run --config exp.ini`` and ``ldps presets``.

The config is an INI file with sections ``model``, ``grid``, ``noise``,
``task`` and ``output``.  Every run writes ``manifest.json`` (also on failure),
``result.json``, ``summary.txt`` and task-specific tables.  Exit status is 0
when every acceptance flag holds, 2 when one fails and 1 on error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .grid import Control, GridSpec
from .io import dumps, write_binary, write_dat, write_grid_csv, write_json, write_table_csv
from .kernel import heat_kernel, verify_assumption4
from .noise import BasisSpec, assemble_sheet_spectral, sample_iid_bm, sample_sheet_direct
from .presets import SPDE_PRESETS, get_preset, list_presets
from .skeleton import PicardConfig, convergence_sweep, solve_skeleton, write_sweep_csv
from .solver import FdModel, solve_controlled_spde, solve_ensemble

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
TASKS = ("sample-noise", "solve-spde", "skeleton", "rate", "verify-representation",
         "verify-laplace", "girsanov-check", "verify-kernel", "sweep-theorem12")
FORMATS = ("json", "csv", "dat", "bin")


class ConfigError(ValueError):
    pass


class TaskFailed(RuntimeError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def _words(text: str) -> tuple:
    return tuple(p for p in re.split(r"[,\s]+", text.strip()) if p)


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default); None default means "required or task-specific"
SCHEMA = {
    "model": {
        "preset": (str, None),
        "kernel_modes": (int, None),  # default n_x - 1
        "initial": (str, "sine"),
        "x0_amplitude": (float, 1.0),
        "x0_mode": (int, 1),
    },
    "grid": {
        "t": (float, 1.0),
        "n_t": (int, 100),
        "n_x": (int, 32),
    },
    "noise": {
        "seed": (int, None),
        "n_modes": (int, 32),
        "construction": (str, "direct"),
    },
    "task": {
        "name": (str, None),
        "eps": (float, None),
        "eps_list": (_floats, None),
        "n_mc": (int, None),
        "n_seeds": (int, 200),
        "sample_index": (int, 0),
        "control_amplitude": (float, None),
        "control_mode": (int, 1),
        "target": (str, None),
        "target_amplitude": (float, None),
        "cap": (float, 4.0),
        "dim": (int, 1),
        "n_steps": (int, 4),
        "n_controls": (int, 41),
        "gh_order": (int, 16),
        "sheet": (_bool, False),
        "tol": (float, None),
        "alpha": (float, 0.2),
        "n_lags": (int, 12),
        "picard_max_iters": (int, 200),
        "picard_tol": (float, 1e-10),
        "method": (str, "quadrature"),
        "x0_list": (_floats, None),
        "bounds": (_floats, None),
    },
    "output": {
        "dir": (str, "out"),
        "formats": (_words, ("json", "csv")),
    },
}

# task-specific defaults for keys whose generic default is None
TASK_DEFAULTS = {
    "sample-noise": {},
    "solve-spde": {"eps": 0.1, "control_amplitude": 0.0},
    "skeleton": {"control_amplitude": 1.0, "tol": 1e-8},
    "rate": {"control_amplitude": 0.0, "target": "skeleton", "target_amplitude": 1.0},
    "verify-representation": {"tol": 2e-2, "n_mc": 200_000},
    "verify-laplace": {"eps_list": (0.1, 0.05, 0.02), "target_amplitude": 1.0, "tol": 0.05,
                       "n_mc": 10_000, "control_amplitude": 0.0},
    "girsanov-check": {"eps": 0.5, "n_mc": 10_000, "control_amplitude": 1.0},
    "verify-kernel": {},
    "sweep-theorem12": {"eps_list": (0.2, 0.1, 0.05, 0.025), "control_amplitude": 1.0},
}


@dataclass
class Config:
    path: str
    values: dict
    lines: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def where(self, section: str, key: str | None = None) -> str:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{line}" if line else self.path

    def fail(self, section: str, key: str | None, msg: str):
        label = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{self.where(section, key)}: {label}: {msg}")

    def canonical(self) -> dict:
        """Resolved settings that determine the results (output location excluded)."""
        out = {s: dict(v) for s, v in self.values.items()}
        out["output"] = {"formats": sorted(out["output"]["formats"])}
        return out


def _locate(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault((section, None), no)
            continue
        m = re.match(r"^([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def load_config(path) -> Config:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: key outside of any [section]") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0]
        bad = text.splitlines()[lineno - 1].strip()
        raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {bad!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: section [{exc.section}] repeated") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: [{exc.section}] {exc.option}: key repeated") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = Config(path, {}, _locate(text))
    for section in cp.sections():
        if section not in SCHEMA:
            cfg.fail(section, None, f"unknown section; expected one of {', '.join(SCHEMA)}")
    raw = {s: dict(cp[s]) if cp.has_section(s) else {} for s in SCHEMA}

    name = raw["task"].get("name")
    if name is None:
        cfg.fail("task", None, "missing required key 'name'")
    if name not in TASKS:
        cfg.fail("task", "name", f"unknown task {name!r}; expected one of {', '.join(TASKS)}")
    for section, spec in SCHEMA.items():
        vals = {}
        for key, text_val in raw[section].items():
            if key not in spec:
                cfg.fail(section, key, "unknown key")
            parser, _ = spec[key]
            try:
                vals[key] = parser(text_val)
            except ValueError:
                cfg.fail(section, key, f"cannot parse {text_val!r} as {getattr(parser, '__name__', 'value').lstrip('_')}")
        for key, (_, default) in spec.items():
            if key not in vals:
                if section == "task" and key in TASK_DEFAULTS[name]:
                    vals[key] = TASK_DEFAULTS[name][key]
                else:
                    vals[key] = default
        cfg.values[section] = vals
    if cfg.values["model"]["preset"] is None:
        cfg.fail("model", None, "missing required key 'preset'")
    _validate(cfg)
    return cfg


def _validate(cfg: Config) -> None:
    m, g, n, t, o = (cfg.values[s] for s in ("model", "grid", "noise", "task", "output"))
    for key in ("n_t", "n_x"):
        if g[key] < 1:
            cfg.fail("grid", key, "must be >= 1")
    try:
        get_preset(m["preset"])
    except KeyError as exc:
        cfg.fail("model", "preset", exc.args[0])
    if m["initial"] not in ("zero", "sine", "constant"):
        cfg.fail("model", "initial", "expected zero, sine or constant")
    if m["kernel_modes"] is None:
        m["kernel_modes"] = max(g["n_x"] - 1, 1)
    if m["kernel_modes"] < 1:
        cfg.fail("model", "kernel_modes", "must be >= 1")
    if not g["t"] > 0:
        cfg.fail("grid", "t", "horizon must be positive")
    if n["construction"] not in ("direct", "spectral"):
        cfg.fail("noise", "construction", "expected direct or spectral")
    if n["seed"] is not None and not 0 <= n["seed"] < 2**64:
        cfg.fail("noise", "seed", "must be a non-negative 64-bit integer")
    if t["eps"] is not None and t["eps"] < 0:
        cfg.fail("task", "eps", "must be >= 0")
    if t["eps_list"] is not None:
        e = t["eps_list"]
        if not e or any(b >= a for a, b in zip(e, e[1:])) or min(e) < 0:
            cfg.fail("task", "eps_list", "must be non-empty, non-negative and strictly decreasing")
    for key in ("n_mc", "n_seeds", "n_steps", "n_controls", "gh_order", "dim"):
        if t[key] is not None and t[key] < 1:
            cfg.fail("task", key, "must be >= 1")
    if t["method"] not in ("quadrature", "mc"):
        cfg.fail("task", "method", "expected quadrature or mc")
    if t["bounds"] is not None and (len(t["bounds"]) != 2 or t["bounds"][0] >= t["bounds"][1]):
        cfg.fail("task", "bounds", "expected two increasing numbers")
    bad = set(o["formats"]) - set(FORMATS)
    if bad:
        cfg.fail("output", "formats", f"unknown format(s) {', '.join(sorted(bad))}")
    spde_only = {"solve-spde", "skeleton", "girsanov-check", "sweep-theorem12"}
    if t["name"] in spde_only and m["preset"] not in SPDE_PRESETS:
        cfg.fail("model", "preset", f"task {t['name']} needs an SPDE preset "
                 f"({', '.join(sorted(SPDE_PRESETS))})")


def resolve_seed(cli_seed: int | None, cfg: Config | None, environ=os.environ) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    if cfg is not None and cfg.values["noise"]["seed"] is not None:
        return int(cfg.values["noise"]["seed"])
    env = environ.get("LDPS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"LDPS_SEED={env!r} is not an integer") from None
    raise ConfigError("no seed given: set [noise] seed, pass --seed or export LDPS_SEED")


# ----------------------------------------------------------------------------- tasks


class Run:
    """Resolved experiment: config, seed, output directory and the files written."""

    def __init__(self, cfg: Config, seed: int, out: Path, threads: int):
        self.cfg, self.seed, self.out, self.threads = cfg, seed, out, threads
        self.files: list[str] = []
        g = cfg.values["grid"]
        self.grid = GridSpec(g["t"], g["n_t"], g["n_x"], seed)
        self.m = cfg.values["model"]
        self.t = cfg.values["task"]
        self.formats = set(cfg.values["output"]["formats"]) | {"json"}
        self.preset = get_preset(self.m["preset"])

    # -- output helpers
    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            write_table_csv(self.path(name), header, rows)

    def grid_csv(self, name, times, points, values, names):
        if "csv" in self.formats:
            write_grid_csv(self.path(name), times, points, values, names)

    def dat(self, name, x, y):
        if "dat" in self.formats:
            write_dat(self.path(name), x, y)

    def binary(self, name, data, n_modes=None):
        if "bin" in self.formats:
            write_binary(self.path(name), data, n_modes, self.seed)

    # -- model pieces
    @property
    def is_spde(self) -> bool:
        return not isinstance(self.preset, FdModel)

    def kernel(self):
        return heat_kernel(self.m["kernel_modes"])

    def x0(self):
        g, m = self.grid, self.m
        if m["initial"] == "zero":
            return np.zeros(g.n_x)
        if m["initial"] == "constant":
            return np.full(g.n_x, m["x0_amplitude"])
        return m["x0_amplitude"] * np.sqrt(2) * np.sin(m["x0_mode"] * np.pi * g.centers)

    def control(self, amplitude=None) -> Control:
        a = self.t["control_amplitude"] if amplitude is None else amplitude
        mode = self.t["control_mode"]
        if not a:
            return Control.zero(self.grid)
        return Control.from_function(
            self.grid, lambda s, r: a * np.sqrt(2) * np.sin(mode * np.pi * r) + 0 * s)


def task_sample_noise(run: Run) -> tuple[dict, dict]:
    g, n = run.grid, run.cfg.values["noise"]
    idx = run.t["sample_index"]
    if n["construction"] == "direct":
        sheet = sample_sheet_direct(g, run.seed, idx)
    else:
        bm = sample_iid_bm(g, n["n_modes"], run.seed, idx)
        sheet = assemble_sheet_spectral(bm, BasisSpec(n["n_modes"]), g)
    B = sheet.values
    run.grid_csv("noise.csv", g.times, g.edges, B, ("t", "x", "value"))
    run.binary("noise.bin", B, sheet.n_modes)
    run.dat("noise_terminal.dat", g.edges, B[-1])
    res = {"construction": n["construction"], "sample_index": idx, "n_modes": sheet.n_modes,
           "shape": list(B.shape), "sup": float(np.max(np.abs(B))),
           "terminal_corner": float(B[-1, -1]),
           "terminal_corner_variance": g.T * (g.domain[1] - g.domain[0])}
    return res, {}


def task_solve_spde(run: Run) -> tuple[dict, dict]:
    g = run.grid
    sheet = sample_sheet_direct(g, run.seed, run.t["sample_index"])
    u = run.control()
    X = solve_controlled_spde(run.kernel(), run.preset, run.t["eps"], run.x0(), sheet, u, g)
    run.grid_csv("field.csv", g.times, g.centers, X.values, ("t", "r", "value"))
    run.binary("field.bin", X.values, run.m["kernel_modes"])
    run.dat("field_terminal.dat", g.centers, X.final)
    res = {"eps": run.t["eps"], "sup_norm": X.sup_norm(),
           "holder_norm_0.2": X.holder_norm(0.2), "control_action": u.action,
           "terminal_mean": float(X.final.mean())}
    return res, {}


def task_skeleton(run: Run) -> tuple[dict, dict]:
    g, k, c = run.grid, run.kernel(), run.preset
    u = run.control()
    out = {}
    fields = {}
    for init in ("zero", "free"):
        cfg = PicardConfig(run.t["picard_max_iters"], run.t["picard_tol"], init)
        f, rep = solve_skeleton(k, c, run.x0(), u, cfg, g)
        fields[init] = f
        out[init] = {"iterations": rep.iterations, "final_gap": rep.final_gap,
                     "contraction_ratio": rep.contraction_ratio, "gaps": rep.gaps}
    dis = fields["zero"].distance(fields["free"])
    f = fields["zero"]
    run.grid_csv("skeleton.csv", g.times, g.centers, f.values, ("t", "r", "value"))
    run.csv("picard_gaps.csv", ["init", "iteration", "gap"],
            [(init, i + 1, gap) for init in out for i, gap in enumerate(out[init]["gaps"])])
    run.dat("picard_gaps.dat", np.arange(1, len(out["zero"]["gaps"]) + 1), out["zero"]["gaps"])
    res = {"disagreement": dis, "runs": out, "control_action": u.action, "sup_norm": f.sup_norm()}
    flags = {"disagreement_within_tol": dis <= run.t["tol"],
             "contraction_zero": 0 < out["zero"]["contraction_ratio"] < 1,
             "contraction_free": 0 < out["free"]["contraction_ratio"] < 1}
    return res, flags


def _ramp_closed_form(mu: float, amp: float, T: float) -> float:
    """``1/2 int (a' + mu a)^2`` for ``a(t) = amp t / T``."""
    return 0.5 * (amp / T) ** 2 * ((1 + mu * T) ** 3 - 1) / (3 * mu)


def task_rate(run: Run) -> tuple[dict, dict]:
    from .ldp.rate import RateOptions, minimum_action_fd, rate_function, rate_function_fd

    g, t = run.grid, run.t
    if not run.is_spde:
        m = run.preset
        x0 = run.m["x0_amplitude"] if run.m["initial"] == "constant" else 0.0
        if t["target"] not in ("linear", "skeleton"):
            run.cfg.fail("task", "target", "finite-dimensional presets accept linear or skeleton")
        slope = t["target_amplitude"] if t["target"] == "linear" else 0.0
        if t["target"] == "skeleton":
            f = np.array([[x0]])
            for _ in range(g.n_t):
                f = np.vstack([f, f[-1] + m.b(f[-1]) * g.dt])
        else:
            f = (x0 + slope * g.times)[:, None]
        closed = rate_function_fd(m, f, g.times)
        mam = minimum_action_fd(m, [x0], f, g.times)
        run.csv("control.csv", ["t", "u"], list(zip(g.times[:-1], mam.control[:, 0])))
        run.dat("control.dat", g.times[:-1], mam.control[:, 0])
        ref = closed.value
        rel = abs(mam.value - ref) / ref if ref > 0 else abs(mam.value - ref)
        res = {"target": t["target"], "value": mam.value, "mam": mam.to_dict(),
               "closed_form": ref, "relative_error": rel}
        tol = 0.01 if ref > 0 else 1e-6
        return res, {"converged": mam.converged, "matches_closed_form": rel <= tol}

    k, c = run.kernel(), run.preset
    x0 = run.x0()
    flags, extra = {}, {}
    if t["target"] == "skeleton":
        u = run.control()
        f, _ = solve_skeleton(k, c, x0, u, PicardConfig(tol=1e-12), g)
        f = f.values
        extra["bound"] = u.action
    elif t["target"] == "mode-ramp":
        if np.any(x0):
            run.cfg.fail("model", "initial", "target mode-ramp starts at zero; use initial = zero")
        mode = t["control_mode"]
        phi = BasisSpec(mode).phi(g.centers)[mode - 1]
        f = (t["target_amplitude"] * g.times / g.T)[:, None] * phi[None, :]
        if run.m["preset"] == "heat-linear":
            extra["closed_form"] = _ramp_closed_form(float(k.mu[mode - 1]), t["target_amplitude"], g.T)
    else:
        run.cfg.fail("task", "target", "SPDE presets accept skeleton or mode-ramp")
    r = rate_function(k, c, x0, f, RateOptions(), g)
    run.grid_csv("control.csv", g.times[:-1], g.centers, r.control, ("t", "r", "u"))
    run.dat("rate_history.dat", np.arange(len(r.history)), [h["residual"] for h in r.history])
    res = {"target": t["target"], "value": r.value, "mam": r.to_dict(), **extra}
    flags["converged"] = r.converged
    if "bound" in extra:
        if extra["bound"] == 0:
            flags["zero_cost"] = r.value <= 1e-6
        else:
            flags["within_feasible_bound"] = r.value <= extra["bound"] * (1 + 1e-3) + 1e-6
    if "closed_form" in extra:
        rel = abs(r.value - extra["closed_form"]) / extra["closed_form"]
        res["relative_error"] = rel
        flags["matches_closed_form"] = rel <= 0.02
    return res, flags


def task_verify_representation(run: Run) -> tuple[dict, dict]:
    from .ldp.representation import verify_representation, verify_representation_sheet

    t = run.t
    cap = t["cap"]
    f = lambda y: np.minimum(np.sum(np.asarray(y) ** 2, axis=-1), cap)
    bp = (-np.sqrt(cap), np.sqrt(cap))
    if t["sheet"]:
        r = verify_representation_sheet(f, run.grid, t["control_mode"], t["n_steps"], t["n_controls"],
                                        t["gh_order"], t["n_mc"], run.seed, bp)
        flags = {"gap_within_tol": r.gap <= t["tol"] + 4 * r.lhs_stderr}
    else:
        r = verify_representation(f, t["dim"], t["n_steps"], run.grid.T, t["n_controls"],
                                  t["gh_order"], t["n_mc"], run.seed, bp)
        flags = {"gap_within_tol": r.gap <= t["tol"] + 4 * r.lhs_stderr}
    run.csv("representation.csv", ["lhs", "rhs", "gap"], [(r.lhs, r.rhs, r.gap)])
    return r.to_dict() | {"tol": t["tol"]}, flags


def _fd_terminal_setup(m: FdModel, name: str, x0: float, T: float, t_grid):
    """Mean/variance factor of ``X(T)`` and the minimizing paths to each endpoint
    for the linear presets ``dX = -beta X dt + sqrt(eps) dW``."""
    beta = 0.0 if name == "fd-schilder" else 1.0
    if beta == 0:
        mean, var = x0, T
        shape = t_grid / T
        free = np.full_like(t_grid, x0)
    else:
        mean, var = x0 * np.exp(-beta * T), -np.expm1(-2 * beta * T) / (2 * beta)
        shape = np.sinh(beta * t_grid) / np.sinh(beta * T)
        free = x0 * np.exp(-beta * t_grid)

    def family(z):
        z = float(np.atleast_1d(z)[0])
        return (free + (z - mean) * shape)[:, None]

    return mean, var, family


def task_verify_laplace(run: Run) -> tuple[dict, dict]:
    from .ldp.laplace import (LaplaceEstimate, LaplaceSpec, gaussian_laplace_quadrature,
                              laplace_functional, log_mean_exp_estimate, verify_laplace)
    from .ldp.rate import RateOptions, rate_function, rate_function_fd

    g, t = run.grid, run.t
    cap, target, eps_list = t["cap"], t["target_amplitude"], t["eps_list"]
    if not run.is_spde:
        m = run.preset
        x0s = t["x0_list"] or ((run.m["x0_amplitude"] if run.m["initial"] == "constant" else 0.0),)
        h_terminal = lambda y: np.minimum((np.asarray(y) - target) ** 2, cap)
        h_det = lambda f: float(h_terminal(np.asarray(f)[-1, 0]))
        reports, rows = {}, []
        for x0 in x0s:
            mean, var, family = _fd_terminal_setup(m, run.m["preset"], x0, g.T, g.times)
            if t["method"] == "quadrature":
                ests = [LaplaceEstimate(e, gaussian_laplace_quadrature(
                    lambda y: float(h_terminal(mean + y)), e, var,
                    breakpoints=(target - mean - np.sqrt(cap), target - mean + np.sqrt(cap))), 0.0, 0)
                        for e in eps_list]
            else:
                from .noise import STREAM_AUX, standard_normals
                ests = []
                for e in eps_list:
                    y = mean + np.sqrt(e * var) * standard_normals(run.seed, STREAM_AUX, (), t["n_mc"])
                    v, se = log_mean_exp_estimate(h_terminal(y), e)
                    ests.append(LaplaceEstimate(e, v, se, t["n_mc"]))
            bounds = t["bounds"] or (min(mean, target) - 1.0, max(mean, target) + 1.0)
            rep = verify_laplace(ests, h_det, family, lambda f: rate_function_fd(m, f, g.times),
                                 bounds=bounds)
            reports[repr(float(x0))] = rep.to_dict()
            rows += [(float(x0), e, v, gap) for e, v, gap in zip(rep.eps, rep.values, rep.gaps)]
        max_gap = [max(r["gaps"][i] for r in reports.values()) for i in range(len(eps_list))]
        run.csv("laplace_gaps.csv", ["x0", "eps", "value", "gap"], rows)
        run.dat("laplace_gaps.dat", eps_list, max_gap)
        res = {"method": t["method"], "reports": reports, "max_gap": max_gap}
        flags = {"monotone": all(b < a for a, b in zip(max_gap, max_gap[1:])),
                 "final_gap_within_tol": max_gap[-1] <= t["tol"]}
        return res, flags

    k, c = run.kernel(), run.preset
    x0 = run.x0()
    mode = t["control_mode"]
    phi = BasisSpec(mode).phi(g.centers)[mode - 1]
    profile = target * phi
    dist = lambda XT: np.sum((np.asarray(XT) - profile) ** 2, axis=-1) * g.dx
    spec = LaplaceSpec(lambda X: dist(np.asarray(X)[..., -1, :]), eps_list, t["n_mc"], clip=cap)
    sampler = lambda e, n, seed: solve_ensemble(k, c, e, x0, g, seed, n, threads=run.threads)
    ests = laplace_functional(sampler, spec, run.seed)
    mu = float(k.mu[mode - 1])
    shape = Control.from_function(g, lambda s, r: np.exp(-mu * (g.T - s)) * np.sqrt(2)
                                  * np.sin(mode * np.pi * r))

    def family(z):
        f, _ = solve_skeleton(k, c, x0, shape.scaled(float(np.atleast_1d(z)[0])),
                              PicardConfig(tol=1e-12), g)
        return f

    h_det = lambda f: float(min(dist(f.final), cap))
    rate = lambda f: rate_function(k, c, x0, f, RateOptions())
    bounds = t["bounds"] or (-4 * abs(target) * mu - 1, 4 * abs(target) * mu + 1)
    rep = verify_laplace(ests, h_det, family, rate, bounds=bounds)
    run.csv("laplace_gaps.csv", ["eps", "value", "stderr", "gap"],
            [(e.eps, e.value, e.stderr, gap) for e, gap in zip(ests, rep.gaps)])
    run.dat("laplace_gaps.dat", rep.eps, rep.gaps)
    res = rep.to_dict() | {"stderr": [e.stderr for e in ests], "method": "mc"}
    return res, {"gap_smaller_at_smallest_eps": rep.gaps[-1] < rep.gaps[0]}


def task_girsanov(run: Run) -> tuple[dict, dict]:
    from .ldp.girsanov import girsanov_check, spatial_mean_at_T

    t = run.t
    r = girsanov_check(run.kernel(), run.preset, t["eps"], run.x0(), run.control(),
                       spatial_mean_at_T, t["n_mc"], run.seed, run.grid, threads=run.threads)
    d = r.to_dict()
    run.csv("girsanov.csv", sorted(d), [[d[key] for key in sorted(d)]])
    return d, {"means_agree": r.means_ok, "mean_weight_is_one": r.weight_ok,
               "not_degenerate": not r.degenerate}


def task_verify_kernel(run: Run) -> tuple[dict, dict]:
    t = run.t
    rep = verify_assumption4(run.kernel(), run.grid, t["alpha"], t["n_lags"])
    run.csv("kernel_sup.csv", ["lag", "sup"], list(zip(rep.lags, rep.sup_values)))
    run.csv("kernel_l2.csv", ["rho", "l2"], list(zip(rep.rhos, rep.l2_values)))
    run.dat("kernel_sup.dat", rep.lags, rep.sup_values)
    run.dat("kernel_l2.dat", rep.rhos, rep.l2_values)
    return rep.to_dict(), {"passes": rep.passes}


def task_sweep(run: Run) -> tuple[dict, dict]:
    t, g = run.t, run.grid
    rows = convergence_sweep(run.kernel(), run.preset, run.x0(), run.control(), g, t["eps_list"],
                             t["n_seeds"], run.seed, threads=run.threads)
    if "csv" in run.formats:
        write_sweep_csv(run.path("sweep.csv"), rows)
    run.dat("sweep.dat", [r.eps for r in rows], [r.q90 for r in rows])
    res = {"rows": [r.__dict__ for r in rows]}
    ok = len(rows) > 1 and rows[-1].q90 < 0.5 * rows[0].q90
    return res, {"q90_halved": ok}


TASK_FUNCS = {
    "sample-noise": task_sample_noise,
    "solve-spde": task_solve_spde,
    "skeleton": task_skeleton,
    "rate": task_rate,
    "verify-representation": task_verify_representation,
    "verify-laplace": task_verify_laplace,
    "girsanov-check": task_girsanov,
    "verify-kernel": task_verify_kernel,
    "sweep-theorem12": task_sweep,
}


# ----------------------------------------------------------------------------- driver


def _config_hash(cfg: Config | None, seed) -> str | None:
    if cfg is None:
        return None
    blob = dumps({"config": cfg.canonical(), "seed": seed})
    return hashlib.sha256(blob.encode()).hexdigest()


def _summary(task, status, flags, result) -> str:
    lines = [f"task: {task}", f"status: {status}"]
    for name, ok in flags.items():
        lines.append(f"  {'PASS' if ok else 'FAIL'}  {name}")
    for key, val in result.items():
        if isinstance(val, (int, float, str, bool)):
            lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def run(config_path, seed: int | None = None, out: str | None = None, threads: int | None = None,
        stdout=None, stderr=None) -> int:
    """Execute one experiment; returns the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    threads = threads or os.cpu_count() or 1
    cfg = None
    task = None
    resolved_seed = None
    out_dir = Path(out) if out else None
    manifest = {"library": "ldps", "version": __version__}
    files: list[str] = []
    try:
        cfg = load_config(config_path)
        task = cfg.values["task"]["name"]
        if out_dir is None:
            out_dir = Path(cfg.values["output"]["dir"])
        resolved_seed = resolve_seed(seed, cfg)
        if not 0 <= resolved_seed < 2**64:
            raise ConfigError(f"seed {resolved_seed} must be a non-negative 64-bit integer")
        out_dir.mkdir(parents=True, exist_ok=True)
        r = Run(cfg, resolved_seed, out_dir, threads)
        files = r.files
        try:
            result, flags = TASK_FUNCS[task](r)
        except ConfigError:
            raise
        except Exception as exc:  # surfaced with task context
            raise TaskFailed(f"task {task} failed: {type(exc).__name__}: {exc}") from exc
        flags = {key: bool(v) for key, v in flags.items()}
        status = "pass" if all(flags.values()) else "fail"
        code = EXIT_PASS if status == "pass" else EXIT_FAIL
        write_json(r.path("result.json"), {"task": task, "seed": resolved_seed, "status": status,
                                           "flags": flags, "result": result})
        (out_dir / "summary.txt").write_text(_summary(task, status, flags, result))
        r.path("summary.txt")
        error = None
        print(f"{task}: {status}", file=stdout)
    except Exception as exc:  # noqa: BLE001 - every failure still gets a manifest
        status, code, error = "error", EXIT_ERROR, str(exc)
        print(f"error: {error}", file=stderr)
    out_dir = out_dir or Path("out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest.update({"task": task, "seed": resolved_seed, "config_hash": _config_hash(cfg, resolved_seed),
                         "status": status, "exit_code": code, "error": error,
                         "files": sorted(set(files) | {"manifest.json"})})
        write_json(out_dir / "manifest.json", manifest)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=stderr)
        return EXIT_ERROR
    return code


def _print_presets(stdout=None) -> int:
    stdout = stdout or sys.stdout
    for name, desc in list_presets().items():
        print(f"{name:15s} {desc}", file=stdout)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ldps {__version__}")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run one experiment from an INI config")
    r.add_argument("--config", required=True, metavar="PATH")
    r.add_argument("--seed", type=int, default=None, help="overrides [noise] seed and LDPS_SEED")
    r.add_argument("--threads", type=int, default=None, help="worker count (default: all cores)")
    r.add_argument("--out", default=None, metavar="DIR", help="overrides [output] dir")
    sub.add_parser("presets", help="list the named models")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("--config"):
        argv = ["run", *argv]
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return _print_presets()
    if args.command == "run":
        if args.threads is not None and args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_ERROR
        return run(args.config, args.seed, args.out, args.threads)
    build_parser().print_help()
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

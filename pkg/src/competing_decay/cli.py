"""Batch front-end: parameter sweeps, canned figure data and the validation driver.

    competing-decay run --config sweep.toml [--task steady] [--out results]
    competing-decay reproduce fig3 --out fig3_data

Sweep scalars go to CSV, trajectories to line-delimited JSON.  Every file
starts with the schema version and the fully resolved configuration, and
grid points are written in grid order regardless of worker scheduling.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .errors import ConfigError, ResourceLimitError, UndefinedCorrelationError
from .fullspace import MAX_FULLSPACE_N, MAX_TRAJECTORY_N, build_liouvillian_full, steady_state_full
from .meanfield import (
    BRANCH_LABELS,
    bistability_window,
    estimate_pt_point,
    jacobian,
    mf_integrate,
    mf_steady_states,
)
from .observables import crss_alpha, crss_state, expect, fidelity, g2_zero, intensity, observable_set
from .observables import spin_squeezing_numeric
from .params import MeanFieldParams, ModelParams
from .pi_liouvillian import (
    MAX_PI_N,
    BlockDensityMatrix,
    build_liouvillian_pi,
    evolve,
    metastable_decomposition,
    mixture_weights,
    spectral_gap,
    steady_state,
    switching_rates,
)
from .squeezing import xi2_analytic

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TASKS = ("steady", "gap", "decompose", "meanfield", "squeezing", "trajectories", "validate")


@dataclass
class GridConfig:
    n_atoms: list = field(default_factory=lambda: [18])
    omega_ratios: list = field(default_factory=lambda: [0.5])


@dataclass
class ModelConfig:
    gamma_c: float = 10.0
    gamma_s: float = 1.0


@dataclass
class TrajectoryConfig:
    seeds: list = field(default_factory=lambda: [0])
    t_final: float = 20.0
    sample_dt: float = 0.05
    initial: str = "ground"


@dataclass
class CapsConfig:
    max_fullspace_n: int = MAX_FULLSPACE_N
    max_trajectory_n: int = MAX_TRAJECTORY_N
    max_pi_n: int = MAX_PI_N


@dataclass
class RunConfig:
    task: str = "steady"
    out: str = "results"
    threads: int = 1
    gap_method: str = "shift_invert"
    grid: GridConfig = field(default_factory=GridConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trajectories: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    caps: CapsConfig = field(default_factory=CapsConfig)

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if not self.grid.n_atoms or not self.grid.omega_ratios:
            raise ConfigError("empty parameter grid")
        if any(int(n) != n or n < 1 for n in self.grid.n_atoms):
            raise ConfigError("n_atoms entries must be positive integers")
        if any(r < 0 for r in self.grid.omega_ratios):
            raise ConfigError("omega_ratios must be non-negative")
        if self.model.gamma_c <= 0 or self.model.gamma_s < 0:
            raise ConfigError("need gamma_c > 0 and gamma_s >= 0")
        if self.task == "trajectories" and not self.trajectories.seeds:
            raise ConfigError("trajectory task needs at least one seed")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self


def parse_seeds(text: str) -> list[int]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed range {text!r}") from exc


def _expand_ratios(spec) -> list[float]:
    if isinstance(spec, dict):
        try:
            return [float(v) for v in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
        except KeyError as exc:
            raise ConfigError("omega_ratios table needs start, stop and num") from exc
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(v) for v in spec]


def _section(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    grid = dict(data.pop("grid", {}))
    if "omega_ratios" in grid:
        grid["omega_ratios"] = _expand_ratios(grid["omega_ratios"])
    if "n_atoms" in grid and isinstance(grid["n_atoms"], int):
        grid["n_atoms"] = [grid["n_atoms"]]
    traj = dict(data.pop("trajectories", {}))
    if "seeds" in traj and not isinstance(traj["seeds"], list):
        traj["seeds"] = parse_seeds(traj["seeds"])
    sections = {
        "grid": _section(GridConfig, grid, "grid"),
        "model": _section(ModelConfig, dict(data.pop("model", {})), "model"),
        "trajectories": _section(TrajectoryConfig, traj, "trajectories"),
        "caps": _section(CapsConfig, dict(data.pop("caps", {})), "caps"),
    }
    top = _section(RunConfig, data, "top level")
    return replace(top, **sections)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


# --- per-point evaluation -------------------------------------------------------------------


def _model(cfg: RunConfig, n: int, ratio: float) -> ModelParams:
    return ModelParams.from_ratio(n, cfg.model.gamma_c, ratio, cfg.model.gamma_s)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _steady_row(cfg, p):
    lv = build_liouvillian_pi(p, cfg.caps.max_pi_n)
    rho = steady_state(lv)
    crss = crss_state(p.n_atoms, crss_alpha(p.n_atoms, p.omega_ratio)) if p.omega_ratio < 1 else None
    return observable_set(rho, crss).to_record()


def _gap_row(cfg, p):
    res = spectral_gap(build_liouvillian_pi(p, cfg.caps.max_pi_n), cfg.gap_method)
    return {"lambda_1": res.lambda_1, "eigenvalue_imag": res.eigenvalue.imag, "fit_r2": res.fit_r2}


def _defined(fn, rho):
    try:
        return fn(rho)
    except UndefinedCorrelationError:
        return None


def decompose_point(p: ModelParams, gap_method: str = "shift_invert", max_n: int = MAX_PI_N) -> dict:
    """Gap, metastable pair and their observables at one drive."""
    lv = build_liouvillian_pi(p, max_n)
    rho_s = steady_state(lv)
    res = spectral_gap(lv, gap_method)
    pair = metastable_decomposition(res.rho_1)
    a_plus, a_minus = mixture_weights(rho_s, pair)
    rate_plus, rate_minus = switching_rates(res.lambda_1, a_plus, a_minus)
    row = {
        "lambda_1": res.lambda_1,
        "a_plus": a_plus,
        "a_minus": a_minus,
        "weight_error": pair.weight_error,
        "sz_plus": expect(pair.rho_plus, "Sz").real,
        "sz_minus": expect(pair.rho_minus, "Sz").real,
        "s2_plus": expect(pair.rho_plus, "Ssquared").real,
        "s2_minus": expect(pair.rho_minus, "Ssquared").real,
        "intensity_plus": intensity(pair.rho_plus),
        "intensity_minus": intensity(pair.rho_minus),
        "g2_plus": _defined(g2_zero, pair.rho_plus),
        "xi2_plus": _defined(spin_squeezing_numeric, pair.rho_plus),
        "rate_plus_to_minus": rate_plus,
        "rate_minus_to_plus": rate_minus,
    }
    if p.omega_ratio < 1:
        crss = crss_state(p.n_atoms, crss_alpha(p.n_atoms, p.omega_ratio))
        row["crss_fidelity_plus"] = fidelity(pair.rho_plus, crss)
        row["crss_fidelity_steady"] = fidelity(rho_s, crss)
    return row


def _meanfield_row(cfg, p):
    row = {}
    win = bistability_window(p)
    row["window_lo"], row["window_hi"] = (win if win else (None, None))
    sols = mf_steady_states(p)
    for k in range(3):
        b = sols[k] if k < len(sols) else None
        row[f"s_z_{k}"] = None if b is None else b.s_z
        row[f"s_y_{k}"] = None if b is None else b.s_y
        row[f"stability_{k}"] = "" if b is None else b.stability
    return row


def _squeezing_row(cfg, p):
    with warnings.catch_warnings():  # small effective spin is reported in its own column
        warnings.simplefilter("ignore", RuntimeWarning)
        res = xi2_analytic(p)
    return {
        "xi2_analytic": res.xi2,
        "n_a": res.n_a,
        "abs_aa": abs(res.sq_a),
        "theta": res.frame.theta,
        "damping_margin": res.min_margin,
        "linearization_suspect": res.linearization_suspect,
    }


def validate_point(p: ModelParams, max_fullspace_n: int = MAX_FULLSPACE_N) -> dict:
    """Block solver against the full-space oracle: absolute deltas of steady-state observables."""
    if p.n_atoms > max_fullspace_n:
        raise ResourceLimitError(f"full-space oracle capped at N = {max_fullspace_n}")
    rho_b = steady_state(build_liouvillian_pi(p))
    rho_f = steady_state_full(build_liouvillian_full(p, max_fullspace_n))
    row = {}
    for name, fn in (("sz", lambda r: expect(r, "Sz").real), ("s2", lambda r: expect(r, "Ssquared").real),
                     ("sx", lambda r: expect(r, "Sx").real), ("sy", lambda r: expect(r, "Sy").real),
                     ("intensity", intensity), ("ss_ss", lambda r: g2_zero(r) * intensity(r) ** 2)):
        row[f"delta_{name}"] = abs(fn(rho_b) - fn(rho_f))
    row["max_delta"] = max(row.values())
    row["pass"] = row["max_delta"] < 1e-7
    return row


def _trajectory_rows(cfg, p, out_dir: Path):
    from .trajectories import ALL_OBSERVABLES, mcwf_run, prepare_singlet_product

    tc = cfg.trajectories
    initial = prepare_singlet_product(p.n_atoms) if tc.initial == "singlet" else tc.initial
    rows = []
    for seed in tc.seeds:
        rec = mcwf_run(p, initial, tc.t_final, seed, tc.sample_dt, ALL_OBSERVABLES,
                       max_n=cfg.caps.max_trajectory_n)
        name = f"traj_N{p.n_atoms}_r{p.omega_ratio:.6g}_s{seed}.jsonl"
        rec.to_jsonl(out_dir / name, config=_resolved(cfg))
        rows.append({
            "seed": seed,
            "file": name,
            "n_collective": int(rec.jump_times("collective").size),
            "n_individual": int(rec.jump_times("individual").size),
            "sz_final": float(rec.observables["sz"][-1]),
            "sz_time_mean": float(np.mean(rec.observables["sz"])),
        })
    return rows


_EVALUATORS = {
    "steady": _steady_row,
    "gap": _gap_row,
    "decompose": lambda cfg, p: decompose_point(p, cfg.gap_method, cfg.caps.max_pi_n),
    "meanfield": _meanfield_row,
    "squeezing": _squeezing_row,
    "validate": lambda cfg, p: validate_point(p, cfg.caps.max_fullspace_n),
}


def _cap_violation(cfg: RunConfig, n: int) -> str | None:
    if cfg.task == "validate" and n > cfg.caps.max_fullspace_n:
        return f"N = {n} exceeds max_fullspace_n = {cfg.caps.max_fullspace_n}"
    if cfg.task == "trajectories" and n > cfg.caps.max_trajectory_n:
        return f"N = {n} exceeds max_trajectory_n = {cfg.caps.max_trajectory_n}"
    if cfg.task in ("steady", "gap", "decompose") and n > cfg.caps.max_pi_n:
        return f"N = {n} exceeds max_pi_n = {cfg.caps.max_pi_n}"
    return None


def _evaluate(job):
    cfg, n, ratio, out_dir = job
    base = {"n_atoms": n, "omega_ratio": ratio}
    cap = _cap_violation(cfg, n)
    if cap:
        return [{**base, "status": "cap: " + cap}]
    try:
        p = _model(cfg, n, ratio)
        base["omega"] = p.omega
        if cfg.task == "trajectories":
            return [{**base, "status": "ok", **r} for r in _trajectory_rows(cfg, p, Path(out_dir))]
        return [{**base, "status": "ok", **_EVALUATORS[cfg.task](cfg, p)}]
    except Exception as exc:  # per-point isolation
        log.warning("point N=%s ratio=%s failed: %s", n, ratio, exc)
        return [{**base, "status": f"error: {type(exc).__name__}: {exc}"}]


# --- output ---------------------------------------------------------------------------------


def _resolved(cfg) -> dict:
    return asdict(cfg) if not isinstance(cfg, dict) else cfg


def write_table(path, rows: list[dict], config: dict) -> Path:
    """CSV with ``#``-prefixed header lines holding the schema version and the resolved config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns: list[str] = []
    for r in rows:
        columns += [k for k in r if k not in columns]
    with path.open("w", newline="") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        fh.write(f"# code_version: {__version__}\n")
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r.get(k)) for k in columns})
    return path


def read_table(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_table`: ``(config, rows)`` with string cells."""
    config, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# config: "):
                config = json.loads(line[len("# config: "):])
            elif not line.startswith("#"):
                lines.append(line)
    return config, list(csv.DictReader(lines))


def write_readme(out_dir, title: str, columns: dict, notes: str = "") -> None:
    text = [f"# {title}", "", "Columns:", ""]
    text += [f"- `{k}`: {v}" for k, v in columns.items()]
    if notes:
        text += ["", notes]
    text += ["", "Rates and times are in units of gamma_s (gamma_c when gamma_s = 0); "
             "drives are given as Omega / Omega_c."]
    Path(out_dir, "README.md").write_text("\n".join(text) + "\n")


def run_sweep(cfg: RunConfig) -> Path:
    """Evaluate the configured task on every grid point and write ``<out>/<task>.csv``."""
    cfg.validate()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, int(n), float(r), str(out_dir)) for n in cfg.grid.n_atoms for r in cfg.grid.omega_ratios]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_evaluate, jobs))
    else:
        results = [_evaluate(j) for j in jobs]
    rows = [r for batch in results for r in batch]
    path = write_table(out_dir / f"{cfg.task}.csv", rows, _resolved(cfg))
    write_readme(out_dir, f"{cfg.task} sweep", {
        "n_atoms": "number of atoms N",
        "omega_ratio": "drive Omega / Omega_c",
        "status": "ok, or the recorded cap violation / error for this point",
    }, "Remaining columns are the task outputs, one row per grid point (per seed for trajectories).")
    return path


# --- figure reproduction --------------------------------------------------------------------


def _fig1b(out: Path):
    params = MeanFieldParams(1.0, 15.0)
    ratios = np.round(np.linspace(0.0, 1.2, 241), 6)
    rows = []
    for r in ratios:
        sols = mf_steady_states(params.with_omega_ratio(r))
        for b in sols:
            rows.append({"omega_ratio": r, "branch": b.label, "s_z": b.s_z, "s_y": b.s_y,
                         "stability": b.stability})
    cfg = {"figure": "fig1b", "gamma": 1.0, "Gamma": 15.0, "omega_ratios": "0..1.2, 241 points"}
    write_table(out / "branches.csv", rows, cfg)
    write_readme(out, "Mean-field fixed points, Gamma/gamma = 15", {
        "omega_ratio": "x axis, Omega / Omega_c",
        "s_z": "y axis, fixed-point s_z (one row per root)",
        "branch": f"root label ({', '.join(BRANCH_LABELS)} inside the window)",
        "stability": "stable / unstable / marginal from the Jacobian",
    })


def _fig2(out: Path):
    cfg = RunConfig(task="steady", out=str(out),
                    grid=GridConfig([18, 32], [float(v) for v in np.round(np.linspace(0, 1.2, 49), 6)]))
    run_sweep(cfg)
    mf = RunConfig(task="meanfield", out=str(out), grid=GridConfig([18, 32], cfg.grid.omega_ratios))
    run_sweep(mf)
    sq = RunConfig(task="squeezing", out=str(out), grid=GridConfig([18, 32], cfg.grid.omega_ratios))
    run_sweep(sq)
    write_readme(out, "Steady-state observables vs drive (N = 18, 32; gamma_c = 10 gamma_s)", {
        "steady.csv": "sz_mean, s2_mean, intensity, g2_zero, xi_squared, pm_<m> (panel b) vs omega_ratio",
        "meanfield.csv": "mean-field s_z_k (multiply by N/2 to compare with sz_mean)",
        "squeezing.csv": "linearized xi2_analytic on the lower branch",
    }, "Fully mixed reference: s2 = 3N/4, intensity = N/2, g2 = 2(1 - 1/N).")


def _fig3(out: Path):
    cfg = RunConfig(task="gap", out=str(out), gap_method="decay_fit",
                    grid=GridConfig([6, 8, 10, 12, 14, 16, 18], [0.61]))
    run_sweep(cfg)
    write_readme(out, "Liouvillian gap vs N at Omega = 0.61 Omega_c", {
        "n_atoms": "x axis",
        "lambda_1": "y axis (log scale), from the long-time decay of <Sz>",
        "fit_r2": "R^2 of the exponential tail fit",
    })


def _fig4(out: Path):
    ratios = [float(v) for v in np.round(np.arange(0.30, 0.805, 0.025), 4)]
    cfg = RunConfig(task="decompose", out=str(out), grid=GridConfig([18], ratios))
    run_sweep(cfg)
    sq = RunConfig(task="squeezing", out=str(out), grid=GridConfig([18], ratios))
    run_sweep(sq)
    write_readme(out, "Metastable pair, CRSS fidelity, g2 and squeezing (N = 18)", {
        "crss_fidelity_plus / crss_fidelity_steady": "fidelity of rho_+ and rho_s with the CRSS",
        "g2_plus": "g2(0) of rho_+",
        "xi2_plus": "numerical squeezing of rho_+ (compare xi2_analytic in squeezing.csv)",
        "a_plus, a_minus": "mixture weights of rho_s",
    })


def _switching_record(t_final=200.0, seed=7):
    from .trajectories import ALL_OBSERVABLES, mcwf_run

    p = ModelParams.from_ratio(12, 10.0, 0.8)
    return p, mcwf_run(p, "ground", t_final, seed, 0.05, ALL_OBSERVABLES)


def _fig5(out: Path):
    p, rec = _switching_record()
    rec.to_jsonl(out / "trajectory.jsonl", config={"figure": "fig5", **p.as_dict()})
    rows = [{"t": t, **{k: rec.observables[k][i] for k in rec.observables}} for i, t in enumerate(rec.times)]
    write_table(out / "observables.csv", rows, {"figure": "fig5", "seed": rec.seed, **p.as_dict()})
    lv = build_liouvillian_pi(p)
    grid = np.concatenate([[0.0], np.geomspace(1e-3, 30.0, 120)])
    crss = crss_state(12, crss_alpha(12, 0.8))
    states = evolve(BlockDensityMatrix.ground(12), lv, grid)
    rows = [{"t": t, "sz_mean": expect(s, "Sz").real, "crss_fidelity": fidelity(s, crss)}
            for t, s in zip(grid, states)]
    write_table(out / "transient.csv", rows, {"figure": "fig5", **p.as_dict()})
    write_readme(out, "Switching trajectory and transient (N = 12, Omega = 0.8 Omega_c)", {
        "observables.csv": "t vs sz, s2, intensity, xi2, g2, crss_fidelity of one trajectory",
        "trajectory.jsonl": "same trajectory with jump times and channels",
        "transient.csv": "master-equation <Sz>(t) and CRSS fidelity from the ground state (log time axis)",
    })


def _fig6(out: Path):
    from .trajectories import mcwf_run, prepare_singlet_product, quench_protocol

    p = ModelParams.from_ratio(12, 10.0, 0.8)
    rec_s = mcwf_run(p, prepare_singlet_product(12), 40.0, 3)
    rec_q = quench_protocol(p, [(0.0, 3 * p.omega_c), (2.0, p.omega)], t_final=40.0, seed=3)
    rows = []
    for label, rec in (("singlet", rec_s), ("quench", rec_q)):
        drive = np.interp(rec.times, [t for t, _ in rec.schedule] + [rec.times[-1]],
                          [w for _, w in rec.schedule] + [rec.schedule[-1][1]])
        for i, t in enumerate(rec.times):
            rows.append({"protocol": label, "t": t, "sz": rec.observables["sz"][i],
                         "omega_ratio": drive[i] / p.omega_c})
    write_table(out / "preparation.csv", rows, {"figure": "fig6", "seed": 3, **p.as_dict()})
    write_readme(out, "Preparation of rho_- (N = 12, Omega = 0.8 Omega_c)", {
        "protocol": "singlet-product start or quench from 3 Omega_c",
        "sz": "trajectory <Sz>(t)",
        "omega_ratio": "drive schedule (lower panel; piecewise constant, steps at schedule times)",
    })


def _fig7(out: Path):
    params = MeanFieldParams(1.0, 20.0).with_omega_ratio(0.7)
    rng = np.random.default_rng(0)
    rows = []
    for k in range(8):
        v = rng.normal(size=3)
        v *= rng.uniform(0.2, 1.0) / np.linalg.norm(v)
        t, traj = mf_integrate(v, params, 10.0, 200)
        rows += [{"run": k, "t": ti, "s_x": s[0], "s_y": s[1], "s_z": s[2]} for ti, s in zip(t, traj)]
    write_table(out / "time_traces.csv", rows, {"figure": "fig7", "Gamma_over_gamma": 20, "omega_ratio": 0.7})
    rows = []
    base = MeanFieldParams(1.0, 20.0)
    for r in np.round(np.linspace(0.0, 1.2, 241), 6):
        pr = base.with_omega_ratio(r)
        for b in mf_steady_states(pr):
            ev = np.linalg.eigvals(jacobian(b.state, pr))
            rows.append({"omega_ratio": r, "branch": b.label, "s_z": b.s_z, "stability": b.stability,
                         **{f"eig_re_{i}": e.real for i, e in enumerate(sorted(ev, key=lambda z: z.real))}})
    write_table(out / "branches.csv", rows, {"figure": "fig7", "Gamma_over_gamma": 20})
    write_readme(out, "Mean-field dynamics and stability, Gamma/gamma = 20", {
        "time_traces.csv": "s(t) from random initial conditions at Omega = 0.7 Omega_c",
        "branches.csv": "fixed points vs drive and real parts of the Jacobian eigenvalues",
    })


def _magnetization(p):
    return expect(steady_state(build_liouvillian_pi(p)), "Sz").real


def _fig9(out: Path):
    est = estimate_pt_point(range(16, 33, 2), 10.0, _magnetization)
    rows = [{"n_atoms": n, "omega_pt_ratio": r} for n, r in zip(est.n_values, est.omega_ratios)]
    a, b, c = est.fit_params or (None, None, None)
    write_table(out / "pt_estimate.csv", rows,
                {"figure": "fig9", "gamma_c": 10.0, "fit": "a + b exp(-c N)", "a": a, "b": b, "c": c})
    write_readme(out, "Transition-point estimate vs N (gamma_c = 10 gamma_s)", {
        "n_atoms": "x axis",
        "omega_pt_ratio": "drive where <Sz> crosses the midpoint of the stable mean-field branches",
    }, f"Exponential fit a + b exp(-c N): a = {a}, b = {b}, c = {c} (also in the config header).")


def _fig10(out: Path):
    rows = []
    for n in (18, 32):
        win = bistability_window(ModelParams(n, 10.0))
        for r in np.round(np.linspace(win[0], win[1], 12)[1:-1], 5):
            row = decompose_point(ModelParams.from_ratio(n, 10.0, float(r)))
            rows.append({"n_atoms": n, "omega_ratio": r, "a_plus": row["a_plus"],
                         "a_minus": row["a_minus"]})
    write_table(out / "weights.csv", rows, {"figure": "fig10", "gamma_c": 10.0})
    est = estimate_pt_point(range(16, 33, 4), 10.0, _magnetization)
    rows = []
    for n, r in zip(est.n_values, est.omega_ratios):
        row = decompose_point(ModelParams.from_ratio(n, 10.0, r))
        rows.append({"n_atoms": n, "omega_pt_ratio": r, "weight_error": row["weight_error"]})
    write_table(out / "weight_error.csv", rows, {"figure": "fig10", "gamma_c": 10.0})
    write_readme(out, "Mixture weights a_pm and decomposition error", {
        "weights.csv": "a_plus, a_minus vs omega_ratio inside each bistability window",
        "weight_error.csv": "|1 - a_plus - a_minus| at the transition drive for each N (log y axis)",
    })


def _fig11(out: Path):
    from .trajectories import photon_counts

    p, rec = _switching_record()
    rows = []
    _, perp = photon_counts(rec, 1.0, "perpendicular")
    edges, par = photon_counts(rec, 1.0, "parallel")
    for k in range(len(perp)):
        rows.append({"t_start": edges[k], "counts_perpendicular": int(perp[k]),
                     "counts_parallel": int(par[k])})
    write_table(out / "photon_counts.csv", rows, {"figure": "fig11", "bin_width": 1.0, "seed": rec.seed,
                                                   **p.as_dict()})
    row = decompose_point(p)
    ref = {"expected_perpendicular_plus": (6 + row["sz_plus"]) * p.gamma_s,
           "expected_perpendicular_minus": (6 + row["sz_minus"]) * p.gamma_s,
           "expected_parallel_plus": row["intensity_plus"] * p.gamma_c,
           "expected_parallel_minus": row["intensity_minus"] * p.gamma_c}
    write_table(out / "plateaus.csv", [ref], {"figure": "fig11", **p.as_dict()})
    write_readme(out, "Binned photon counts, bin width 1/gamma_s (N = 12, Omega = 0.8 Omega_c)", {
        "photon_counts.csv": "counts per bin at the side (perpendicular) and cavity (parallel) detectors",
        "plateaus.csv": "count levels predicted from rho_pm",
    })


FIGURES = {
    "fig1b": (_fig1b, "mean-field branches with stability, Gamma/gamma = 15"),
    "fig2": (_fig2, "steady-state observables vs drive"),
    "fig3": (_fig3, "Liouvillian gap vs N"),
    "fig4": (_fig4, "metastable pair, CRSS fidelity, g2 and squeezing"),
    "fig5": (_fig5, "switching trajectory and transient"),
    "fig6": (_fig6, "preparation protocols"),
    "fig7": (_fig7, "mean-field time traces and Jacobian spectra"),
    "fig9": (_fig9, "transition-point estimate vs N"),
    "fig10": (_fig10, "mixture weights and decomposition error"),
    "fig11": (_fig11, "binned photon counts"),
}


def reproduce(figure_id: str, out) -> Path:
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure {figure_id!r}; valid ids: {', '.join(FIGURES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    FIGURES[figure_id][0](out)
    return out


# --- entry point ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="competing-decay", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evaluate a task over a parameter grid")
    run.add_argument("--config", help="TOML file mirroring RunConfig")
    run.add_argument("--task", choices=TASKS)
    run.add_argument("--out")
    run.add_argument("--seeds", help="a..b, a,b,c or a single seed")
    run.add_argument("--max-fullspace-n", type=int)
    run.add_argument("--threads", type=int)
    rep = sub.add_parser("reproduce", help="write plot-ready data for one figure")
    rep.add_argument("figure_id", help=", ".join(FIGURES))
    rep.add_argument("--out", default=None)
    sub.add_parser("figures", help="list figure ids")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "figures":
            for k, (_, desc) in FIGURES.items():
                print(f"{k:6s} {desc}")
            return 0
        if args.command == "reproduce":
            path = reproduce(args.figure_id, args.out or f"reproduce_{args.figure_id}")
            print(path)
            return 0
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.task:
            cfg.task = args.task
        if args.out:
            cfg.out = args.out
        if args.seeds:
            cfg.trajectories.seeds = parse_seeds(args.seeds)
        if args.max_fullspace_n is not None:
            cfg.caps.max_fullspace_n = args.max_fullspace_n
        if args.threads is not None:
            cfg.threads = args.threads
        print(run_sweep(cfg))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Quantum-jump (Monte-Carlo wavefunction) unraveling on the full 2^N space.

Jump operators: ``sqrt(gamma_c) S-`` and ``sqrt(gamma_s) sigma_n`` for every atom.
The effective Hamiltonian ``H = 2 Omega Sx - (i/2)(gamma_c S+S- + gamma_s (N/2 + Sz))``
is collective, so the state is carried in the coupled ``|j, m, alpha>`` basis
where ``H`` and ``S-`` act block by block on amplitudes of shape ``(2j+1, d_j)``.
Between jumps each block evolves through the eigen-decomposition of its
``H`` block, which turns the norm decay into a closed-form sum of
exponentials; jump times are root-found on it.  Individual jumps break the
permutation symmetry of the amplitudes and are applied in the computational
basis.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as la
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .dicke import block_operator
from .errors import DomainError, UndefinedCorrelationError
from .fullspace import MAX_TRAJECTORY_N, CoupledBasis, _check_cap
from .observables import crss_alpha, crss_state, fidelity, g2_zero, spin_squeezing_numeric
from .params import ModelParams
from .pi_liouvillian import BlockDensityMatrix

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COND_LIMIT = 1e7
FAST_OBSERVABLES = ("sz", "s2", "intensity")
ALL_OBSERVABLES = FAST_OBSERVABLES + ("xi2", "g2", "crss_fidelity")


@lru_cache(maxsize=4)
def coupled_basis(n_atoms: int) -> CoupledBasis:
    return CoupledBasis(n_atoms)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: str  # "collective" or "individual"
    atom: int | None = None  # 1-based for individual jumps

    def as_dict(self) -> dict:
        out = {"t": self.time, "channel": self.channel}
        if self.atom is not None:
            out["atom"] = self.atom
        return out


@dataclass
class TrajectoryRecord:
    seed: int
    params: ModelParams
    times: np.ndarray
    observables: dict
    jumps: list
    schedule: list = field(default_factory=list)

    def jump_times(self, channel: str | None = None) -> np.ndarray:
        return np.array([e.time for e in self.jumps if channel is None or e.channel == channel])

    def to_jsonl(self, path, config: dict | None = None) -> None:
        """Header line, one line per sample, then one line per jump."""
        path = Path(path)
        with path.open("w") as fh:
            head = {
                "type": "header",
                "schema_version": SCHEMA_VERSION,
                "seed": self.seed,
                "params": self.params.as_dict(),
                "schedule": [[float(t), float(w)] for t, w in self.schedule],
            }
            if config is not None:
                head["config"] = config
            fh.write(json.dumps(head) + "\n")
            keys = list(self.observables)
            for k, t in enumerate(self.times):
                row = {"type": "sample", "t": float(t)}
                row.update({key: _jsonable(self.observables[key][k]) for key in keys})
                fh.write(json.dumps(row) + "\n")
            for ev in self.jumps:
                fh.write(json.dumps({"type": "jump", **ev.as_dict()}) + "\n")


def _jsonable(v):
    v = float(v)
    return None if np.isnan(v) else v


class _BlockPropagator:
    """No-jump evolution of coupled amplitudes under one constant ``H_eff``."""

    def __init__(self, params: ModelParams, j2_values):
        self.j2_values = tuple(j2_values)
        n = params.n_atoms
        self.blocks = []
        for j2 in self.j2_values:
            dim = j2 + 1
            sm = block_operator(j2, "Sminus")
            decay = params.gamma_c * (sm.conj().T @ sm) + params.gamma_s * (
                n / 2 * np.eye(dim) + block_operator(j2, "Sz"))
            h = 2 * params.omega * block_operator(j2, "Sx") - 0.5j * decay
            eps, vec = la.eig(h)
            cond = np.linalg.cond(vec)
            if cond > COND_LIMIT:
                self.blocks.append(("expm", h, None, None, None))
            else:
                inv = np.linalg.inv(vec)
                self.blocks.append(("eig", eps, vec, inv, vec.conj().T @ vec))
        self.reset([np.zeros((j2 + 1, 1), complex) for j2 in self.j2_values])

    def reset(self, amps) -> None:
        """Take ``amps`` as the state at relative time zero."""
        self.amps0 = amps
        eig_eps, weights = [], []
        self.coords = []
        for (kind, a, vec, inv, gram), b in zip(self.blocks, amps):
            if kind == "eig":
                c = inv @ b
                self.coords.append(c)
                eig_eps.append(a)
                weights.append(gram * (c @ c.conj().T).T)
            else:
                self.coords.append(None)
        self.eps = np.concatenate(eig_eps) if eig_eps else np.zeros(0)
        self.weight = la.block_diag(*weights) if weights else np.zeros((0, 0))
        self.has_expm = any(kind == "expm" for kind, *_ in self.blocks)

    def norm2(self, tau: float) -> float:
        e = np.exp(-1j * self.eps * tau)
        total = float(np.real(e.conj() @ self.weight @ e))
        if self.has_expm:
            for (kind, h, *_), b in zip(self.blocks, self.amps0):
                if kind == "expm":
                    total += float(np.linalg.norm(la.expm(-1j * h * tau) @ b) ** 2)
        return total

    def state(self, tau: float) -> list:
        out = []
        for (kind, a, vec, *_), c, b in zip(self.blocks, self.coords, self.amps0):
            if kind == "eig":
                out.append(vec @ (np.exp(-1j * a * tau)[:, None] * c))
            else:
                out.append(la.expm(-1j * a * tau) @ b)
        return out


def _normalize(amps):
    norm = np.sqrt(sum(float(np.vdot(b, b).real) for b in amps))
    return [b / norm for b in amps]


class _ObservableProbe:
    """Observables of a pure state from its coupled amplitudes."""

    def __init__(self, n_atoms: int, j2_values, which, crss_amplitudes=None):
        self.n = n_atoms
        self.which = tuple(which)
        self.sz = [np.real(np.diag(block_operator(j2, "Sz"))) for j2 in j2_values]
        self.s2 = [j2 / 2 * (j2 / 2 + 1) for j2 in j2_values]
        self.sm = [block_operator(j2, "Sminus") for j2 in j2_values]
        self.crss = crss_amplitudes
        self.j2_values = tuple(j2_values)

    def __call__(self, amps) -> dict:
        pops = [np.sum(np.abs(b) ** 2, axis=1) for b in amps]
        out = {}
        if "sz" in self.which:
            out["sz"] = sum(float(p @ z) for p, z in zip(pops, self.sz))
        if "s2" in self.which:
            out["s2"] = sum(float(p.sum()) * s for p, s in zip(pops, self.s2))
        if "intensity" in self.which:
            out["intensity"] = sum(float(np.linalg.norm(s @ b) ** 2) for s, b in zip(self.sm, amps))
        slow = [k for k in ("xi2", "g2", "crss_fidelity") if k in self.which]
        if slow:
            rho = self.block_state(amps)
            if "xi2" in slow:
                try:
                    out["xi2"] = spin_squeezing_numeric(rho)
                except UndefinedCorrelationError:
                    out["xi2"] = np.nan
            if "g2" in slow:
                try:
                    out["g2"] = g2_zero(rho)
                except UndefinedCorrelationError:
                    out["g2"] = np.nan
            if "crss_fidelity" in slow:
                out["crss_fidelity"] = (
                    fidelity(rho, self.crss) if self.crss is not None else np.nan)
        return out

    def block_state(self, amps) -> BlockDensityMatrix:
        """Collective (multiplicity-reduced) state of the pure trajectory state."""
        rho = BlockDensityMatrix.zeros(self.n)
        rho.blocks = [b @ b.conj().T / d for b, d in zip(amps, rho.ladder.degeneracies)]
        return rho


def _individual_jump(basis: CoupledBasis, amps, rng):
    n = basis.n_atoms
    psi = basis.to_full(amps)
    probs = (np.abs(psi) ** 2).reshape((2,) * n)
    atom_pop = np.array([
        probs.sum(axis=tuple(k for k in range(n) if k != a))[1] for a in range(n)
    ])
    cum = np.cumsum(atom_pop)
    atom = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    atom = min(atom, n - 1)
    tensor = psi.reshape((2,) * n)
    out = np.zeros_like(tensor)
    idx_g = [slice(None)] * n
    idx_e = [slice(None)] * n
    idx_g[atom], idx_e[atom] = 0, 1
    out[tuple(idx_g)] = tensor[tuple(idx_e)]
    return _normalize(basis.from_full(out.reshape(-1))), atom + 1


def _initial_amplitudes(basis: CoupledBasis, initial):
    if isinstance(initial, str):
        if initial == "ground":
            amps = [np.zeros((j2 + 1, int(d)), complex)
                    for j2, d in zip(basis.ladder.j2_values, basis.ladder.degeneracies)]
            amps[0][-1, 0] = 1.0
            return amps
        raise DomainError(f"unknown named initial state {initial!r}")
    if isinstance(initial, (list, tuple)):
        amps = [np.asarray(b, complex) for b in initial]
    else:
        psi = np.asarray(initial, complex)
        if psi.shape != (2**basis.n_atoms,):
            raise DomainError("initial ket must have 2^N entries")
        amps = basis.from_full(psi)
    norm = np.sqrt(sum(float(np.vdot(b, b).real) for b in amps))
    if abs(norm - 1) > 1e-9:
        raise DomainError(f"initial state not normalized (norm {norm:.12g})")
    return amps


def mcwf_run(params: ModelParams, initial="ground", t_final: float = 10.0, seed: int = 0,
             sample_dt: float = 0.05, observables=FAST_OBSERVABLES, schedule=None,
             max_n: int = MAX_TRAJECTORY_N, time_tol: float | None = None) -> TrajectoryRecord:
    """One quantum trajectory.

    ``schedule`` is an optional list of ``(t_start, omega)`` pairs giving a
    piecewise-constant drive (first entry at ``t = 0``).  The jump time is
    located to ``time_tol`` (default ``1e-6`` in units of ``1/gamma_s``).
    """
    n = params.n_atoms
    _check_cap(n, max_n, "trajectories")
    if schedule is None:
        schedule = [(0.0, params.omega)]
    schedule = [(float(t), float(w)) for t, w in schedule]
    if schedule[0][0] != 0.0 or any(b[0] <= a[0] for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must start at t = 0 with increasing times")
    tol = time_tol if time_tol is not None else 1e-6 / params.rate_unit
    basis = coupled_basis(n)
    rng = np.random.default_rng(seed)
    amps = _initial_amplitudes(basis, initial)
    j2s = basis.ladder.j2_values

    crss = None
    if "crss_fidelity" in observables and params.omega_c > 0:
        ratio = schedule[-1][1] / params.omega_c
        if ratio < 1:
            crss = crss_state(n, crss_alpha(n, ratio))
    probe = _ObservableProbe(n, j2s, observables, crss)
    sample_times = np.arange(0.0, t_final + 0.5 * sample_dt, sample_dt)
    samples = {k: np.empty(sample_times.size) for k in observables}
    jumps: list[JumpEvent] = []
    sm_blocks = [block_operator(j2, "Sminus") for j2 in j2s]
    excited_blocks = [n / 2 + np.real(np.diag(block_operator(j2, "Sz"))) for j2 in j2s]

    seg_bounds = [t for t, _ in schedule[1:]] + [np.inf]
    seg = 0
    prop = _BlockPropagator(params.with_omega(schedule[0][1]), j2s)
    prop.reset(amps)
    t_ref = 0.0
    target = rng.random()
    next_sample = 0

    def record(k, state):
        vals = probe(_normalize(state))
        for key in observables:
            samples[key][k] = vals[key]

    while True:
        stops = []
        if next_sample < sample_times.size:
            stops.append(sample_times[next_sample])
        stops.append(min(seg_bounds[seg], t_final))
        t_stop = min(stops)
        tau_stop = t_stop - t_ref
        if prop.norm2(tau_stop) > target:
            # no jump before t_stop
            if next_sample < sample_times.size and t_stop == sample_times[next_sample]:
                record(next_sample, prop.state(tau_stop))
                next_sample += 1
            if t_stop == seg_bounds[seg] and t_stop < t_final:
                # the unnormalized state carries the jump clock across the drive change
                state = prop.state(tau_stop)
                seg += 1
                prop = _BlockPropagator(params.with_omega(schedule[seg][1]), j2s)
                prop.reset(state)
                t_ref = t_stop
            if t_stop >= t_final and next_sample >= sample_times.size:
                break
            continue
        tau = brentq(lambda s: prop.norm2(s) - target, 0.0, tau_stop, xtol=tol)
        t_jump = t_ref + tau
        state = _normalize(prop.state(tau))
        rate_c = params.gamma_c * sum(float(np.linalg.norm(s @ b) ** 2) for s, b in zip(sm_blocks, state))
        rate_s = params.gamma_s * sum(float(e @ np.sum(np.abs(b) ** 2, axis=1))
                                      for e, b in zip(excited_blocks, state))
        if rng.random() * (rate_c + rate_s) < rate_c:
            state = _normalize([s @ b for s, b in zip(sm_blocks, state)])
            jumps.append(JumpEvent(t_jump, "collective"))
        else:
            state, atom = _individual_jump(basis, state, rng)
            jumps.append(JumpEvent(t_jump, "individual", atom))
        prop.reset(state)
        t_ref = t_jump
        target = rng.random()

    return TrajectoryRecord(seed, params, sample_times, samples, jumps, schedule)


def quench_protocol(params_base: ModelParams, schedule, initial="ground", t_final: float = 10.0,
                    seed: int = 0, sample_dt: float = 0.05, observables=FAST_OBSERVABLES):
    """Trajectory under a piecewise-constant drive ``[(t_start, omega), ...]``."""
    return mcwf_run(params_base, initial, t_final, seed, sample_dt, observables, schedule=schedule)


def prepare_singlet_product(n_atoms: int) -> np.ndarray:
    """``prod_k (sigma_{2k-1}^+ - sigma_{2k}^+) |g...g>`` normalized (total spin zero)."""
    if n_atoms % 2:
        raise DomainError("a product of singlets needs an even number of atoms")
    pair = np.array([0.0, -1.0, 1.0, 0.0]) / np.sqrt(2.0)
    psi = np.ones(1)
    for _ in range(n_atoms // 2):
        psi = np.kron(psi, pair)
    return psi.astype(complex)


def photon_counts(record: TrajectoryRecord, bin_width: float, port: str = "perpendicular"):
    """Jump counts per time bin: individual jumps (``perpendicular``) or collective (``parallel``)."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    channel = {"perpendicular": "individual", "parallel": "collective"}.get(port)
    if channel is None:
        raise ValueError("port must be 'perpendicular' or 'parallel'")
    t_end = float(record.times[-1])
    n_bins = int(np.floor(t_end / bin_width + 1e-9))
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(record.jump_times(channel), bins=edges)
    return edges, counts


def expected_counts_perpendicular(n_atoms: int, sz_mean: float, gamma_s: float, bin_width: float) -> float:
    """Mean individual-jump count per bin, ``(N/2 + <Sz>) gamma_s dt``."""
    return (n_atoms / 2 + sz_mean) * gamma_s * bin_width


def expected_counts_parallel(intensity: float, gamma_c: float, bin_width: float) -> float:
    """Mean collective-jump count per bin, ``<S+S-> gamma_c dt``."""
    return intensity * gamma_c * bin_width


@dataclass
class SwitchingStats:
    thresholds: tuple
    dwell_plus: list
    dwell_minus: list
    transitions: list  # (t_leave, t_enter, direction) with direction "+-" or "-+"
    rate_plus: float | None = None  # escape rate from the low-Sz (correlated) phase
    rate_minus: float | None = None
    insufficient: bool = False


def thresholds_from_levels(level_plus: float, level_minus: float, margin: float = 0.25):
    """Hysteresis band inside two plateau levels, ``margin`` of the gap in from each."""
    gap = level_minus - level_plus
    return level_plus + margin * gap, level_minus - margin * gap


def smooth_signal(times, signal, window: float, causal: bool = False) -> np.ndarray:
    """Moving average over ``window`` time units (trailing when ``causal``)."""
    times = np.asarray(times, float)
    signal = np.asarray(signal, float)
    if window <= 0:
        return signal.copy()
    dt = times[1] - times[0]
    k = max(int(round(window / dt)), 1)
    csum = np.concatenate([[0.0], np.cumsum(signal)])
    idx = np.arange(signal.size)
    if causal:
        lo, hi = np.maximum(idx - k + 1, 0), idx + 1
    else:
        lo = np.maximum(idx - k // 2, 0)
        hi = np.minimum(lo + k, signal.size)
        lo = np.maximum(hi - k, 0)
    return (csum[hi] - csum[lo]) / (hi - lo)


def hysteresis_phases(signal, thresholds) -> np.ndarray:
    """Phase label per sample: ``+`` once below ``low``, ``-`` once above ``high``, '' before either."""
    low, high = thresholds
    out = np.empty(len(signal), dtype="<U1")
    phase = ""
    for k, s in enumerate(signal):
        if s <= low:
            phase = "+"
        elif s >= high:
            phase = "-"
        out[k] = phase
    return out


def detect_switches(times, signal, thresholds, smooth: float = 0.0) -> SwitchingStats:
    """Two-threshold detector on ``<Sz>(t)``: below ``low`` is phase +, above ``high`` phase -.

    ``smooth`` applies a centred moving average (in time units) first, which
    suppresses single-jump excursions across the band.  Dwell times are
    measured between completed transitions; the first and last (censored)
    dwells are discarded.
    """
    low, high = thresholds
    if not low < high:
        raise ValueError("need low < high")
    times = np.asarray(times, float)
    signal = smooth_signal(times, signal, smooth) if smooth > 0 else np.asarray(signal, float)
    phase, last_in = None, None
    transitions = []
    for t, s in zip(times, signal):
        if s <= low:
            if phase == "-":
                transitions.append((last_in, t, "-+"))
            phase, last_in = "+", t
        elif s >= high:
            if phase == "+":
                transitions.append((last_in, t, "+-"))
            phase, last_in = "-", t
    dwell_plus, dwell_minus = [], []
    for (_, t_a, d_a), (t_b, _, _) in zip(transitions, transitions[1:]):
        (dwell_plus if d_a == "-+" else dwell_minus).append(t_b - t_a)
    stats = SwitchingStats((low, high), dwell_plus, dwell_minus, transitions)
    if len(dwell_plus) < 2 or len(dwell_minus) < 2:
        stats.insufficient = True
        return stats
    stats.rate_plus = 1.0 / float(np.mean(dwell_plus))
    stats.rate_minus = 1.0 / float(np.mean(dwell_minus))
    return stats


@dataclass
class CountCheck:
    phase: str
    port: str
    n_bins: int
    observed: float  # mean counts per bin
    expected: float  # mean of the integrated conditional jump rate per bin
    z_score: float


def stationary_count_check(record: TrajectoryRecord, bin_width: float, thresholds,
                           smooth: float = 1.0, settle: float = 2.0) -> list[CountCheck]:
    """Counting self-test on stationary stretches of each phase.

    A bin is assigned to a phase using only the trajectory up to its start
    (trailing average of ``<Sz>`` and the hysteresis band) and only when the
    phase has been unchanged for ``settle``.  Its counts are compared with
    the integrated conditional rates ``gamma_s (N/2 + <Sz>)`` and
    ``gamma_c <S+S->`` over the same bin; the z-score uses Poisson statistics.
    """
    p = record.params
    t = record.times
    dt = t[1] - t[0]
    phases = hysteresis_phases(smooth_signal(t, record.observables["sz"], smooth, causal=True),
                               thresholds)
    changed = np.concatenate([[0], np.flatnonzero(phases[1:] != phases[:-1]) + 1])
    last_change = t[changed[np.searchsorted(changed, np.arange(t.size), side="right") - 1]]
    rates = {
        "perpendicular": p.gamma_s * (p.n_atoms / 2 + record.observables["sz"]),
        "parallel": p.gamma_c * record.observables["intensity"],
    }
    per_bin = int(round(bin_width / dt))
    out = []
    for port, rate in rates.items():
        edges, counts = photon_counts(record, bin_width, port)
        for ph in "+-":
            obs, exp = [], []
            for b in range(len(counts)):
                k0 = b * per_bin
                if k0 + per_bin >= t.size:
                    break
                if phases[k0] != ph or t[k0] - last_change[k0] < settle:
                    continue
                obs.append(counts[b])
                exp.append(trapezoid(rate[k0: k0 + per_bin + 1], dx=dt))
            if not obs:
                continue
            tot_o, tot_e = float(np.sum(obs)), float(np.sum(exp))
            z = (tot_o - tot_e) / np.sqrt(tot_e) if tot_e > 0 else 0.0
            out.append(CountCheck(ph, port, len(obs), tot_o / len(obs), tot_e / len(exp), float(z)))
    return out


def individual_jumps_in_transitions(record: TrajectoryRecord, stats: SwitchingStats,
                                    direction: str = "+-") -> list[int]:
    """Number of individual jumps inside each detected transition window."""
    t_ind = record.jump_times("individual")
    out = []
    for t0, t1, d in stats.transitions:
        if d == direction:
            out.append(int(np.count_nonzero((t_ind >= t0) & (t_ind <= t1))))
    return out


def _run_one(args):
    params, initial, t_final, seed, sample_dt, observables, schedule = args
    return mcwf_run(params, initial, t_final, seed, sample_dt, observables, schedule)


def run_ensemble(params: ModelParams, seeds, initial="ground", t_final: float = 10.0,
                 sample_dt: float = 0.05, observables=FAST_OBSERVABLES, schedule=None,
                 workers: int = 1) -> list[TrajectoryRecord]:
    """Independent trajectories, returned in seed order."""
    seeds = list(seeds)
    jobs = [(params, initial, t_final, s, sample_dt, observables, schedule) for s in seeds]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def ensemble_average(records, key: str = "sz"):
    """Mean and standard error of a sampled observable across trajectories."""
    data = np.vstack([r.observables[key] for r in records])
    mean = data.mean(axis=0)
    sem = data.std(axis=0, ddof=1) / np.sqrt(data.shape[0]) if data.shape[0] > 1 else np.zeros_like(mean)
    return mean, sem


def write_manifest(path, params: ModelParams, seeds, files, extra=None) -> None:
    from . import __version__

    payload = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "params": params.as_dict(),
        "seeds": list(seeds),
        "files": [str(f) for f in files],
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2))

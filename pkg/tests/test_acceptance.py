"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS`` / ``FAIL`` line; the lines are repeated in the
terminal summary.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import contextlib
import functools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from competing_decay import (
    BlockDensityMatrix,
    MeanFieldParams,
    ModelParams,
    build_liouvillian_pi,
    evolve,
    metastable_decomposition,
    mixture_weights,
    spectral_gap,
    steady_state,
    xi2_analytic,
)
from competing_decay.fullspace import build_liouvillian_full, steady_state_full
from competing_decay.meanfield import (
    bistability_window,
    estimate_pt_point,
    mf_integrate,
    mf_rhs,
    mf_steady_states,
    stable_branches,
)
from competing_decay.observables import (
    crss_alpha,
    crss_state,
    expect,
    fidelity,
    g2_zero,
    intensity,
    magnetization_distribution,
    spin_squeezing_numeric,
)
from competing_decay.trajectories import (
    detect_switches,
    ensemble_average,
    hysteresis_phases,
    individual_jumps_in_transitions,
    mcwf_run,
    prepare_singlet_product,
    quench_protocol,
    run_ensemble,
    smooth_signal,
    stationary_count_check,
    thresholds_from_levels,
)

GAMMA_C = 10.0


@contextlib.contextmanager
def criterion(request, tag, title):
    notes = []
    start = time.perf_counter()
    try:
        yield notes
    except BaseException as exc:
        line = f"{tag} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0][:160]}"
        raise
    else:
        line = f"{tag} PASS  {title}"
    finally:
        detail = "; ".join(notes)
        line += f"  [{time.perf_counter() - start:.1f} s{'; ' + detail if detail else ''}]"
        print(line)
        request.config.acceptance_lines.append(line)


def _moments(rho):
    ss = intensity(rho)
    return np.array([expect(rho, "Sz").real, expect(rho, "Sx").real, expect(rho, "Sy").real,
                     expect(rho, "Ssquared").real, ss, g2_zero(rho) * ss**2])


@functools.cache
def _pair(n, ratio):
    p = ModelParams.from_ratio(n, GAMMA_C, ratio)
    lv = build_liouvillian_pi(p)
    rho_s = steady_state(lv)
    res = spectral_gap(lv)
    pair = metastable_decomposition(res.rho_1)
    mixture_weights(rho_s, pair)
    return p, res.lambda_1, rho_s, pair


def _magnetization(p):
    return expect(steady_state(build_liouvillian_pi(p)), "Sz").real


@functools.cache
def _pt_estimate():
    return estimate_pt_point(range(16, 33, 2), GAMMA_C, _magnetization)


def test_c01_oracle_equivalence(request):
    with criterion(request, "C1", "block solver matches the 2^N oracle (N = 2..6)") as notes:
        worst = [0.0]

        @settings(max_examples=10, derandomize=True, database=None, deadline=None)
        @given(ratio_c=st.floats(0.2, 40.0), omega=st.floats(0.05, 2.0))
        def check(n, ratio_c, omega):
            p = ModelParams.from_ratio(n, ratio_c, omega)
            d = np.abs(_moments(steady_state(build_liouvillian_pi(p)))
                       - _moments(steady_state_full(build_liouvillian_full(p)))).max()
            worst[0] = max(worst[0], d)
            assert d < 1e-7

        t0 = time.perf_counter()
        for n in range(2, 7):
            check(n)
        elapsed = time.perf_counter() - t0
        notes.append(f"max delta {worst[0]:.1e}")
        assert elapsed < 120


def test_c02_mixed_state_asymptotics(request):
    with criterion(request, "C2", "N = 18, Omega = 3 Omega_c approaches the mixed state") as notes:
        n = 18
        rho = steady_state(build_liouvillian_pi(ModelParams.from_ratio(n, GAMMA_C, 3.0)))
        ss, g2, s2 = intensity(rho), g2_zero(rho), expect(rho, "Ssquared").real
        notes.append(f"<S+S-> {ss:.3f}, g2 {g2:.4f}, <S^2> {s2:.3f}")
        assert abs(ss / (n / 2) - 1) < 0.05
        assert abs(g2 / (2 * (1 - 1 / n)) - 1) < 0.05
        assert abs(s2 / (0.75 * n) - 1) < 0.15


def test_c03_transition_point(request):
    with criterion(request, "C3", "transition point extrapolates into [0.58, 0.64] Omega_c") as notes:
        t0 = time.perf_counter()
        est = _pt_estimate()
        ratios = np.array(est.omega_ratios)
        notes.append("per-N " + ", ".join(f"{n}:{r:.4f}" for n, r in zip(est.n_values, ratios)))
        notes.append(f"asymptote {est.asymptote:.4f}")
        steps = np.diff(ratios)
        assert np.all(steps < 0), "not monotone in N"
        assert np.all(np.abs(steps[1:]) < np.abs(steps[:-1])), "steps do not shrink"
        assert np.all(ratios > est.asymptote)
        assert 0.58 <= est.asymptote <= 0.64
        assert time.perf_counter() - t0 < 600


def test_c04_bimodality(request):
    with criterion(request, "C4", "P_m bimodal at the transition, N = 32") as notes:
        n = 32
        est = _pt_estimate()
        r_pt = est.omega_ratios[est.n_values.index(n)]
        p = ModelParams.from_ratio(n, GAMMA_C, r_pt)
        pm = magnetization_distribution(steady_state(build_liouvillian_pi(p)))
        ms = np.array(sorted(pm))
        probs = np.array([pm[m] for m in ms])
        smooth = np.convolve(np.pad(probs, 1, mode="edge"), np.ones(3) / 3, mode="valid")
        peaks = [float(ms[k]) for k in range(1, len(ms) - 1)
                 if smooth[k] > smooth[k - 1] and smooth[k] >= smooth[k + 1]]
        low, up = stable_branches(p)
        targets = [n / 2 * low.s_z, n / 2 * up.s_z]
        notes.append(f"Omega {r_pt:.4f} Omega_c; peaks at m = {peaks}; mean field {targets[0]:.2f}, "
                     f"{targets[1]:.2f}")
        assert len(peaks) == 2
        assert abs(peaks[0] - targets[0]) <= 2 and abs(peaks[1] - targets[1]) <= 2


def test_c05_gap_closing(request):
    with criterion(request, "C5", "gap closes exponentially at 0.61 Omega_c") as notes:
        ns = np.arange(6, 19, 2)
        lam = np.array([spectral_gap(ModelParams.from_ratio(int(n), GAMMA_C, 0.61)).lambda_1 for n in ns])
        y = np.log(lam)
        slope, icpt = np.polyfit(ns, y, 1)
        r2 = 1 - np.sum((y - slope * ns - icpt) ** 2) / np.sum((y - y.mean()) ** 2)
        notes.append("lambda_1 " + ", ".join(f"{v:.3f}" for v in lam) + f"; R^2 {r2:.4f}")
        assert np.all(np.diff(lam) < 0)
        assert r2 >= 0.95


def test_c06_metastable_decomposition(request):
    with criterion(request, "C6", "metastable pair at N = 18, Omega = 0.73 Omega_c") as notes:
        p, _, _, pair = _pair(18, 0.73)
        low, up = stable_branches(p)
        sz_p, sz_m = expect(pair.rho_plus, "Sz").real, expect(pair.rho_minus, "Sz").real
        notes.append(f"Sz+ {sz_p:.3f} vs {9 * low.s_z:.3f}; Sz- {sz_m:.3f} vs {9 * up.s_z:.3f}; "
                     f"a+ {pair.a_plus:.3f}, a- {pair.a_minus:.3f}")
        assert abs(sz_p - 9 * low.s_z) < 0.05 * 9
        assert abs(sz_m - 9 * up.s_z) < 0.05 * 9
        assert abs(pair.a_plus - 0.4) <= 0.1 and abs(pair.a_minus - 0.5) <= 0.1


def test_c07_crss_physics(request):
    with criterion(request, "C7", "rho_+ is CRSS-like for Omega in [0.3, 0.6] Omega_c") as notes:
        worst_f, worst_g = 1.0, 0.0
        for r in np.arange(0.30, 0.601, 0.05):
            _, _, _, pair = _pair(18, round(float(r), 3))
            f = fidelity(pair.rho_plus, crss_state(18, crss_alpha(18, r)))
            g = abs(g2_zero(pair.rho_plus) - 1)
            worst_f, worst_g = min(worst_f, f), max(worst_g, g)
        notes.append(f"min fidelity {worst_f:.4f}; max |g2 - 1| {worst_g:.4f}")
        assert worst_f >= 0.9 and worst_g <= 0.1


def test_c08_squeezing(request):
    with criterion(request, "C8", "linearized squeezing (large Gamma, N = 18 sweep, no individual decay)") as notes:
        p = MeanFieldParams(1.0, 1e4).with_omega_ratio(1 / np.sqrt(2))
        xi_a = xi2_analytic(p, branch_order=0).xi2
        notes.append(f"(a) {xi_a:.6f} vs {1 / np.sqrt(3):.6f}")
        assert abs(xi_a - 1 / np.sqrt(3)) < 1e-3
        worst = 0.0
        for r in np.arange(0.30, 0.601, 0.05):
            p18, _, _, pair = _pair(18, round(float(r), 3))
            worst = max(worst, abs(xi2_analytic(p18).xi2 - spin_squeezing_numeric(pair.rho_plus)))
        notes.append(f"(b) max delta {worst:.4f}")
        assert worst <= 0.05
        worst_c = 0.0
        for n in (10, 18, 64):
            for r in np.linspace(0.0, 0.99, 34):
                pc = ModelParams.from_ratio(n, GAMMA_C, r, gamma_s=0.0)
                worst_c = max(worst_c, abs(xi2_analytic(pc).xi2 - np.sqrt(1 - r**2)))
        notes.append(f"(c) max delta {worst_c:.1e}")
        assert worst_c < 1e-9


def test_c09_mean_field_suite(request):
    with criterion(request, "C9", "mean-field roots, window, stability and attractors") as notes:
        t0 = time.perf_counter()

        @settings(max_examples=200, derandomize=True, database=None, deadline=None)
        @given(gamma=st.floats(0.05, 5.0), ratio=st.floats(1.0, 500.0), w=st.floats(0.0, 1.5))
        def roots_zero_rhs(gamma, ratio, w):
            p = MeanFieldParams(gamma, gamma * ratio).with_omega_ratio(w)
            for b in mf_steady_states(p):
                assert np.abs(mf_rhs(b.state, p)).max() < 1e-10 * max(1.0, p.Gamma)

        roots_zero_rhs()
        p = MeanFieldParams(1.0, 15.0)
        lo, hi = bistability_window(p)
        for w in np.linspace(0.0, 1.2, 200):
            sols = mf_steady_states(p.with_omega_ratio(w))
            if lo < w < hi:
                assert len(sols) == 3
                assert sols[1].stability == "unstable" and sols[0].stable and sols[2].stable
            elif w < lo or w > hi:
                assert len(sols) == 1
        p = p.with_omega_ratio(0.5 * (lo + hi))
        stable = [b.s_z for b in mf_steady_states(p) if b.stable]
        rng = np.random.default_rng(2024)
        hits = {0: 0, 1: 0}
        for _ in range(100):
            v = rng.normal(size=3)
            v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
            _, traj = mf_integrate(v, p, 80.0, 5)
            d = [abs(traj[-1, 2] - s) for s in stable]
            assert min(d) < 1e-6
            hits[int(np.argmin(d))] += 1
        elapsed = time.perf_counter() - t0
        notes.append(f"window [{lo:.4f}, {hi:.4f}]; attractor hits {hits}")
        assert elapsed < 60


@functools.cache
def _long_switching_run():
    p = ModelParams.from_ratio(12, GAMMA_C, 0.8)
    return p, mcwf_run(p, "ground", 500.0, 7)


def test_c10_trajectories(request):
    with criterion(request, "C10", "trajectories: ensemble, switching, counts, jumps") as notes:
        t0 = time.perf_counter()
        for n in (4, 6):
            p = ModelParams.from_ratio(n, GAMMA_C, 0.8)
            recs = run_ensemble(p, range(1000), t_final=3.0, sample_dt=0.25)
            mean, sem = ensemble_average(recs)
            exact = evolve(BlockDensityMatrix.ground(n), build_liouvillian_pi(p), recs[0].times)
            sz = np.array([expect(s, "Sz").real for s in exact])
            z = np.abs(mean - sz)[1:] / sem[1:]
            notes.append(f"N={n} max |z| {z.max():.2f}")
            assert z.max() < 3.0

        p, rec = _long_switching_run()
        _, lam, _, pair = _pair(12, 0.8)
        level_p, level_m = expect(pair.rho_plus, "Sz").real, expect(pair.rho_minus, "Sz").real
        th = thresholds_from_levels(level_p, level_m)
        stats = detect_switches(rec.times, rec.observables["sz"], th, smooth=1.0 / p.gamma_s)
        pred_p, pred_m = lam * pair.a_minus, lam * pair.a_plus
        notes.append(f"rates {stats.rate_plus:.3f}/{stats.rate_minus:.3f} vs "
                     f"{pred_p:.3f}/{pred_m:.3f} over {len(stats.transitions)} transitions")
        assert not stats.insufficient
        assert 0.5 <= stats.rate_plus / pred_p <= 2 and 0.5 <= stats.rate_minus / pred_m <= 2

        checks = stationary_count_check(rec, 1.0 / p.gamma_s, th)
        notes.append("counts " + ", ".join(f"{c.port[:4]}{c.phase} {c.observed:.2f}/{c.expected:.2f}"
                                           f" (z {c.z_score:+.1f})" for c in checks))
        plateau = {"+": pair.rho_plus, "-": pair.rho_minus}
        notes.append("rho_pm levels " + ", ".join(
            f"perp{ph} {(6 + expect(r, 'Sz').real) * p.gamma_s:.2f} par{ph} {intensity(r) * p.gamma_c:.1f}"
            for ph, r in plateau.items()))
        assert len(checks) == 4 and all(abs(c.z_score) < 3 for c in checks)

        jumps = individual_jumps_in_transitions(rec, stats, "+-")
        notes.append(f"individual jumps per +- window >= {min(jumps)}")
        assert jumps and min(jumps) >= 1
        assert time.perf_counter() - t0 < 900


def _first_phase(rec, thresholds, t_start, hold=2.0):
    """First hysteresis phase after ``t_start`` that persists for ``hold``."""
    t = rec.times
    phases = hysteresis_phases(smooth_signal(t, rec.observables["sz"], 1.0, causal=True), thresholds)
    k = int(np.searchsorted(t, t_start))
    while k < t.size:
        if not phases[k]:
            k += 1
            continue
        end = k
        while end < t.size and phases[end] == phases[k]:
            end += 1
        if t[end - 1] - t[k] >= hold:
            return str(phases[k])
        k = end
    return None


def test_c11_preparation_protocols(request):
    with criterion(request, "C11", "preparation: ground -> rho_+, singlet and quench -> rho_-") as notes:
        p, _, _, pair = _pair(12, 0.8)
        th = thresholds_from_levels(expect(pair.rho_plus, "Sz").real, expect(pair.rho_minus, "Sz").real)
        seeds = range(8)
        outcomes = {"ground": [], "singlet": [], "quench": []}
        for s in seeds:
            outcomes["ground"].append(_first_phase(mcwf_run(p, "ground", 20.0, s), th, 0.5))
            outcomes["singlet"].append(
                _first_phase(mcwf_run(p, prepare_singlet_product(12), 20.0, s), th, 0.5))
            rec = quench_protocol(p, [(0.0, 3 * p.omega_c), (2.0, p.omega)], t_final=22.0, seed=s)
            outcomes["quench"].append(_first_phase(rec, th, 2.5))
        want = {"ground": "+", "singlet": "-", "quench": "-"}
        frac = {k: sum(o == want[k] for o in v) / len(v) for k, v in outcomes.items()}
        notes.append(", ".join(f"{k} {frac[k]:.2f}" for k in frac))
        assert all(f >= 0.75 for f in frac.values())


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))

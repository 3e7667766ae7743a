"""Exit-criteria suite: one test per acceptance criterion, each printing a PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from cuscoflow import cli
from cuscoflow import cusco as cm
from cuscoflow import invariance as inv
from cuscoflow import lyapunov as ly
from cuscoflow import operators as op
from cuscoflow.geometry import Ball, box
from cuscoflow.integrator import (
    DistanceTo,
    FixedSelection,
    IntegratorConfig,
    Steered,
    divergence_bound,
    growth_bound,
    integrate,
)
from cuscoflow.reporting import FAIL, PASS
from cuscoflow.sampling import Sampler
from cuscoflow.systems import canned_systems, point_set_ball_drift

pytestmark = pytest.mark.acceptance

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def random_psd(rng, n, scale=1.0):
    B = rng.normal(size=(n, n))
    return scale * B @ B.T / n


# -- 1: resolvent suite ------------------------------------------------------------

def resolvent_variants(rng, n=3):
    Q = random_psd(rng, n)
    K = rng.normal(size=(n, n))
    M = K - K.T + random_psd(rng, n, 0.2)
    return {
        "NormalConeOf": op.NormalConeOf(box(-np.ones(n), np.ones(n))),
        "QuadraticGradient": op.QuadraticGradient(Q, rng.normal(size=n)),
        "LinearMonotone": op.LinearMonotone(M),
        "ScaledNormSubdiff": op.ScaledNormSubdiff(0.7, n),
        "SumWithNormalCone": op.SumWithNormalCone(op.QuadraticGradient(Q), box(-np.ones(n), np.ones(n))),
    }


def test_criterion_1_resolvent_suite(criterion):
    rng = np.random.default_rng(1)
    variants = resolvent_variants(rng)
    lams = (1e-3, 1e-2, 1e-1, 1.0)
    pairs = 2.0 * rng.normal(size=(1000, 2, 3))
    tol = 1e-7
    start = time.perf_counter()
    worst_firm, worst_incl = -math.inf, 0.0
    for A in variants.values():
        for lam in lams:
            for y1, y2 in pairs:
                x1, x2 = A.resolvent(lam, y1), A.resolvent(lam, y2)
                d = x1 - x2
                worst_firm = max(worst_firm, float(d @ d - d @ (y1 - y2)))
                w = (y1 - x1) / lam
                worst_incl = max(worst_incl, float(np.linalg.norm(op.project_onto_value(A, x1, w) - w)))
    elapsed = time.perf_counter() - start
    ok = worst_firm <= tol and worst_incl <= tol and elapsed < 5.0
    criterion(1, ok, f"firm-nonexpansive excess {worst_firm:.2e}, inclusion residual {worst_incl:.2e}, "
                     f"{elapsed:.2f}s (limit 5s)")
    assert worst_firm <= tol
    assert worst_incl <= tol
    assert elapsed < 5.0


# -- 2: gradient-flow Lyapunov equality ------------------------------------------------

def test_criterion_2_gradient_flow_equality(criterion):
    start = time.perf_counter()
    A = op.QuadraticGradient(np.eye(2))
    F = cm.constant_singleton([0, 0])
    V = ly.NormPower(2, 0.5, 2)
    pairs = {"a=0": ly.LyapunovPair(V, ly.NormPower(2, 1.0, 2), 0.0),
             "a=2": ly.LyapunovPair(V, ly.ConvexQuadratic.zero(2), 2.0)}
    T = 3.0
    details, ok = [], True
    for h in (1e-2, 1e-3):
        traj = integrate(A, F, IntegratorConfig(h, T), [1, 0])
        t = traj.times
        oracle = {"a=0": 0.5 * np.exp(-2 * t) + 0.5 * (1 - np.exp(-2 * t)),
                  "a=2": np.exp(2 * t) * 0.5 * np.exp(-2 * t)}
        for name, pair in pairs.items():
            chk = ly.verify_along_trajectory(pair, traj)
            dev = float(np.max(np.abs(chk.lhs - chk.V0)))
            assert np.allclose(oracle[name], 0.5)
            ok &= chk.V0 == 0.5 and dev <= 5 * h
            details.append(f"{name} h={h:g}: {dev:.2e} ≤ {5 * h:g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 2.0
    criterion(2, ok, "; ".join(details) + f"; {elapsed:.2f}s (limit 2s)")
    assert ok


# -- 3: growth and divergence bounds ----------------------------------------------------

def random_system(rng):
    kind = rng.integers(4)
    n = 2
    if kind == 0:
        A = op.QuadraticGradient(random_psd(rng, n), rng.normal(size=n))
    elif kind == 1:
        K = rng.normal(size=(n, n))
        A = op.LinearMonotone(K - K.T + random_psd(rng, n, 0.3))
    elif kind == 2:
        A = op.ScaledNormSubdiff(rng.uniform(0.2, 1.0), n)
    else:
        A = op.NormalConeOf(Ball(rng.normal(size=n) * 0.2, rng.uniform(0.8, 1.5)))
    C = 0.5 * rng.normal(size=(n, n))
    F = cm.BallValued(cm.AffineMap(C, rng.normal(size=n)), cm.RadiusMap(rng.uniform(0.1, 0.8), dim=n))
    x0 = A.project_to_domain(rng.normal(size=n))
    return A, F, x0


def selection_runs(A, F, x0, h, T):
    pts = F.extreme_points(x0)
    return [integrate(A, F, IntegratorConfig(h, T, FixedSelection(p)), x0) for p in pts[:2]]


def bound_violations(A, F, x0, runs):
    a, b = runs
    c = max(a.selection_constant, b.selection_constant, 1e-12)
    growth = max(max(0.0, float(np.linalg.norm(x - x0)) - growth_bound(F, A, x0, c, t))
                 for t, x in zip(a.times, a.states))
    div = max(max(0.0, float(np.linalg.norm(xa - xb)) - divergence_bound(F, A, x0, c, t))
              for t, xa, xb in zip(a.times, a.states, b.states))
    return growth, div


def gap_to_reference(run, ref, h, ref_h):
    stride = int(round(h / ref_h))
    return float(np.max(np.linalg.norm(run.states - ref.states[::stride], axis=1)))


def test_criterion_3_growth_divergence(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    systems = [random_system(rng) for _ in range(10)]
    T, ref_h = 1.0, 1e-4
    hs = (1e-2, 1e-3)
    viol = {h: [] for h in hs}
    gaps = {h: [] for h in hs}
    for A, F, x0 in systems:
        ref = selection_runs(A, F, x0, ref_h, T)[0]
        for h in hs:
            runs = selection_runs(A, F, x0, h, T)
            viol[h].append(bound_violations(A, F, x0, runs))
            gaps[h].append(gap_to_reference(runs[0], ref, h, ref_h))
    ok = True
    for h in hs:
        ok &= all(g <= h and d <= h for g, d in viol[h])  # C = 1
    for i in range(len(systems)):
        for j in (0, 1):
            ok &= viol[1e-3][i][j] <= viol[1e-2][i][j] / 5.0
        # the O(h) term the discrete bound absorbs: gap to a fine reference run
        ok &= gaps[1e-3][i] <= gaps[1e-2][i] / 5.0
    worst = {h: (max(v[0] for v in viol[h]), max(v[1] for v in viol[h])) for h in hs}
    shrink = min(g2 / g3 for g2, g3 in zip(gaps[1e-2], gaps[1e-3]) if g3 > 0)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30.0
    criterion(3, ok, f"max violation growth/divergence h=1e-2: {worst[1e-2][0]:.2e}/{worst[1e-2][1]:.2e}, "
                     f"h=1e-3: {worst[1e-3][0]:.2e}/{worst[1e-3][1]:.2e} (C=1); "
                     f"discretization gap shrink min {shrink:.1f}x (need 5x); {elapsed:.2f}s (limit 30s)")
    assert ok


# -- 4: strong-invariance equivalence ---------------------------------------------------

def test_criterion_4_strong_equivalence(criterion):
    start = time.perf_counter()
    variants = ("tangent-projected", "normal-projected", "normal-inf", "normal-inf-truncated")
    disagreements, system_ok = 0, True
    for s in canned_systems():
        pts = Sampler(200).boundary_points(s.S)
        assert len(pts) == 200
        per_variant = {}
        for v in variants:
            rep = inv.certify_strong(s.S, s.A, s.F, v, points=pts)
            per_variant[v] = [p.margin <= rep.tol for p in rep.points]
            system_ok &= rep.verdict == (PASS if s.invariant else FAIL)
        ref = per_variant[variants[0]]
        disagreements += sum(sum(a != b for a, b in zip(ref, per_variant[v])) for v in variants[1:])
    elapsed = time.perf_counter() - start
    ok = disagreements == 0 and system_ok and elapsed < 20.0
    criterion(4, ok, f"{disagreements} pointwise disagreements over 6 systems x 200 points x 4 variants, "
                     f"system verdicts {'as expected' if system_ok else 'WRONG'}; {elapsed:.2f}s (limit 20s)")
    assert ok


# -- 5: soundness cross-check ------------------------------------------------------------

def test_criterion_5_soundness(criterion):
    start = time.perf_counter()
    h, T = 1e-2, 5.0
    ok, lines = True, []
    for s in canned_systems():
        verdict = inv.certify_strong(s.S, s.A, s.F, "normal-inf", Sampler(200)).verdict
        starts = Sampler(10).boundary_points(s.S)
        evidence = [inv.falsify_by_simulation(s.S, s.A, s.F, x0, IntegratorConfig(h, T)) for x0 in starts]
        n_sel = {len(e.runs) for e in evidence}
        max_d = max(r.max_distance for e in evidence for r in e.runs)
        falsified = any(e.falsified for e in evidence)
        if verdict == PASS:
            ok &= not falsified and max_d <= 10 * h
        else:
            ok &= falsified
        lines.append(f"{s.name}: {verdict}, max d_S {max_d:.2e}, selections/start {sorted(n_sel)}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    criterion(5, ok, "; ".join(lines) + f"; {elapsed:.2f}s (limit 60s)")
    assert ok


# -- 6: weak/strong separation --------------------------------------------------------------

def test_criterion_6_weak_strong_separation(criterion):
    start = time.perf_counter()
    s = point_set_ball_drift()
    weak = inv.certify_weak(s.S, s.A, s.F, sampler=Sampler(16))
    strong = inv.certify_strong(s.S, s.A, s.F, sampler=Sampler(16))
    cfg = IntegratorConfig(1e-2, 1.0)
    steered = integrate(s.A, s.F, IntegratorConfig(cfg.h, cfg.T, Steered(DistanceTo(s.S))), [0, 0])
    fixed = integrate(s.A, s.F, IntegratorConfig(cfg.h, cfg.T, FixedSelection(np.array([1.0, 0.0]))), [0, 0])
    facts = {
        "weak passes": weak.verdict == PASS,
        "strong fails": strong.verdict == FAIL,
        "steered stays at θ": bool(np.all(steered.states == 0.0)),
        "fixed selection exits": s.S.distance(fixed.final) > 10 * cfg.h,
    }
    elapsed = time.perf_counter() - start
    ok = all(facts.values()) and elapsed < 2.0
    criterion(6, ok, ", ".join(f"{k}: {v}" for k, v in facts.items()) + f"; {elapsed:.2f}s (limit 2s)")
    assert ok


# -- 7: envelope suite ------------------------------------------------------------------------

def test_criterion_7_envelopes(criterion):
    start = time.perf_counter()
    Ws = {"x^2": ly.NormPower(2, 1.0, 1), "|x|": ly.NormPower(1, 1.0, 1),
          "max-affine": ly.MaxAffine([[2.0], [-3.0], [0.5]], [0.0, 1.0, -0.2])}
    xs = np.linspace(-3, 3, 100)
    ks = (0.5, 1.0, 2.0, 4.0)
    grid = ly.GridSpec(-8.0, 8.0)
    worst = {"lip": -math.inf, "mono": -math.inf, "below": -math.inf, "grid": 0.0}
    for W in Ws.values():
        vals = {k: np.array([ly.pasch_hausdorff(W, k, [x]) for x in xs]) for k in ks}
        for k in ks:
            slopes = np.abs(np.diff(vals[k])) / np.diff(xs)
            worst["lip"] = max(worst["lip"], float(np.max(slopes - k)))
            worst["below"] = max(worst["below"], float(np.max(vals[k] - W.values(xs[:, None]))))
        for k1, k2 in zip(ks, ks[1:]):
            worst["mono"] = max(worst["mono"], float(np.max(vals[k1] - vals[k2])))
        oracle = np.array([ly.pasch_hausdorff(W, 1.0, [x], grid) for x in xs])
        worst["grid"] = max(worst["grid"], float(np.max(np.abs(oracle - vals[1.0]))))
    elapsed = time.perf_counter() - start
    ok = (worst["lip"] <= 1e-9 and worst["mono"] <= 1e-12 and worst["below"] <= 1e-12
          and worst["grid"] <= 1e-6 and elapsed < 5.0)
    criterion(7, ok, f"Lipschitz excess {worst['lip']:.1e}, monotonicity excess {worst['mono']:.1e}, "
                     f"W_k - W max {worst['below']:.1e}, grid mismatch {worst['grid']:.1e} (tol 1e-6); "
                     f"{elapsed:.2f}s (limit 5s)")
    assert ok


# -- 8: transform suite ------------------------------------------------------------------------

def lifted_deviation(pair, A, F, x0, v0, k, h, T):
    """Max componentwise gap between the lifted run and (x(t), ∫W_k, t, γ0) from a fine reference."""
    sys = ly.epigraph_transform(pair, A, F, k)
    Wk = sys.F.Wk
    gamma0 = 0.25
    z0 = ly.lift_state(x0, 0.0, 0.0, gamma0)
    lifted = integrate(sys.A, sys.F, IntegratorConfig(h, T, FixedSelection(np.concatenate([v0, [Wk.value(x0), 1, 0]]))), z0)
    fine_h = h / 100
    ref = integrate(A, F, IntegratorConfig(fine_h, T, FixedSelection(np.asarray(v0, float))), x0)
    w = np.array([Wk.value(x) for x in ref.states])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * fine_h)])
    idx = np.arange(0, len(ref.times), 100)
    expected = np.column_stack([ref.states[idx], integral[idx], ref.times[idx], np.full(idx.size, gamma0)])
    return float(np.max(np.abs(lifted.states - expected)))


def test_criterion_8_transform(criterion):
    start = time.perf_counter()
    h, T = 1e-2, 2.0
    half = ly.NormPower(2, 0.5, 2)
    cases = [
        ("gradient flow, W=|x|^2",
         ly.LyapunovPair(half, ly.NormPower(2, 1.0, 2), 0.0), op.QuadraticGradient(np.eye(2)),
         cm.constant_singleton([0, 0]), [1.0, 0.0], [0.0, 0.0], 4.0),
        ("sweeping ball, W=|x|",
         ly.LyapunovPair(half, ly.NormPower(1, 1.0, 2), 0.0), op.NormalConeOf(Ball([0, 0], 1)),
         cm.constant_ball([0.5, 0], 0.5), [0.0, 0.5], [1.0, 0.0], 1.0),
        ("rotation, W=max-affine",
         ly.LyapunovPair(half, ly.MaxAffine([[1.0, 0.0], [0.0, 1.0], [-0.5, -0.5]], [0.0, 0.0, 0.0]), 1.0),
         op.LinearMonotone([[0.1, 1.0], [-1.0, 0.1]]), cm.constant_singleton([0.2, 0]), [0.8, 0.0], [0.2, 0.0],
         2.0),
    ]
    devs = {name: lifted_deviation(pair, A, F, np.array(x0), np.array(v0), k, h, T)
            for name, pair, A, F, x0, v0, k in cases}
    elapsed = time.perf_counter() - start
    ok = all(d <= 10 * h for d in devs.values()) and elapsed < 10.0
    criterion(8, ok, ", ".join(f"{n}: {d:.2e}" for n, d in devs.items()) + f" (tol {10 * h:g}); "
                     f"{elapsed:.2f}s (limit 10s)")
    assert ok


# -- 9: determinism -----------------------------------------------------------------------------

RUNS = [
    ("simulate", "gradient_flow", []),
    ("simulate", "damped_box", []),
    ("check-invariance", "sweeping_ball", []),
    ("check-invariance", "damped_box", []),
    ("check-invariance", "drift_counterexample", []),
    ("check-invariance", "weak_point", []),
    ("check-invariance", "sweeping_ball", ["--variant", "tangent-projected"]),
    ("check-lyapunov", "gradient_flow", []),
    ("check-lyapunov", "drift_counterexample", []),
    ("sweep", "gradient_flow", ["--values", "1e-2", "5e-3"]),
]


def run_suite(root: Path) -> dict:
    out = {}
    for i, (cmd, name, extra) in enumerate(RUNS):
        d = root / f"{i:02d}-{cmd}-{name}"
        cli.main([cmd, str(SCENARIOS / f"{name}.json"), "--out", str(d), "--seed", "42"] + extra)
        for p in sorted(d.iterdir()):
            out[f"{d.name}/{p.name}"] = p.read_bytes()
    return out


def test_criterion_9_determinism(criterion, tmp_path):
    first = run_suite(tmp_path / "a")
    second = run_suite(tmp_path / "b")
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = bool(first) and first.keys() == second.keys() and not differing
    criterion(9, ok, f"{len(first)} report files compared byte-for-byte, {len(differing)} differ")
    assert ok

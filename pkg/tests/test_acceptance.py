"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerance."""

import math

import numpy as np
import pytest
from scipy.special import expit

from moma.agentroute import build_mask, kmeans, masked_decode
from moma.baselines import ClassifierParams, PairwiseParams
from moma.cache import PrefetchCache
from moma.catalog import ComparisonRecord, PreferenceMode
from moma.elo import compute_elo
from moma.encoder import HashingEncoder
from moma.errors import DataFormatError
from moma.gateway import AGENT, Gateway
from moma.grk import (
    base_probs,
    init_params,
    load_params,
    loss_and_grad,
    outcome_distribution,
    params_from_bytes,
    params_to_bytes,
    save_params,
    zero_params,
)
from moma.harness import HARNESS_AGENTS, HarnessConfig, _agent_registry, build_world, report_json, run_harness
from moma.selector import ParetoPoint, Weights, closeness, normalize, pareto_frontier, topsis_select


@pytest.fixture(scope="module")
def harness_runs():
    cfg = HarnessConfig()
    first, second = run_harness(cfg), run_harness(cfg)
    return first, report_json(first), report_json(second)


def _brute_frontier(points):
    def dominated(p):
        return any(q.cost <= p.cost and q.score >= p.score and (q.cost < p.cost or q.score > p.score) for q in points)

    return sorted(p.model_id for p in points if not dominated(p))


def _random_points(rng, n):
    if rng.random() < 0.5:
        grid = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
        cs, ss = rng.choice(grid, n), rng.choice(grid, n)
    else:
        cs, ss = rng.uniform(0, 10, n), rng.uniform(-3, 3, n)
    return [ParetoPoint(f"m{i:02d}", float(c), float(s)) for i, (c, s) in enumerate(zip(cs, ss))]


def test_01_grk_simplex(verdict):
    rng = np.random.default_rng(1)
    worst, all_positive = 0.0, True
    for _ in range(10_000):
        ba, bb = rng.uniform(-10, 10, 2)
        theta, kappa, mu = 1 + rng.uniform(1e-3, 20), rng.uniform(0.05, 10), rng.uniform(0, 5)
        p = outcome_distribution(ba, bb, theta, kappa, mu)
        worst = max(worst, abs(p.sum() - 1))
        all_positive &= bool(np.all(p > 0))
    verdict(1, "outcome probabilities lie on the simplex", worst < 1e-9 and all_positive, f"max |sum-1| = {worst:.2e}")


def test_02_gradient_oracle(verdict):
    rng = np.random.default_rng(2)
    p = init_params(10, 5, n_experts=3, top_k=2, kappa=1.7, margin=0.3, seed=5, scale=0.5)
    n = 16
    X = rng.normal(size=(n, p.d))
    ia = rng.integers(0, 5, n)
    ib = (ia + 1 + rng.integers(0, 4, n)) % 5
    y = rng.integers(0, 5, n)
    _, grads = loss_and_grad(p, X, ia, ib, y)
    g = np.concatenate([a.ravel() for a in grads])
    flat = p.flat()
    f = lambda v: loss_and_grad(p.with_flat(v), X, ia, ib, y, with_grad=False)[0]
    h, worst = 1e-5, 0.0
    coords = rng.choice(len(flat), 30, replace=False)
    for i in coords:
        e = np.zeros_like(flat)
        e[i] = h
        fd = (f(flat + e) - f(flat - e)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8))
    verdict(2, "analytic gradient matches central differences", worst < 1e-4, f"{len(coords)} coords, max rel err {worst:.2e}")


def test_03_spot_values(verdict):
    a = base_probs(0.4, 0.4, 3.0)
    b = base_probs(1.0, 0.0, math.e)
    err = max(
        abs(a[0] - 0.25), abs(a[1] - 0.25), abs(a[2] - 0.5),
        abs(b[0] - 0.5), abs(b[1] - 1 / (1 + math.e**2)),
    )
    verdict(3, "closed-form spot values", err < 1e-9, f"max err {err:.1e}")


def test_04_pareto_oracle(verdict):
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        pts = _random_points(rng, int(rng.integers(1, 13)))
        if sorted(p.model_id for p in pareto_frontier(pts)) != _brute_frontier(pts):
            mismatches += 1
    verdict(4, "frontier equals brute-force dominance filter", mismatches == 0, f"1000 sets, {mismatches} mismatches")


def _oracle_topsis(frontier, w):
    cs, ss = [p.cost for p in frontier], [p.score for p in frontier]
    sc = lambda v, lo, hi: 0.5 if hi == lo else (v - lo) / (hi - lo)
    best_key, best = None, None
    for p in frontier:
        c, s = sc(p.cost, min(cs), max(cs)), sc(p.score, min(ss), max(ss))
        dp = math.hypot(w.cost * c, w.score * (1 - s))
        dm = math.hypot(w.cost * (1 - c), w.score * s)
        r = 0.5 if dp + dm == 0 else dm / (dp + dm)
        key = (round(r, 12), p.score, -p.cost, [-ord(ch) for ch in p.model_id])
        if best_key is None or key > best_key:
            best_key, best = key, p.model_id
    return best


def test_05_topsis(verdict):
    w_list = [Weights(0.8, 0.2), Weights(0.5, 0.5), Weights(0.2, 0.8), Weights(1.0, 0.0)]
    extremes = all(closeness(0.0, 1.0, w) == 1.0 and closeness(1.0, 0.0, w) == 0.0 for w in w_list)

    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(1000):
        frontier = pareto_frontier(_random_points(rng, int(rng.integers(1, 13))))
        w = Weights(*rng.uniform(0.01, 1, 2))
        if topsis_select(frontier, w).chosen != _oracle_topsis(frontier, w):
            mismatches += 1

    # three collinear frontier points all at closeness 0.5: higher score wins
    line = [ParetoPoint("lo", 0.0, 0.0), ParetoPoint("mid", 1.0, 1.0), ParetoPoint("hi", 2.0, 2.0)]
    tie_score = topsis_select(line, Weights(0.5, 0.5)).chosen == "hi"
    # exact duplicates: equal score and cost, so the id decides
    dup = [ParetoPoint("zeta", 1.0, 1.0), ParetoPoint("alpha", 1.0, 1.0)]
    tie_id = topsis_select(dup, Weights(0.5, 0.5)).chosen == "alpha"
    ok = extremes and mismatches == 0 and tie_score and tie_id
    verdict(5, "TOPSIS extremes, oracle agreement and tie-breaks", ok,
            f"extremes={extremes}, {mismatches}/1000 mismatches, score tie={tie_score}, id tie={tie_id}")


def test_06_masking(verdict):
    rng = np.random.default_rng(6)
    leaked = bad_sum = bad_argmax = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 20))
        logits = rng.normal(0, 5, n)
        avail = rng.random(n) < 0.5
        avail[rng.integers(n)] = True
        mask = np.where(avail, 0.0, -np.inf)
        idx, probs = masked_decode(logits, mask)
        leaked += int(np.any(probs[~avail] != 0.0))
        bad_sum += int(abs(probs[avail].sum() - 1) > 1e-9)
        bad_argmax += int(not avail[idx])
    named = build_mask(["a", "b", "c"], {"c"})
    token, _ = masked_decode([9.0, 8.0, -1.0], named)
    ok = leaked == bad_sum == bad_argmax == 0 and token == "c"
    verdict(6, "masked tokens get zero mass, argmax never masked", ok,
            f"10000 pairs: leaked={leaked}, bad sums={bad_sum}, masked argmax={bad_argmax}")


def test_07_kmeans(verdict):
    rng = np.random.default_rng(7)
    increases = 0
    for inst in range(100):
        n = int(rng.integers(2, 40))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        if inst % 3 == 0:
            X = np.round(X, 1)
        r = kmeans(X, int(rng.integers(1, min(n, 8) + 1)), seed=inst)
        increases += sum(b > a for a, b in zip(r.history, r.history[1:]))
    Xn = rng.normal(size=(9, 4))
    zero = kmeans(Xn, 9).objective == 0.0
    verdict(7, "k-means objective never increases; k = n gives 0", increases == 0 and zero,
            f"100 instances, {increases} increases, k=n objective zero={zero}")


def test_08_elo(verdict):
    rng = np.random.default_rng(8)
    models = [f"m{i}" for i in range(6)]
    worst = 0.0
    for _ in range(200):
        recs = []
        for _ in range(int(rng.integers(0, 150))):
            a, b = rng.choice(models, 2, replace=False)
            recs.append(ComparisonRecord("q", str(a), str(b), int(rng.integers(0, 5))))
        t = compute_elo(recs)
        worst = max(worst, abs(sum(t.ratings.values()) - 1000.0 * len(t.ratings)))
    one = compute_elo([ComparisonRecord("q", "a", "b", 1)], k_factor=32)
    sixteen = one["a"] - 1000.0 == 16.0 and one["b"] - 1000.0 == -16.0
    verdict(8, "Elo total conserved; equal-rating win moves 16", worst < 1e-6 and sixteen,
            f"max drift {worst:.1e}, +/-16 exact={sixteen}")


def test_09_cache(verdict):
    enc = HashingEncoder(256, seed=0)
    world = build_world(HarnessConfig())
    params = zero_params(enc.dim, len(world.catalog))
    gw = Gateway(world.catalog, params, enc, _agent_registry(enc), cache=PrefetchCache())

    normalization_hits, consistent, routed = True, True, 0
    for _, _, examples in HARNESS_AGENTS:
        for ex in examples:
            ex = ex + " pls"
            first = gw.route(ex)
            if first.path != AGENT:
                continue
            routed += 1
            variant = "  " + ex.replace(" pls", " PLEASE").upper().replace(" ", " \t ") + "\n"
            again = gw.route(variant)
            normalization_hits &= again.cache_hit
            fresh = Gateway(world.catalog, params, enc, gw.registry).route(ex)
            consistent &= again.chosen == fresh.chosen == first.chosen and not fresh.cache_hit

    cap, trace_ok = 3, True
    c = PrefetchCache(cap, abbreviations={})
    order: list = []
    rng = np.random.default_rng(9)
    for i in range(2000):
        key = f"k{rng.integers(0, 6)}"
        if rng.random() < 0.5:
            if key in order:
                order.remove(key)
            elif len(order) == cap:
                order.pop(0)
            order.append(key)
            c.insert(key, (key,))
        else:
            got = c.lookup(key)
            if key in order:
                order.remove(key)
                order.append(key)
            trace_ok &= got == ((key,) if key in order else None)
        trace_ok &= c.keys() == order
    ok = routed >= 10 and normalization_hits and consistent and trace_ok
    verdict(9, "cache normalization hits, hit equals full route, LRU trace", ok,
            f"{routed} agent queries, hits={normalization_hits}, consistent={consistent}, trace={trace_ok}")


def test_10_harness_end_to_end(verdict, harness_runs):
    report, a, b = harness_runs
    acc = report["top1_accuracy"]["grk"]
    modes = report["preference_modes"]
    costs = [modes[m]["mean_cost"] for m in ("cost_priority", "auto", "performance_priority")]
    ordered = costs[0] <= costs[1] <= costs[2]
    ok = acc >= 0.90 and ordered and a == b
    verdict(10, "harness: router top-1 >= 90%, cost ordering, reproducible report", ok,
            f"top-1 {acc:.4f}, mean costs {costs}, byte-identical={a == b}")


def test_11_baseline_parity(verdict, harness_runs):
    report = harness_runs[0]
    acc = report["top1_accuracy"]
    ranking = report["router_ranking"]
    ok = acc["sft"] >= 0.80 and acc["contrastive"] >= 0.80 and sorted(ranking) == ["contrastive", "grk", "sft"]
    verdict(11, "SFT and contrastive baselines >= 80%, all three ranked", ok,
            f"sft {acc['sft']:.4f}, contrastive {acc['contrastive']:.4f}, ranking {ranking}")


def test_12_persistence(verdict, tmp_path):
    p = init_params(32, 6, n_experts=4, top_k=2, kappa=2.5, margin=0.7, seed=12, scale=3.0)
    save_params(p, tmp_path / "p.bin")
    q = load_params(tmp_path / "p.bin")
    exact = q == p and params_to_bytes(q) == params_to_bytes(p)

    blob = bytearray((tmp_path / "p.bin").read_bytes())
    rejected = 0
    positions = [4, 10, len(blob) // 2, len(blob) - 5, len(blob) - 1]
    for pos in positions:
        bad = bytearray(blob)
        bad[pos] ^= 0x01
        try:
            params_from_bytes(bytes(bad))
        except DataFormatError:
            rejected += 1
    try:
        params_from_bytes(bytes(blob[:-9]))
    except DataFormatError:
        rejected += 1

    rng = np.random.default_rng(12)
    affine = True
    for cls in (ClassifierParams, PairwiseParams):
        a = cls(rng.normal(size=(5, 7)), rng.normal(size=5))
        raw = a.to_bytes()
        affine &= cls.from_bytes(raw) == a
        flipped = bytearray(raw)
        flipped[20] ^= 0x80
        try:
            cls.from_bytes(bytes(flipped))
            affine = False
        except DataFormatError:
            pass
    ok = exact and rejected == len(positions) + 1 and affine
    verdict(12, "bit-exact round-trip, corrupted files rejected", ok,
            f"round-trip={exact}, rejected {rejected}/{len(positions) + 1}, baselines={affine}")

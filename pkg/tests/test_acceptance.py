"""Acceptance criteria C1-C10.

Every test prints exactly one ``C<k> PASS|FAIL ...`` line (outside pytest's
capture, so it lands in the log) and then asserts the same verdict.
Tolerances and instance counts are fixed here, never tuned per run.
"""

import copy
import time

import numpy as np
import pytest

from spanaug import baselines, gcl, oracle
from spanaug.augment import (AugmentationScheme, SchemeConfig, inter_intra_probability_summary as summary,
                             optimize_scheme)
from spanaug.graph import Graph, generate_random_geometric, generate_sbm, normalized_laplacian
from spanaug.spectral import (SpectralSelection, connected_components_spectral, eig_full,
                              eig_selective, union_find_components)


@pytest.fixture
def verdict(capsys):
    def emit(cid, ok, started, limit_s, detail):
        elapsed = time.perf_counter() - started
        in_time = elapsed < limit_s
        status = "PASS" if ok and in_time else "FAIL"
        with capsys.disabled():
            print(f"\n{cid} {status} {detail} runtime={elapsed:.1f}s (limit {limit_s}s)")
        assert ok, f"{cid}: {detail}"
        assert in_time, f"{cid}: runtime {elapsed:.1f}s over {limit_s}s"
    return emit


def _seeds(base, count):
    return [int(s) for s in np.random.SeedSequence(base).generate_state(count)]


def test_c1_gradient_matches_finite_differences(verdict):
    t0 = time.perf_counter()
    errs, skipped, failures = [], 0, 0
    stream = iter(_seeds(101, 1000))
    while len(errs) < 100:
        status, err = oracle.grad_instance(next(stream))
        if status == "skip":
            skipped += 1
            continue
        errs.append(err)
        failures += status != "pass"
    worst = max(errs)
    verdict("C1", failures == 0 and worst <= 1e-4, t0, 120,
            f"instances=100 worst_rel_err={worst:.2e} skipped_degenerate={skipped}")


def test_c2_projection(verdict):
    t0 = time.perf_counter()
    outcomes = [oracle.proj_instance(s) for s in _seeds(102, 50)]
    rng = np.random.default_rng(2)
    grid_ok = 0
    fixtures = [(np.ones((3, 3)) - np.eye(3), 3.0), (np.ones((2, 2)) - np.eye(2), 1.0),
                (np.ones((3, 3)) - np.eye(3), 0.0)]
    for _ in range(30):
        n = int(rng.integers(2, 4))
        raw = np.triu(rng.normal(0.4, 0.7, (n, n)), 1)
        fixtures.append((raw + raw.T, float(rng.uniform(0, n * (n - 1)))))
    for raw, eps in fixtures:
        grid_ok += oracle.brute_projection_check(raw, eps, resolution=0.02)
    passes = sum(st == "pass" for st, _ in outcomes)
    worst = max(e for _, e in outcomes)
    ok = passes == len(outcomes) and grid_ok == len(fixtures)
    verdict("C2", ok, t0, 60, f"random={passes}/{len(outcomes)} worst_violation={worst:.2e} "
                              f"grid_fixtures={grid_ok}/{len(fixtures)}")


def _violations(values, rel=1e-12):
    v = np.asarray(values)
    return int(np.sum(np.diff(v) < -rel * np.abs(v[:-1])))


def test_c3_opposite_direction(verdict):
    t0 = time.perf_counter()
    good, steps, bad_steps, r1s, r2s = 0, 0, 0, [], []
    for seed in range(10):
        g = generate_random_geometric(50, 0.3, seed)
        eps = 0.05 * 2 * g.m
        sch = optimize_scheme(g, SchemeConfig(mode="opposite", epsilon=eps, steps=50,
                                              noise_seed=seed, init_seed=seed))
        r1, r2 = sch.trajectory[-1]["ratio1"], sch.trajectory[-1]["ratio2"]
        r1s.append(r1)
        r2s.append(r2)
        good += r1 > 1.0 and r2 < 1.0
        single = optimize_scheme(g, SchemeConfig(mode="single", epsilon=eps, steps=50, lr=1e-3,
                                                 noise_seed=seed, init_seed=seed))
        objective = [rec["objective"] for rec in single.trajectory]
        steps += len(objective) - 1
        bad_steps += _violations(objective)
    frac = bad_steps / steps
    verdict("C3", good == 10 and frac <= 0.02, t0, 300,
            f"bracketing={good}/10 min_ratio1={min(r1s):.4f} max_ratio2={max(r2s):.4f} "
            f"single_way_violations={bad_steps}/{steps}")


def test_c4_case_study_structure(verdict):
    t0 = time.perf_counter()
    rem_hits, add_hits, rem_f, add_f = 0, 0, [], []
    for seed in range(5):
        g = generate_sbm(40, 2, 0.8, 0.1, seed)
        sch = optimize_scheme(g, SchemeConfig(mode="opposite", epsilon=0.05 * 2 * g.m, steps=50,
                                              noise_seed=seed, init_seed=seed))
        s1 = summary(g, sch.delta1, g.node_labels)
        s2 = summary(g, sch.delta2, g.node_labels)
        fr = s1.mean_inter_remove / max(s1.mean_intra_remove, 1e-300)
        fa = s2.mean_inter_add / max(s2.mean_intra_add, 1e-300)
        rem_f.append(fr)
        add_f.append(fa)
        rem_hits += fr >= 1.2
        add_hits += fa >= 1.2
    verdict("C4", rem_hits >= 4 and add_hits >= 4, t0, 300,
            f"removal_factor>=1.2 on {rem_hits}/5 {np.round(rem_f, 3).tolist()} "
            f"addition_factor>=1.2 on {add_hits}/5 {np.round(add_f, 3).tolist()}")


def test_c5_first_order_linearization(verdict):
    t0 = time.perf_counter()
    counts = {"pass": 0, "exact": 0, "fail": 0, "skip": 0}
    stream = iter(_seeds(105, 5000))
    while counts["pass"] + counts["exact"] + counts["fail"] < 200:
        status, _ = oracle.eigchange_instance(next(stream))
        counts[status] += 1
    good = counts["pass"] + counts["exact"]
    verdict("C5", good >= 180, t0, 120,
            f"in_band={counts['pass']} roundoff_exact={counts['exact']} out_of_band={counts['fail']} "
            f"of 200 (skipped gap<=1e-3: {counts['skip']})")


def test_c6_preanalysis_trend(verdict):
    t0 = time.perf_counter()
    g = generate_sbm(60, 2, 0.5, 0.05, 0)
    labels = baselines.spectral_clustering(g, 2, seed=0)
    ok, parts = True, []
    for sigma in (0.1, 0.2, 0.3, 0.4, 0.5):
        rows = {r["scheme"]: r for r in baselines.compare_spectral_change(
            g, {"uniform": baselines.uniform_scheme(g, sigma),
                "clustered": baselines.clustered_scheme(g, sigma, labels)}, samples=100, seed=0)}
        u, c = rows["uniform"], rows["clustered"]
        gap = c["mean_distance"] - u["mean_distance"]
        se = np.sqrt((u["std"] ** 2 + c["std"] ** 2) / 100)
        ok &= gap > 0 and (sigma < 0.2 or gap > 2 * se)
        parts.append(f"s={sigma}:gap={gap:+.4f}/se={se:.4f}")
    verdict("C6", ok, t0, 180, " ".join(parts))


def _c7_graphs():
    rng = np.random.default_rng(7)
    out = []
    for t in range(50):
        n = int(rng.integers(5, 80))
        s = int(rng.integers(2 ** 31))
        if t % 3 == 0:
            out.append(generate_sbm(n, int(rng.integers(1, 4)), 0.5, 0.02, s))
        elif t % 3 == 1:
            out.append(generate_random_geometric(n, float(rng.uniform(0.1, 0.4)), s))
        else:
            a = np.triu((rng.random((n, n)) < rng.uniform(0.01, 0.1)).astype(float), 1)
            out.append(Graph(a + a.T))
    return out


def test_c7_spectral_invariants(verdict):
    t0 = time.perf_counter()
    lo_hi, trace_err, comp_ok = [np.inf, -np.inf], 0.0, 0
    graphs = _c7_graphs()
    for g in graphs:
        vals = eig_full(normalized_laplacian(g)).values
        lo_hi = [min(lo_hi[0], vals.min()), max(lo_hi[1], vals.max())]
        trace_err = max(trace_err, abs(vals.sum() - g.n) / g.n)
        comp_ok += connected_components_spectral(g) == union_find_components(g)
    ok = lo_hi[0] >= -1e-9 and lo_hi[1] <= 2 + 1e-9 and trace_err <= 1e-8 and comp_ok == len(graphs)
    verdict("C7", ok, t0, 60, f"eig_range=[{lo_hi[0]:.2e}, {lo_hi[1]:.12f}] max_trace_err/n={trace_err:.2e} "
                              f"components={comp_ok}/{len(graphs)}")


def test_c8_selective_decomposition(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for t in range(50):
        n = int(rng.integers(45, 201))
        k = (1, 5, 20)[t % 3]
        s = int(rng.integers(2 ** 31))
        g = generate_sbm(n, 3, 0.3, 0.03, s) if t % 2 else generate_random_geometric(n, 0.25, s)
        lap = normalized_laplacian(g)
        full = eig_full(lap).values
        sel = eig_selective(lap, SpectralSelection(k), seed=s).values
        ref = np.r_[full[:k], full[-k:]]
        worst = max(worst, float(np.max(np.abs(np.sort(sel) - np.sort(ref)))))
    verdict("C8", worst <= 1e-8, t0, 120, f"instances=50 max_abs_err={worst:.2e}")


def test_c9_gcl_machinery(verdict):
    t0 = time.perf_counter()
    fd = [oracle.gcl_instance(s) for s in _seeds(109, 30)]
    fd_pass = sum(st == "pass" for st, _ in fd)
    fd_worst = max(e for _, e in fd)

    rng = np.random.default_rng(9)
    equiv = 0.0
    for _ in range(20):
        n, d = int(rng.integers(3, 15)), int(rng.integers(2, 6))
        a = np.triu((rng.random((n, n)) < 0.4).astype(float), 1)
        a = a + a.T
        x = rng.normal(size=(n, d))
        enc = gcl.init_encoder(d, 4, 2, "gcn", seed=int(rng.integers(1000)))
        perm = rng.permutation(n)
        h = gcl.gcn_forward(Graph(a), x, enc)
        hp = gcl.gcn_forward(Graph(a[np.ix_(perm, perm)]), x[perm], enc)
        equiv = max(equiv, float(np.max(np.abs(hp - h[perm]))))

    z = rng.normal(size=3)
    h1 = rng.normal(size=3)
    one = abs(gcl.infonce_mi(h1, z, h1[None, :]))
    closed = []
    for n in (2, 5, 17):
        h = np.tile(rng.normal(size=3), (n, 1))
        zz = rng.normal(size=3)
        mi = gcl.infonce_mi(h[0], zz, h)
        closed.append(abs(mi + np.log(n)))
    views = (Graph(np.zeros((4, 4))), Graph(np.zeros((4, 4))))
    xs = (np.ones((4, 3)), np.ones((4, 3)))
    enc = gcl.init_encoder(3, 4, 1, "gcn", seed=1)
    rd = gcl.init_readout(4, "mean", seed=1)
    degenerate = abs(gcl.gcl_loss(views, xs, enc, rd, "same") - 2 * np.log(4))
    closed_worst = max(one, max(closed), degenerate)
    ok = fd_pass == len(fd) and equiv <= 1e-12 and closed_worst <= 1e-10
    verdict("C9", ok, t0, 120, f"fd={fd_pass}/{len(fd)} worst_rel={fd_worst:.2e} equivariance={equiv:.1e} "
                               f"closed_form_err={closed_worst:.1e}")


def _uniform_branch_scheme(g, eps):
    u = baselines.uniform_scheme(g, eps / (2 * g.m))
    return AugmentationScheme(u, u.copy(), [], SchemeConfig(epsilon=eps), 0.0, {"kind": "uniform"})


def test_c10_end_to_end_learning(verdict):
    t0 = time.perf_counter()
    acc = {"trained": [], "untrained": [], "raw": [], "uniform": []}
    for seed in range(5):
        g = generate_sbm(120, 3, 0.3, 0.02, seed)
        eps = 0.1 * 2 * g.m
        span = optimize_scheme(g, SchemeConfig(mode="opposite", epsilon=eps, steps=50,
                                               noise_seed=seed, init_seed=seed))
        cfg = gcl.TrainConfig(epochs=300, feature_mask_ratio=0.2, seed=seed)
        enc0 = gcl.init_encoder(g.features.shape[1], cfg.hidden_dim, cfg.layers, seed=seed)
        r0 = gcl.init_readout(cfg.hidden_dim, "mean", seed=seed + 1)

        def probe(h):
            return gcl.linear_probe(h, g.node_labels, split_seed=seed).score

        res = gcl.train([g], [span], cfg, enc=copy.deepcopy(enc0), r=copy.deepcopy(r0))
        uni = gcl.train([g], [_uniform_branch_scheme(g, eps)], cfg, enc=copy.deepcopy(enc0), r=copy.deepcopy(r0))
        acc["trained"].append(probe(gcl.encode(g, g.features, res.encoder)))
        acc["uniform"].append(probe(gcl.encode(g, g.features, uni.encoder)))
        acc["untrained"].append(probe(gcl.encode(g, g.features, enc0)))
        acc["raw"].append(probe(g.features))
    m = {k: float(np.mean(v)) for k, v in acc.items()}
    beats_untrained = m["trained"] - m["untrained"] >= 0.03
    beats_raw = m["trained"] - m["raw"] >= 0.03
    vs_uniform = m["trained"] >= m["uniform"] - 0.01
    verdict("C10", beats_untrained and beats_raw and vs_uniform, t0, 1200,
            f"trained={m['trained']:.4f} untrained={m['untrained']:.4f} raw={m['raw']:.4f} "
            f"uniform={m['uniform']:.4f} (a)+3pp_vs_untrained={beats_untrained} "
            f"(b)+3pp_vs_raw={beats_raw} span>=uniform-1pt={vs_uniform}")

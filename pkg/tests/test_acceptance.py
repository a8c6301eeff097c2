"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``, ``FAIL`` or ``WAIVED`` line and then asserts.
The lines are printed in the pytest terminal summary, or directly when this
file is run as a script.
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

import oracles
from oracles import (
    brute_force_counts,
    central_difference,
    dense_gradient,
    naive_score,
    random_params,
    random_split,
    relative_error,
)
from spmc.cli import main as cli_main
from spmc.corpus import apply_threshold, load_corpus, split
from spmc.evaluation import auc
from spmc.models import ModelKind, ScoreContext, score, score_batch, social_term
from spmc.sweeps import grid_search
from spmc.synth import SynthConfig, generate, write_dataset
from spmc.training import (
    TrainConfig,
    TrainSample,
    gbpr_gradient,
    gbpr_objective,
    pair_gradient,
    pair_margin,
    sbpr_gradient,
    sbpr_objective,
    train,
)


def report(name: str, ok: bool, detail: str, status: str | None = None) -> None:
    line = f"{status or ('PASS' if ok else 'FAIL')}  {name}: {detail}"
    oracles.ACCEPTANCE_LINES.append(line)
    print(line)


# -- gradient oracle --------------------------------------------------------------


def _gradient_instance(kind, merged, rng):
    n_users, n_items = int(rng.integers(4, 7)), int(rng.integers(5, 8))
    p = random_params(kind, n_users, n_items, 3, rng, merged=merged)
    u = int(rng.integers(n_users))
    others = [v for v in range(n_users) if v != u]
    if kind is ModelKind.SBPR:
        i, k, j = (int(x) for x in rng.choice(n_items, 3, replace=False))
        s_uk = int(rng.integers(1, 4))
        return p, sbpr_gradient(p, u, i, k, j, s_uk), lambda q: sbpr_objective(q, u, i, k, j, s_uk)
    if kind is ModelKind.GBPR:
        i, j = (int(x) for x in rng.choice(n_items, 2, replace=False))
        group = [int(v) for v in rng.choice(others, int(rng.integers(0, 3)), replace=False)]
        rho = float(rng.uniform(0, 1))
        return p, gbpr_gradient(p, u, i, j, group, rho), lambda q: gbpr_objective(q, u, i, j, group, rho)
    i, j = (int(x) for x in rng.choice(n_items, 2, replace=False))
    l = int(rng.integers(n_items))
    n_f = int(rng.integers(0, len(others) + 1))
    friends = [(int(v), int(rng.integers(n_items))) for v in rng.choice(others, n_f, replace=False)]
    sample = TrainSample(u, i, l, j, friends, n_f + int(rng.integers(0, 2)))
    return p, pair_gradient(p, sample), lambda q: pair_margin(q, sample)


def test_gradient_oracle():
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = {}
    cases = [(k, True) for k in ModelKind] + [(ModelKind.FPMC, False), (ModelKind.SPMC, False)]
    for kind, merged in cases:
        err = 0.0
        for _ in range(100):
            p, frags, f = _gradient_instance(kind, merged, rng)
            err = max(err, relative_error(dense_gradient(p, frags), central_difference(p, f)))
        worst[f"{kind.value}{'' if merged else '/unmerged'}"] = err
    elapsed = time.perf_counter() - start
    max_err = max(worst.values())
    ok = max_err < 1e-6 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report("gradient oracle", ok, f"max rel err {max_err:.2e} < 1e-6 ({detail}); {elapsed:.1f}s < 10s")
    assert ok


# -- AUC oracle -------------------------------------------------------------------


def test_auc_oracle_equivalence():
    rng = np.random.default_rng(7)
    kinds = list(ModelKind)
    start = time.perf_counter()
    mismatches = 0
    for n in range(50):
        sp = random_split(rng, max_users=10, max_items=10)
        p = random_params(kinds[n % len(kinds)], sp.num_users, sp.num_items, 3, rng)
        want = brute_force_counts(lambda u, i, l, fr, fc: naive_score(p, u, i, l, fr, fc), sp)
        got = auc(p, sp, per_user=True).per_user_counts
        mismatches += got != want
        # integer-valued scores force many exact ties
        table = rng.integers(0, 3, size=(sp.num_users, sp.num_items)).astype(float)
        want = brute_force_counts(lambda u, i, l, fr, fc: table[u, i], sp)
        got = auc(lambda u, l, fr, fc: table[u], sp, per_user=True).per_user_counts
        mismatches += got != want
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5
    report("AUC oracle equivalence", ok,
           f"{mismatches} of 100 corpora/scorers differ in exact counts; {elapsed:.1f}s < 5s")
    assert ok


# -- predictor reduction ----------------------------------------------------------


def test_predictor_reduction():
    rng = np.random.default_rng(3)
    n_users, n_items, K = 30, 40, 5
    spmc = random_params("spmc", n_users, n_items, K, rng)
    spmc.M[:] = 0.0
    fpmc = random_params("fpmc", n_users, n_items, K, rng)
    fpmc.gammaU, fpmc.gammaI, fpmc.thetaI = spmc.gammaU, spmc.gammaI, spmc.thetaI
    unequal = 0
    for _ in range(10_000):
        u, i, l = int(rng.integers(n_users)), int(rng.integers(n_items)), int(rng.integers(n_items))
        n_f = int(rng.integers(0, 6))
        friends = [(int(v), int(rng.integers(n_items))) for v in rng.choice(n_users, n_f, replace=False)]
        ctx = ScoreContext(u, i, l, friends, n_f)
        unequal += score(spmc, ctx) != score(fpmc, ctx) + spmc.beta[i]
    users = np.arange(n_users)
    prev = rng.integers(0, n_items, n_users)
    batch_equal = np.array_equal(
        score_batch(spmc, users, prev, np.zeros((n_users, K))), score_batch(fpmc, users, prev) + spmc.beta
    )

    dup = random_params("spmc", n_users, n_items, K, rng)
    dup.alpha = 1.0
    worst = 0.0
    for _ in range(1000):
        u = int(rng.integers(n_users))
        others = [v for v in range(n_users) if v != u]
        n_f = int(rng.integers(1, 6))
        friends = [(int(v), int(rng.integers(n_items))) for v in rng.choice(others, n_f, replace=False)]
        i, c = int(rng.integers(n_items)), int(rng.integers(2, 5))
        a = social_term(dup, u, i, friends, n_f)
        b = social_term(dup, u, i, friends * c, n_f * c)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    ok = unequal == 0 and batch_equal and worst < 1e-12
    report("predictor reduction", ok,
           f"{unequal} of 10000 queries differ from FPMC+bias (batch equal: {batch_equal}); "
           f"duplication rel err {worst:.1e} < 1e-12")
    assert ok


# -- synthetic recovery -----------------------------------------------------------


def _recovery_means(mix, models):
    res = {m: [] for m in models}
    for seed in range(5):
        sp = split(apply_threshold(generate(SynthConfig(mix=mix, seed=seed)).corpus, 5))
        for m in models:
            g = grid_search(sp, m, base=TrainConfig(K=20, epochs=50, seed=seed))
            res[m].append(g.best_cell.test_auc)
    return {m: float(np.mean(v)) for m, v in res.items()}


def test_synthetic_recovery():
    start = time.perf_counter()
    social = _recovery_means((0.3, 0.3, 0.4), ("spmc", "fpmc", "bprmf"))
    control = _recovery_means((0.5, 0.5, 0.0), ("spmc", "fpmc"))
    elapsed = time.perf_counter() - start
    gain_fpmc = social["spmc"] - social["fpmc"]
    gain_bpr = social["spmc"] - social["bprmf"]
    gap = control["spmc"] - control["fpmc"]
    ok = gain_fpmc >= 0.02 and gain_bpr >= 0.02 and abs(gap) < 0.01 and elapsed < 120
    report(
        "synthetic recovery", ok,
        f"SPMC {social['spmc']:.4f} FPMC {social['fpmc']:.4f} BPRMF {social['bprmf']:.4f}; "
        f"SPMC-FPMC {gain_fpmc:+.4f} (need >= 0.02), SPMC-BPRMF {gain_bpr:+.4f} (need >= 0.02); "
        f"no-social gap {gap:+.4f} (need |gap| < 0.01); {elapsed:.0f}s < 120s",
    )
    assert ok


# -- published numbers (conditional) --------------------------------------------------

DATASETS = {
    # env var -> (name, expected SPMC AUC, expected FPMC AUC or None)
    "SPMC_CIAO_DIR": ("Ciao", 0.593, 0.492),
    "SPMC_EPINIONS_DIR": ("Epinions", 0.595, None),
}


@pytest.mark.parametrize("env", sorted(DATASETS))
def test_published_number_reproduction(env):
    name, want_spmc, want_fpmc = DATASETS[env]
    directory = os.environ.get(env)
    if not directory:
        report(f"published numbers ({name})", True, f"${env} not set, dataset unavailable", "WAIVED")
        pytest.skip(f"{name} dataset not available; set {env} to a directory with interactions.tsv and trust.tsv")
    start = time.perf_counter()
    corpus = load_corpus(os.path.join(directory, "interactions.tsv"), os.path.join(directory, "trust.tsv"))
    sp = split(apply_threshold(corpus, 5))
    got = {m.value: grid_search(sp, m, base=TrainConfig(K=20), threads=4).best_cell.test_auc for m in ModelKind}
    elapsed = time.perf_counter() - start
    ok = abs(got["SPMC"] - want_spmc) <= 0.03
    if want_fpmc is not None:
        ok &= abs(got["FPMC"] - want_fpmc) <= 0.03
    ok &= all(got["SPMC"] > v for k, v in got.items() if k != "SPMC")
    ok &= elapsed < 15 * 60
    detail = " ".join(f"{k} {v:.4f}" for k, v in got.items())
    report(f"published numbers ({name})", ok, f"{detail}; {elapsed:.0f}s < 900s")
    assert ok


# -- convergence ------------------------------------------------------------------


def test_convergence():
    at100, at150 = [], []
    for seed in range(5):
        sp = split(apply_threshold(generate(SynthConfig(seed=seed)).corpus, 5))
        curve = train(sp, TrainConfig(kind="spmc", epochs=150, seed=seed)).curve
        at100.append(curve[99])
        at150.append(curve[149])
    a, b = float(np.mean(at100)), float(np.mean(at150))
    drift = abs(a - b) / b
    ok = drift < 0.005
    report("convergence", ok,
           f"mean val AUC epoch 100 {a:.4f} vs epoch 150 {b:.4f}, relative change {drift:.2%} < 0.5%")
    assert ok


# -- determinism ------------------------------------------------------------------


def test_determinism(tmp_path):
    data = tmp_path / "data"
    write_dataset(generate(SynthConfig(num_users=60, seed=11)), data)
    flags = ["--interactions", str(data / "interactions.tsv"), "--trust", str(data / "trust.tsv"),
             "--epochs", "4"]
    commands = {
        "train": ["train", "--model", "spmc"],
        "grid": ["grid", "--model", "gbpr", "--eta-grid", "0.05,0.005", "--lambda-grid", "0.01"],
        "sweep": ["sweep", "--sweep", "k", "--values", "2,4"],
    }
    differing = []
    for name, argv in commands.items():
        runs = []
        for tag, threads in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "4")]:
            out = tmp_path / f"{name}-{tag}"
            assert cli_main([*argv, *flags, "--threads", threads, "--out", str(out)]) == 0
            runs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
        if not (runs[0] and all(r == runs[0] for r in runs)):
            differing.append(name)
    synth = []
    for tag in "ab":
        cli_main(["synth", "--seed", "5", "--out", str(tmp_path / f"synth-{tag}")])
        synth.append({p.name: p.read_bytes() for p in (tmp_path / f"synth-{tag}").iterdir()
                      if p.name != "manifest.json"})
    if synth[0] != synth[1]:
        differing.append("synth")
    ok = not differing
    report("determinism", ok,
           "train/grid/sweep/synth outputs bitwise identical across re-runs and --threads 1/4"
           if ok else f"outputs differ for {differing}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))

"""Self-contained invariant checks behind the `validate` CLI command.

Each check runs a small randomized-but-seeded experiment against an
independent enumeration of the quantity under test and reports pass/fail
with a one-line detail.  `tau_scale` exists so a hidden CLI flag can
inject an oversampling fault and prove the suite can fail.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import chi2

from ._kernels import sq_dists_to_point
from .analysis import cost
from .ann import AnnIndex
from .dataset import Dataset, SyntheticSpec, gen_manifold, preprocess
from .sampler_tree import SamplerTree
from .seeding import (
    ArrayProposal,
    RejectionConfig,
    iteration_cap,
    kappa_masses,
    oversampling_tau,
    qkmeans,
    reject_sample,
    sample_proposal,
)

__all__ = ["run_all"]


def _result(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _gauss_dataset(n: int, dim: int, seed: int) -> Dataset:
    pts = np.random.default_rng(seed).standard_normal((n, dim))
    return preprocess(Dataset(pts))


def check_centering_idempotence() -> dict:
    ds = gen_manifold(SyntheticSpec(intrinsic_dim=3, ambient_dim=8, n=400, rng_seed=7))
    once = preprocess(ds)
    twice = preprocess(once)
    drift = float(np.max(np.abs(twice.points - once.points)))
    return _result("centering_idempotence", drift <= 1e-12, f"max drift {drift:.2e} (tol 1e-12)")


def check_frobenius_identity() -> dict:
    ds = _gauss_dataset(300, 5, seed=11)
    origin_cost = cost(ds.points, np.zeros(ds.dim))
    rel = abs(origin_cost - ds.frob_sq) / ds.frob_sq
    return _result("frobenius_identity", rel <= 1e-9, f"relative gap {rel:.2e} (tol 1e-9)")


def check_tree_enumeration() -> dict:
    grid = np.arange(10_000) / 10_000.0
    worst = 0.0
    for weights in ([9.0, 16.0], np.random.default_rng(3).random(13) + 0.05):
        tree = SamplerTree(weights)
        counts = np.bincount(tree.sample_batch(grid), minlength=len(weights))
        freq = counts / grid.size
        expect = np.asarray(weights) / np.sum(weights)
        worst = max(worst, float(np.max(np.abs(freq - expect))))
    return _result("tree_enumeration", worst <= 1e-4, f"max |freq - weight| {worst:.2e} (tol 1e-4)")


def check_tree_update_rebuild() -> dict:
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 40))
        w = rng.random(n) + 1e-3
        tree = SamplerTree(w)
        for _ in range(30):
            i = int(rng.integers(n))
            w[i] = rng.random() + 1e-3
            tree.update(i, w[i])
        gap = np.max(np.abs(tree.node_array() - SamplerTree(w).node_array()))
        worst = max(worst, float(gap))
    return _result("tree_update_rebuild", worst <= 1e-9, f"max node gap {worst:.2e} (tol 1e-9)")


def check_tree_chi_square() -> dict:
    tree = SamplerTree([9.0, 16.0])
    draws = tree.sample_batch(np.random.default_rng(23).random(100_000))
    obs = np.bincount(draws, minlength=2)
    exp = np.array([0.36, 0.64]) * draws.size
    stat = float(np.sum((obs - exp) ** 2 / exp))
    crit = float(chi2.ppf(0.99, df=1))
    return _result("tree_chi_square", stat < crit, f"chi2 {stat:.3f} < {crit:.3f} at alpha 0.01")


def check_kappa_mixture() -> dict:
    # Centered 1-d points {-1, 0, 1} with c1 = -1 give kappa = (0.4, 0.2, 0.4).
    norms_sq = np.array([1.0, 0.0, 1.0])
    masses = kappa_masses(norms_sq, frob_sq=2.0, c1_norm_sq=1.0)
    exact_ok = np.allclose(masses, [0.4, 0.2, 0.4], atol=1e-15) and abs(masses.sum() - 1.0) < 1e-12
    tree = SamplerTree(norms_sq)
    rng = np.random.default_rng(29)
    draws = np.bincount(
        [sample_proposal(tree, 2.0, 1.0, 3, rng) for _ in range(20_000)], minlength=3
    ) / 20_000.0
    emp_gap = float(np.max(np.abs(draws - masses)))
    return _result("kappa_mixture", exact_ok and emp_gap <= 0.015,
                   f"exact masses {'ok' if exact_ok else 'WRONG'}, empirical gap {emp_gap:.3f}")


def check_oversampling(tau_scale: float = 1.0) -> dict:
    ds = _gauss_dataset(60, 3, seed=31)
    X = ds.points
    norms_sq = np.einsum("ij,ij->i", X, X)
    res = qkmeans(ds, 8, RejectionConfig(m=math.inf, ann_backend="exact", rng_seed=5))
    c1 = int(res.center_indices[0])
    kappa = kappa_masses(norms_sq, ds.frob_sq, float(norms_sq[c1]))
    worst = -math.inf
    for t in range(1, 8):
        C = X[res.center_indices[:t]]
        min_d2 = np.min(
            np.stack([sq_dists_to_point(X, c) for c in C]), axis=0
        )
        total = float(min_d2.sum())
        pi = min_d2 / total
        tau = tau_scale * oversampling_tau(ds.frob_sq, ds.n, float(norms_sq[c1]), total)
        worst = max(worst, float(np.max(pi - tau * kappa)))
    return _result("oversampling_pointwise", worst <= 1e-12,
                   f"max(pi - tau*kappa) = {worst:.3e} (tol 1e-12)")


def check_tv_distance() -> dict:
    ds = _gauss_dataset(8, 2, seed=37)
    X = ds.points
    pi = sq_dists_to_point(X, X[0])
    pi = pi / pi.sum()
    runs = 20_000
    counts = np.zeros(8)
    cfg_base = dict(m=math.inf, ann_backend="exact")
    for i in range(runs):
        res = qkmeans(ds, 2, RejectionConfig(rng_seed=i, **cfg_base), first_center=0)
        counts[int(res.center_indices[1])] += 1
    tv = 0.5 * float(np.abs(counts / runs - pi).sum())
    return _result("tv_distance", tv <= 0.03, f"TV {tv:.4f} over {runs} runs (tol 0.03)")


def check_ann_sandwich() -> dict:
    rng = np.random.default_rng(41)
    violations = 0
    for inst in range(5):
        rho = 0.5 if inst % 2 == 0 else 0.25
        centers = rng.standard_normal((64, 6)) * (1.0 + rng.random())
        index = AnnIndex("lsh", rho=rho, rng_seed=inst)
        for c in centers:
            index.insert(c)
        probes = rng.standard_normal((200, 6))
        for p in probes:
            _, d2 = index.query(p)
            true = float(np.min(sq_dists_to_point(centers, p)))
            if not (true - 1e-9 <= d2 <= true / rho + 1e-9):
                violations += 1
    return _result("ann_sandwich", violations == 0, f"{violations} violations over 1000 probes")


def check_ann_monotonicity() -> dict:
    rng = np.random.default_rng(43)
    index = AnnIndex("lsh", rho=0.5, rng_seed=9)
    probe = rng.standard_normal(5)
    reported = []
    for _ in range(50):
        index.insert(rng.standard_normal(5) * 3.0)
        _, d2 = index.query(probe, key="fixed")
        reported.append(d2)
    increases = sum(1 for a, b in zip(reported, reported[1:]) if b > a + 1e-12)
    return _result("ann_monotonicity", increases == 0, f"{increases} increases over 50 inserts")


def check_rejection_identity_failure() -> dict:
    rng = np.random.default_rng(47)
    w = rng.random(30) + 0.1
    prop = ArrayProposal(w)
    # Identity: bound 1 must accept on the first iteration, every time.
    identity_ok = True
    for s in range(200):
        _, accepted, iters = reject_sample(w, prop, bound=1.0, max_iters=5, rng=np.random.default_rng(s))
        identity_ok &= accepted and iters == 1
    k, bound = 20, 4.0
    cap = int(iteration_cap(bound, k))
    fails = 0
    trials = 20_000
    uniform = np.full(30, 1.0 / 30)
    uprop = ArrayProposal(np.full(30, 1.0))
    rng2 = np.random.default_rng(53)
    for _ in range(trials):
        _, accepted, _ = reject_sample(uniform, uprop, bound=bound, max_iters=cap, rng=rng2)
        fails += not accepted
    freq = fails / trials
    expect = (1.0 - 1.0 / bound) ** cap
    ok = identity_ok and freq <= 1.0 / k and abs(freq - expect) <= 0.01
    return _result("rejection_identity_failure", ok,
                   f"identity {'ok' if identity_ok else 'WRONG'}, fail freq {freq:.4f} vs (1-1/M)^cap {expect:.4f}, 1/k {1/k:.3f}")


def check_fallback_bound() -> dict:
    ds = _gauss_dataset(300, 4, seed=59)
    X = ds.points
    norms_sq = np.einsum("ij,ij->i", X, X)
    m, k = 1, 20
    cap = iteration_cap(m, k)
    total_steps = 0
    fallbacks = 0
    bound_sum = 0.0
    var_sum = 0.0
    for s in range(50):
        res = qkmeans(ds, k, RejectionConfig(m=m, ann_backend="exact", rng_seed=s))
        fallbacks += res.fallback_count
        c1sq = float(norms_sq[res.center_indices[0]])
        for t in range(1, k):
            C = X[res.center_indices[:t]]
            step_cost = cost(X, C)
            tau = oversampling_tau(ds.frob_sq, ds.n, c1sq, step_cost)
            b = math.exp(-cap / tau)
            bound_sum += b
            var_sum += max(b * (1 - b), 0.25 if b > 0.5 else 0.0)
            total_steps += 1
    freq = fallbacks / total_steps
    bound = bound_sum / total_steps + 3.0 * math.sqrt(var_sum) / total_steps
    return _result("fallback_bound", freq <= bound,
                   f"fallback freq {freq:.4f} <= exp(-cap/tau) bound {bound:.4f} over {total_steps} steps")


def run_all(fault_oversampling: bool = False) -> list[dict]:
    """Run every invariant check; the fault flag corrupts tau to force a failure."""
    checks = [
        check_centering_idempotence(),
        check_frobenius_identity(),
        check_tree_enumeration(),
        check_tree_update_rebuild(),
        check_tree_chi_square(),
        check_kappa_mixture(),
        check_oversampling(tau_scale=0.05 if fault_oversampling else 1.0),
        check_tv_distance(),
        check_ann_sandwich(),
        check_ann_monotonicity(),
        check_rejection_identity_failure(),
        check_fallback_bound(),
    ]
    return checks

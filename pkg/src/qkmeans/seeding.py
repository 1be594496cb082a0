"""k-means seeding algorithms.

Four seeders share one result type: exact D^2 (k-means++) seeding, the
norm-proposal rejection seeder whose acceptance ratio is answered by an
ANN index, a (rho, delta)-mixture reference that enumerates every mass,
and uniform seeding.  All draw from explicitly seeded generators and are
deterministic given (dataset, k, config, seed).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ._kernels import cost as _bulk_cost
from ._kernels import min_sq_dists, sq_dists_to_point
from .ann import AnnIndex
from .dataset import Dataset
from .sampler_tree import SamplerTree

__all__ = [
    "RejectionConfig",
    "SeedingResult",
    "ArrayProposal",
    "MixtureProposal",
    "kmeanspp_exact",
    "qkmeans",
    "reject_sample",
    "sample_proposal",
    "rho_delta_reference",
    "uniform_seeding",
    "kappa_masses",
    "oversampling_tau",
    "iteration_cap",
]

# Proposals drawn per RNG round trip in the rejection loop.
_BATCH = 8


@dataclass(frozen=True)
class RejectionConfig:
    """Knobs for the rejection seeder.

    m bounds the proposal loop at ceil(m * ln(max(k, 2))) iterations per
    center; math.inf removes the cap (and with it the uniform fallback).
    """

    m: float = math.inf
    rho: float = 1.0
    rng_seed: int = 0
    ann_backend: str = "exact"

    def __post_init__(self) -> None:
        if self.m != math.inf and (self.m < 1 or self.m != int(self.m)):
            raise ValueError("m must be an integer >= 1 or math.inf")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.ann_backend not in ("exact", "lsh"):
            raise ValueError(f"unknown ann backend {self.ann_backend!r}")


@dataclass
class SeedingResult:
    """Outcome of one seeding run.

    per_step_proposals has one entry per center after the first and counts
    proposals consumed for that center (a capped step records the cap).
    elapsed covers the seeding loop only; final_cost is evaluated after the
    clock stops.  step_masses is populated only when a seeder is asked to
    record its per-step sampling distribution.
    """

    center_indices: np.ndarray
    center_coords: np.ndarray
    per_step_proposals: list[int]
    fallback_count: int
    elapsed: float
    final_cost: float
    clamp_count: int = 0
    step_masses: list[np.ndarray] | None = None


def iteration_cap(m: float, k: int) -> float:
    """Per-center proposal budget: ceil(m * ln(max(k, 2))), inf passes through."""
    if m == math.inf:
        return math.inf
    return math.ceil(m * math.log(max(k, 2)))


def kappa_masses(norms_sq: np.ndarray, frob_sq: float, c1_norm_sq: float) -> np.ndarray:
    """Proposal distribution (||x||^2 + ||c1||^2) / (frob_sq + n ||c1||^2)."""
    n = norms_sq.shape[0]
    denom = frob_sq + n * c1_norm_sq
    if denom <= 0.0:
        raise ValueError("degenerate proposal: frob_sq + n * c1_norm_sq is zero")
    return (norms_sq + c1_norm_sq) / denom


def oversampling_tau(frob_sq: float, n: int, c1_norm_sq: float, current_cost: float, rho: float = 1.0) -> float:
    """Oversampling factor tau = 2 rho^-1 (frob_sq + n ||c1||^2) / cost(X, C)."""
    if current_cost <= 0.0:
        return math.inf
    return 2.0 / rho * (frob_sq + n * c1_norm_sq) / current_cost


def sample_proposal(tree: SamplerTree, frob_sq: float, c1_norm_sq: float, n: int, rng: np.random.Generator) -> int:
    """One draw from the norm/uniform mixture.

    With probability frob_sq / (frob_sq + n ||c1||^2) the norm tree is
    sampled, otherwise a uniform row; both branches are driven by the same
    second uniform so the stream advances identically either way.
    """
    denom = frob_sq + n * c1_norm_sq
    if denom <= 0.0:
        raise ValueError("degenerate proposal: frob_sq + n * c1_norm_sq is zero")
    p_tree = frob_sq / denom
    branch = rng.random()
    value = rng.random()
    if branch < p_tree:
        return tree.sample_at(value)
    return min(int(value * n), n - 1)


class ArrayProposal:
    """Enumerated proposal over a fixed weight vector (cumulative inverse)."""

    def __init__(self, weights) -> None:
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty nonnegative finite vector")
        total = w.sum()
        if total <= 0.0:
            raise ValueError("all proposal weights are zero")
        self._cum = np.cumsum(w)
        self._masses = w / total

    def sample(self, rng: np.random.Generator) -> int:
        target = rng.random() * self._cum[-1]
        return min(int(np.searchsorted(self._cum, target, side="right")), self._masses.size - 1)

    def mass(self, index: int) -> float:
        return float(self._masses[index])

    def masses(self) -> np.ndarray:
        return self._masses


class MixtureProposal:
    """The qkmeans proposal as a reusable object with exact masses."""

    def __init__(self, tree: SamplerTree, frob_sq: float, c1_norm_sq: float, n: int) -> None:
        denom = frob_sq + n * c1_norm_sq
        if denom <= 0.0:
            raise ValueError("degenerate proposal: frob_sq + n * c1_norm_sq is zero")
        self._tree = tree
        self._frob_sq = frob_sq
        self._c1_norm_sq = c1_norm_sq
        self._n = n

    def sample(self, rng: np.random.Generator) -> int:
        return sample_proposal(self._tree, self._frob_sq, self._c1_norm_sq, self._n, rng)

    def mass(self, index: int) -> float:
        denom = self._frob_sq + self._n * self._c1_norm_sq
        return (self._tree.weight(index) + self._c1_norm_sq) / denom

    def masses(self) -> np.ndarray:
        norms_sq = np.array([self._tree.weight(i) for i in range(self._n)])
        return kappa_masses(norms_sq, self._frob_sq, self._c1_norm_sq)


def reject_sample(target, proposal, bound: float, max_iters: int, rng: np.random.Generator) -> tuple[int, bool, int]:
    """Bounded rejection sampling of `target` through `proposal`.

    Accepts x when R <= mu(x) / (bound * nu(x)); conditioned on acceptance
    the law is exactly the normalized target whenever mu <= bound * nu
    pointwise.  Returns (index, accepted, iterations); index is -1 on
    failure.
    """
    if bound < 1.0:
        raise ValueError("bound must be >= 1")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    mu = np.asarray(target, dtype=np.float64)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("target must be nonnegative and finite")
    total = mu.sum()
    if total <= 0.0:
        raise ValueError("target has zero mass")
    mu = mu / total
    if __debug__ and hasattr(proposal, "masses"):
        slack = np.max(mu - bound * proposal.masses())
        if slack > 1e-9:
            raise AssertionError(f"oversampling violated: mu exceeds bound * nu by {slack:.3g}")
    for it in range(1, max_iters + 1):
        x = proposal.sample(rng)
        r = rng.random()
        nu_x = proposal.mass(x)
        if nu_x <= 0.0:
            continue
        if r <= mu[x] / (bound * nu_x):
            return x, True, it
    return -1, False, max_iters


def _uniform_unchosen(rng: np.random.Generator, chosen_mask: np.ndarray) -> int:
    pool = np.flatnonzero(~chosen_mask)
    return int(pool[rng.integers(pool.size)])


def _mask_of(chosen: list[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return mask


def _finish(X, chosen, per_step, fallbacks, elapsed, clamp=0, step_masses=None) -> SeedingResult:
    idx = np.asarray(chosen, dtype=np.intp)
    coords = X[idx].copy()
    return SeedingResult(
        center_indices=idx,
        center_coords=coords,
        per_step_proposals=per_step,
        fallback_count=fallbacks,
        elapsed=elapsed,
        final_cost=_bulk_cost(X, coords),
        clamp_count=clamp,
        step_masses=step_masses,
    )


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k = {k} exceeds n = {n}")


def kmeanspp_exact(ds: Dataset, k: int, rng_seed: int = 0, first_center: int | None = None,
                   record_masses: bool = False) -> SeedingResult:
    """Exact D^2 seeding over an incrementally maintained min-distance array.

    Each center after the first is drawn with probability proportional to
    the squared distance to the nearest chosen center; a zero-cost state
    falls back to uniform draws over unchosen rows.
    """
    X = ds.points
    n = X.shape[0]
    _check_k(k, n)
    rng = np.random.default_rng(rng_seed)
    t0 = time.perf_counter()
    c0 = int(rng.integers(n)) if first_center is None else int(first_center)
    chosen = [c0]
    chosen_mask = np.zeros(n, dtype=bool)
    chosen_mask[c0] = True
    min_d2 = sq_dists_to_point(X, X[c0])
    masses_log: list[np.ndarray] | None = [] if record_masses else None
    for _ in range(1, k):
        cum = np.cumsum(min_d2)
        total = cum[-1]
        if total <= 0.0:
            if masses_log is not None:
                masses_log.append(np.full(n, np.nan))
            idx = _uniform_unchosen(rng, chosen_mask)
        else:
            if masses_log is not None:
                masses_log.append(min_d2 / total)
            target = rng.random() * total
            idx = min(int(np.searchsorted(cum, target, side="right")), n - 1)
        chosen.append(idx)
        chosen_mask[idx] = True
        np.minimum(min_d2, sq_dists_to_point(X, X[idx]), out=min_d2)
    elapsed = time.perf_counter() - t0
    result = _finish(X, chosen, [1] * (k - 1), 0, elapsed, step_masses=masses_log)
    # min_d2 already reflects all k centers; reuse it for the exact cost.
    result.final_cost = float(min_d2.sum())
    return result


def qkmeans(ds: Dataset, k: int, cfg: RejectionConfig, first_center: int | None = None) -> SeedingResult:
    """Rejection-sampling seeder: norm-mixture proposals, ANN acceptance.

    The first center is uniform; every later center is proposed from the
    fixed mixture kappa and accepted with probability
    cost_ann(x, C) / (2 rho^-1 (||x||^2 + ||c1||^2)), which conditioned on
    acceptance reproduces D^2 sampling up to the ANN approximation.  A
    step that exhausts its ceil(m ln max(k,2)) budget takes a uniform
    fallback row instead (redrawn among unchosen rows on collision).
    """
    if not ds.centered:
        raise ValueError("qkmeans requires a centered dataset (run preprocess first)")
    X = ds.points
    n, dim = X.shape
    _check_k(k, n)
    rng = np.random.default_rng(cfg.rng_seed)
    t0 = time.perf_counter()
    frob_sq = float(ds.frob_sq)
    c0 = int(rng.integers(n)) if first_center is None else int(first_center)
    ann_seed = int(rng.integers(2**32)) if cfg.ann_backend == "lsh" else 0
    chosen = [c0]
    per_step: list[int] = []
    fallbacks = 0
    clamp = 0
    if frob_sq <= 0.0:
        # All rows sit at the origin: the proposal is undefined and every
        # completion costs zero, so fill with distinct uniform rows.
        mask = _mask_of(chosen, n)
        for _ in range(1, k):
            chosen.append(_uniform_unchosen(rng, mask))
            mask[chosen[-1]] = True
            per_step.append(0)
        return _finish(X, chosen, per_step, 0, time.perf_counter() - t0)
    norms_sq = ds.row_norms_sq
    tree = ds.norm_tree
    c1_norm_sq = float(norms_sq[c0])
    p_tree = frob_sq / (frob_sq + n * c1_norm_sq)
    index = AnnIndex(cfg.ann_backend, cfg.rho, ann_seed)
    index.insert(X[c0])
    rho_eff = index.rho
    # At a few rows and coordinates the work is all call overhead, so the
    # proposal stream is consumed with scalar arithmetic instead of array
    # ops; both paths run the same draws through the same accept rule.
    scalar = cfg.ann_backend == "exact" and n * dim <= 256 and k <= 4
    if scalar:
        rows = X.tolist()
        norms_l = norms_sq.tolist()
        two_rho = 2.0 / rho_eff
    else:
        accept_denom = (2.0 / rho_eff) * (norms_sq + c1_norm_sq)
        denom_all_pos = bool(accept_denom.min() > 0.0)
    cap = iteration_cap(cfg.m, k)
    guard = None if cap != math.inf else 1000 + int(50 * n * math.log(max(k, 2)))
    degenerate = False
    for _ in range(1, k):
        if degenerate:
            sel = _uniform_unchosen(rng, _mask_of(chosen, n))
            iters = 0
        else:
            sel = -1
            iters = 0
            while sel < 0:
                if cap != math.inf:
                    room = int(cap) - iters
                    if room <= 0:
                        break
                    b = min(_BATCH, room)
                else:
                    b = _BATCH
                branch_u = rng.random(b)
                value_u = rng.random(b)
                accept_u = rng.random(b)
                if scalar:
                    branch_l = branch_u.tolist()
                    value_l = value_u.tolist()
                    accept_l = accept_u.tolist()
                    for j in range(b):
                        iters += 1
                        v = value_l[j]
                        if branch_l[j] < p_tree:
                            i = tree.sample_at(v)
                        else:
                            i = int(v * n)
                            if i >= n:
                                i = n - 1
                        denom = two_rho * (norms_l[i] + c1_norm_sq)
                        if denom <= 0.0:
                            continue
                        r = index.query_small(rows[i]) / denom
                        if r <= 0.0:
                            continue
                        if r >= 1.0:
                            if r > 1.0:
                                clamp += 1
                            sel = i
                            break
                        if accept_l[j] <= r:
                            sel = i
                            break
                else:
                    tree_idx = tree.sample_batch(value_u)
                    in_tree = branch_u < p_tree
                    if in_tree.all():
                        prop = tree_idx
                    else:
                        unif_idx = np.minimum((value_u * n).astype(np.intp), n - 1)
                        prop = np.where(in_tree, tree_idx, unif_idx)
                    d2s = index.query_batch(X[prop], keys=prop.tolist())
                    denoms = accept_denom[prop]
                    if denom_all_pos:
                        rs = d2s / denoms
                    else:
                        ok = denoms > 0.0
                        rs = np.zeros(b)
                        np.divide(d2s, denoms, out=rs, where=ok)
                    # A rejected proposal always had r < 1, so within a batch
                    # only the first acceptable index is ever consumed.
                    accept = ((rs >= 1.0) | (accept_u <= rs)) & (rs > 0.0)
                    j = int(np.argmax(accept))
                    if accept[j]:
                        iters += j + 1
                        sel = int(prop[j])
                        if rs[j] > 1.0:
                            clamp += 1
                    else:
                        iters += b
                if sel < 0 and guard is not None and iters >= guard:
                    # Unbounded m cannot observe a zero-cost state through
                    # rejected proposals alone; check once, then back off.
                    if _bulk_cost(X, X[np.asarray(chosen)]) <= 0.0:
                        degenerate = True
                        sel = _uniform_unchosen(rng, _mask_of(chosen, n))
                    else:
                        guard *= 2
            if sel < 0:
                fallbacks += 1
                s = int(rng.integers(n))
                if s in chosen:
                    s = _uniform_unchosen(rng, _mask_of(chosen, n))
                sel = s
        chosen.append(sel)
        index.insert(X[sel])
        per_step.append(iters)
    elapsed = time.perf_counter() - t0
    if scalar:
        centers = [rows[i] for i in chosen]
        total = 0.0
        for row in rows:
            best = math.inf
            for c in centers:
                s = 0.0
                for a, bb in zip(row, c):
                    d = a - bb
                    s += d * d
                if s < best:
                    best = s
            total += best
        idx = np.array(chosen, dtype=np.intp)
        return SeedingResult(idx, X[idx].copy(), per_step, fallbacks, elapsed, total, clamp)
    return _finish(X, chosen, per_step, fallbacks, elapsed, clamp=clamp)


def rho_delta_reference(ds: Dataset, k: int, rho: float = 1.0, delta: float = 0.0,
                        rng_seed: int = 0, first_center: int | None = None,
                        record_masses: bool = False) -> SeedingResult:
    """Reference seeder sampling the explicit (1-delta) pi_ann + delta/n mixture.

    Every per-step mass is enumerated; with rho = 1 the ANN term is the
    exact D^2 distribution and delta = 0 recovers k-means++ (the draw
    shares kmeanspp_exact's arithmetic so recorded masses agree to
    round-off).  rho < 1 enumerates one ANN query per row per step, which
    is intentionally the slow, trustworthy path.
    """
    if not 0.0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 0.5)")
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    X = ds.points
    n = X.shape[0]
    _check_k(k, n)
    rng = np.random.default_rng(rng_seed)
    t0 = time.perf_counter()
    c0 = int(rng.integers(n)) if first_center is None else int(first_center)
    chosen = [c0]
    chosen_mask = np.zeros(n, dtype=bool)
    chosen_mask[c0] = True
    exact = rho == 1.0
    if exact:
        # No extra RNG draw here: with rho = 1 and delta = 0 the stream must
        # match kmeanspp_exact's so the two runs stay in lockstep.
        min_d2 = sq_dists_to_point(X, X[c0])
        index = None
    else:
        index = AnnIndex("lsh", rho, int(rng.integers(2**32)))
        index.insert(X[c0])
    masses_log: list[np.ndarray] | None = [] if record_masses else None
    for _ in range(1, k):
        if exact:
            cost_l = min_d2
        else:
            cost_l = np.empty(n)
            for i in range(n):
                _, cost_l[i] = index.query(X[i], key=i)
        total = float(cost_l.sum())
        if total <= 0.0 and delta == 0.0:
            if masses_log is not None:
                masses_log.append(np.full(n, np.nan))
            idx = _uniform_unchosen(rng, chosen_mask)
        else:
            if delta == 0.0:
                weights = cost_l
            else:
                pi_l = cost_l / total if total > 0.0 else np.zeros(n)
                weights = (1.0 - delta) * pi_l + delta / n
                # The uniform term puts mass on already-chosen rows; condition
                # it out so the run always produces k distinct indices.
                weights = np.where(chosen_mask, 0.0, weights)
            cum = np.cumsum(weights)
            if masses_log is not None:
                masses_log.append(weights / cum[-1])
            target = rng.random() * cum[-1]
            idx = min(int(np.searchsorted(cum, target, side="right")), n - 1)
        chosen.append(idx)
        chosen_mask[idx] = True
        if exact:
            np.minimum(min_d2, sq_dists_to_point(X, X[idx]), out=min_d2)
        else:
            index.insert(X[idx])
    elapsed = time.perf_counter() - t0
    return _finish(X, chosen, [1] * (k - 1), 0, elapsed, step_masses=masses_log)


def uniform_seeding(ds: Dataset, k: int, rng_seed: int = 0) -> SeedingResult:
    """k distinct centers drawn uniformly without replacement."""
    X = ds.points
    n = X.shape[0]
    _check_k(k, n)
    rng = np.random.default_rng(rng_seed)
    t0 = time.perf_counter()
    chosen = rng.choice(n, size=k, replace=False)
    elapsed = time.perf_counter() - t0
    return _finish(X, chosen, [0] * (k - 1), 0, elapsed)

"""Nearest-center index with an exact backend and an approximate one.

Both backends honor the same query contract: for a probe p the returned
center q satisfies

    true_min_sq <= ||p - q||^2 <= (1/rho) * true_min_sq,  rho in (0, 1],

and reported distances for a fixed probe key never increase as centers are
inserted.  The exact backend is a vectorized scan (rho coerced to 1), which
is monotone by itself since inserts can only lower the true minimum.  The
`lsh` backend hashes centers into L = ceil(rho^-1 * ln 1000) tables of
10-bit random-hyperplane signatures; bucket hits give a fast first answer,
after which a scan of the centers whose norm lies within sqrt(rho) * best
of the probe norm certifies the bound: by the reverse triangle inequality
every unscanned center is at least sqrt(rho) * best away, so the answer is
within 1/sqrt(rho) of optimal no matter what the hash tables returned.
When every bucket misses, the window is the whole center set, i.e. an
exhaustive fallback.  Keyed lsh queries go through a best-so-far cache;
a cached answer is only returned when it does not exceed the fresh one,
which keeps both contract sides intact.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["AnnIndex", "SIGNATURE_BITS"]

# Hash sizing targets ~1000 centers: ceil(log2(1000)) signature bits.
SIGNATURE_BITS = 10
_TABLE_SCALE = math.log(1000.0)
_BIT_WEIGHTS = 1 << np.arange(SIGNATURE_BITS, dtype=np.int64)


class AnnIndex:
    """Incremental nearest-center index over inserted rows.

    Args:
        backend: "exact" or "lsh".
        rho: approximation parameter in (0, 1]; the exact backend coerces
            it to 1.
        rng_seed: seeds the hash hyperplanes; two indexes built with the
            same seed hash identically.
    """

    def __init__(self, backend: str = "exact", rho: float = 1.0, rng_seed: int = 0) -> None:
        if backend not in ("exact", "lsh"):
            raise ValueError(f"unknown backend {backend!r} (expected 'exact' or 'lsh')")
        if not 0.0 < rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        self.backend = backend
        self.rho = 1.0 if backend == "exact" else float(rho)
        self._rng_seed = rng_seed
        self._num_tables = 0 if backend == "exact" else math.ceil(_TABLE_SCALE / self.rho)
        self._dim: int | None = None
        self._coords = np.empty((0, 0))
        self._count = 0
        self._hyperplanes: np.ndarray | None = None
        self._tables: list[dict[int, list[int]]] = []
        self._norms = np.empty(0, dtype=np.float64)
        self._rows: list[list[float]] = []
        self._cache: dict[object, tuple[float, int]] = {}
        self.dist_evals = 0

    @property
    def num_tables(self) -> int:
        return self._num_tables

    @property
    def num_centers(self) -> int:
        return self._count

    def _init_dim(self, dim: int) -> None:
        self._dim = dim
        self._coords = np.empty((16, dim), dtype=np.float64)
        if self.backend == "lsh":
            self._norms = np.empty(16, dtype=np.float64)
            rng = np.random.default_rng(self._rng_seed)
            self._hyperplanes = rng.standard_normal((self._num_tables * SIGNATURE_BITS, dim))
            self._tables = [dict() for _ in range(self._num_tables)]

    def _codes(self, vec: np.ndarray) -> np.ndarray:
        bits = (self._hyperplanes @ vec) >= 0.0
        return bits.reshape(self._num_tables, SIGNATURE_BITS) @ _BIT_WEIGHTS

    def insert(self, center) -> int:
        """Add a center; returns its ordinal. Dimension is fixed at first insert."""
        c = np.asarray(center, dtype=np.float64).ravel()
        if self._dim is None:
            self._init_dim(c.size)
        elif c.size != self._dim:
            raise ValueError(f"center has dim {c.size}, index has dim {self._dim}")
        if self._count == self._coords.shape[0]:
            grown = np.empty((2 * self._count, self._dim), dtype=np.float64)
            grown[: self._count] = self._coords[: self._count]
            self._coords = grown
            if self.backend == "lsh":
                gnorms = np.empty(2 * self._count, dtype=np.float64)
                gnorms[: self._count] = self._norms[: self._count]
                self._norms = gnorms
        ordinal = self._count
        self._coords[ordinal] = c
        self._count += 1
        self._rows.append(c.tolist())
        if self.backend == "lsh":
            self._norms[ordinal] = math.sqrt(float(c @ c))
            for table, code in zip(self._tables, self._codes(c)):
                table.setdefault(int(code), []).append(ordinal)
        return ordinal

    def _best_among(self, ids: np.ndarray, probe: np.ndarray) -> tuple[int, float]:
        pts = self._coords[ids]
        diff = pts - probe
        d2 = np.einsum("ij,ij->i", diff, diff)
        self.dist_evals += len(ids)
        j = int(np.argmin(d2))
        return int(ids[j]), float(d2[j])

    def _best_all(self, probe: np.ndarray) -> tuple[int, float]:
        # Contiguous scan of every center: no index gather and no (k, dim)
        # temporary, so wide certification windows stay cheap per query.
        d2 = cdist(probe[None, :], self._coords[: self._count], "sqeuclidean")[0]
        self.dist_evals += self._count
        j = int(np.argmin(d2))
        return j, float(d2[j])

    def query(self, probe, key=None) -> tuple[np.ndarray, float]:
        """Return (center, dist_sq) for the nearest stored center, up to rho.

        `key` identifies the probe across calls (seeding passes the dataset
        row index); keyed lsh queries share a best-so-far cache so the
        reported distance is non-increasing over inserts.
        """
        if self._count == 0:
            raise ValueError("query on an empty index")
        p = np.asarray(probe, dtype=np.float64).ravel()
        if p.size != self._dim:
            raise ValueError(f"probe has dim {p.size}, index has dim {self._dim}")
        if self.backend == "exact":
            diff = self._coords[: self._count] - p
            d2 = np.einsum("ij,ij->i", diff, diff)
            self.dist_evals += self._count
            j = int(np.argmin(d2))
            return self._coords[j], float(d2[j])
        best_id, best_d2 = self._lsh_query(p)
        if key is not None:
            prev = self._cache.get(key)
            if prev is not None and prev[0] <= best_d2:
                best_d2, best_id = prev
            else:
                self._cache[key] = (best_d2, best_id)
        return self._coords[best_id], best_d2

    def query_small(self, row: list[float]) -> float:
        """Exact squared distance to the nearest center for one small probe.

        Takes and works on plain floats; at a handful of centers and
        coordinates this sidesteps array-call overhead entirely.  Exact
        backend only.
        """
        if self.backend != "exact":
            raise ValueError("query_small is exact-backend only")
        if self._count == 0:
            raise ValueError("query on an empty index")
        best = math.inf
        for c in self._rows:
            s = 0.0
            for a, b in zip(row, c):
                d = a - b
                s += d * d
            if s < best:
                best = s
        self.dist_evals += self._count
        return best

    def query_batch(self, probes: np.ndarray, keys=None) -> np.ndarray:
        """Squared distances for a block of probes under the same contract.

        `probes` is (b, dim); `keys`, when given, is a length-b sequence of
        probe keys feeding the same cache as `query`.  Returns the length-b
        distance array; answers match what b successive `query` calls with
        no interleaved inserts would report.
        """
        if self._count == 0:
            raise ValueError("query on an empty index")
        b = probes.shape[0]
        if self.backend == "exact":
            d2 = cdist(probes, self._coords[: self._count], "sqeuclidean").min(axis=1)
            self.dist_evals += b * self._count
            return d2
        codes = (probes @ self._hyperplanes.T >= 0.0).reshape(
            b, self._num_tables, SIGNATURE_BITS
        ) @ _BIT_WEIGHTS
        out = np.empty(b, dtype=np.float64)
        for j in range(b):
            best_id, best_d2 = self._lsh_query(probes[j], codes[j])
            if keys is not None:
                prev = self._cache.get(keys[j])
                if prev is not None and prev[0] <= best_d2:
                    best_d2 = prev[0]
                else:
                    self._cache[keys[j]] = (best_d2, best_id)
            out[j] = best_d2
        return out

    def _lsh_query(self, p: np.ndarray, codes: np.ndarray | None = None) -> tuple[int, float]:
        if codes is None:
            codes = self._codes(p)
        cand: list[int] = []
        for table, code in zip(self._tables, codes):
            hit = table.get(int(code))
            if hit:
                cand.extend(hit)
        best_id, best_d2 = -1, math.inf
        if cand:
            ids = np.unique(np.asarray(cand, dtype=np.intp))
            best_id, best_d2 = self._best_among(ids, p)
        # Certification stage: any center outside the norm window is at least
        # sqrt(rho) * best away, which is exactly the contract slack.  A wide
        # window is scanned contiguously instead: a superset never weakens
        # the certificate and the straight scan is cheaper than the gather.
        norms = self._norms[: self._count]
        if math.isfinite(best_d2):
            pnorm = math.sqrt(float(p @ p))
            w = math.sqrt(self.rho * best_d2)
            window = np.nonzero(np.abs(norms - pnorm) <= w)[0]
        else:
            window = None
        if window is None or 4 * len(window) >= self._count:
            wid, wd2 = self._best_all(p)
            if wd2 < best_d2 or (wd2 == best_d2 and wid < best_id):
                best_id, best_d2 = wid, wd2
        elif len(window):
            wid, wd2 = self._best_among(window, p)
            if wd2 < best_d2 or (wd2 == best_d2 and wid < best_id):
                best_id, best_d2 = wid, wd2
        return best_id, best_d2

    def reset_cache(self) -> None:
        """Forget cached per-key answers (start of a new seeding run)."""
        self._cache.clear()

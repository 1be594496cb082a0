"""Dataset loading, preprocessing, and synthetic manifold generation.

A dataset is an immutable row-major (n, dim) float64 matrix plus a centered
flag and, once centered, the cached squared Frobenius norm that the seeding
proposal distribution is built from.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "SyntheticSpec",
    "JlOptions",
    "load",
    "save",
    "preprocess",
    "gen_manifold",
    "inject_noise",
]

_MAGIC = b"QKM1"


@dataclass
class Dataset:
    """Point matrix with centering state.

    Attributes:
        points: (n, dim) float64 array, read-only after construction.
        centered: whether the column means have been subtracted.
        frob_sq: squared Frobenius norm of the matrix; only meaningful when
            `centered` is set (it then equals the cost against the origin).
    """

    points: np.ndarray
    centered: bool = False
    frob_sq: float | None = None

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if pts.shape[0] == 0:
            raise ValueError("empty dataset (n = 0)")
        if pts.shape[1] == 0:
            raise ValueError("dataset has zero columns")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        if pts is not self.points:
            # Freshly allocated here, safe to freeze without touching caller state.
            pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.frob_sq is not None:
            object.__setattr__(self, "frob_sq", float(self.frob_sq))
        object.__setattr__(self, "_row_norms_sq", None)
        object.__setattr__(self, "_norm_tree", None)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def row_norms_sq(self) -> np.ndarray:
        """Per-row squared norms, computed on first access and cached."""
        cached = self._row_norms_sq
        if cached is None:
            cached = np.einsum("ij,ij->i", self.points, self.points)
            cached.flags.writeable = False
            object.__setattr__(self, "_row_norms_sq", cached)
        return cached

    @property
    def norm_tree(self):
        """Shared sampler tree over `row_norms_sq`, built once per dataset.

        The returned tree is cached: treat it as read-only and build
        `SamplerTree(ds.row_norms_sq)` instead when updates are needed.
        """
        cached = self._norm_tree
        if cached is None:
            from .sampler_tree import SamplerTree

            cached = SamplerTree(self.row_norms_sq)
            object.__setattr__(self, "_norm_tree", cached)
        return cached


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for a synthetic low-dimensional manifold sample.

    `intrinsic_dim` points are drawn on the unit cube [0,1]^d or the unit
    sphere S^(d-1) and embedded into `ambient_dim` coordinates by a seeded
    random orthonormal frame.
    """

    intrinsic_dim: int
    ambient_dim: int
    n: int
    kind: str = "unit-cube"
    rng_seed: int = 0


@dataclass(frozen=True)
class JlOptions:
    """Random-projection options for `preprocess`.

    The target dimension is ceil(8 * ln(max(k, 2) / eps_jl) / eps_jl^2); the
    projection is skipped when that does not reduce the dimension.
    """

    eps_jl: float
    k: int
    seed: int = 0


def _parse_csv(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    width = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width < 0:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(
                    f"ragged CSV: row {lineno} has {len(fields)} fields, expected {width}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"unparseable value in CSV row {lineno}") from exc
    if not rows:
        raise ValueError("empty dataset (no CSV rows)")
    arr = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0]) + 1
        raise ValueError(f"non-finite value in CSV row {bad}")
    return arr


def _parse_bin(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise ValueError("binary dataset truncated before header")
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    n, dim = struct.unpack_from("<II", blob, 4)
    if n == 0:
        raise ValueError("empty dataset (n = 0)")
    if dim == 0:
        raise ValueError("dataset has zero columns")
    expect = 12 + 4 * n * dim
    if len(blob) != expect:
        raise ValueError(f"binary payload is {len(blob)} bytes, expected {expect}")
    arr = np.frombuffer(blob, dtype="<f4", offset=12).reshape(n, dim)
    arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value in binary payload")
    return arr


def load(path: str, format: str = "csv") -> Dataset:
    """Read a dataset file.

    CSV is headerless comma-separated reals, one point per row.  Binary is
    the magic `QKM1`, little-endian u32 n and dim, then n*dim float32
    coordinates row-major.
    """
    if format == "csv":
        return Dataset(_parse_csv(path))
    if format == "bin":
        return Dataset(_parse_bin(path))
    raise ValueError(f"unknown format {format!r} (expected 'csv' or 'bin')")


def save(ds: Dataset, path: str, format: str = "bin") -> None:
    """Write a dataset in either on-disk format.

    Binary stores float32, so coordinates not representable in single
    precision are rounded once; a second round trip is exact.
    """
    if format == "bin":
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", ds.n, ds.dim))
            fh.write(np.ascontiguousarray(ds.points, dtype="<f4").tobytes())
    elif format == "csv":
        np.savetxt(path, ds.points, delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unknown format {format!r} (expected 'csv' or 'bin')")


def jl_target_dim(eps_jl: float, k: int) -> int:
    """Projection dimension preserving k-center costs to factor 1 +/- 3*eps."""
    return math.ceil(8.0 * math.log(max(k, 2) / eps_jl) / (eps_jl * eps_jl))


def preprocess(ds: Dataset, jl: JlOptions | None = None) -> Dataset:
    """Optionally random-project, then center and cache the Frobenius norm.

    The projection matrix is i.i.d. Gaussian scaled by 1/sqrt(target_dim)
    and is applied before centering.  Centering is idempotent up to
    floating-point residue.
    """
    pts = ds.points
    if jl is not None:
        if not 0.0 < jl.eps_jl < 0.25:
            raise ValueError("eps_jl must lie in (0, 1/4)")
        if jl.k < 1:
            raise ValueError("jl k must be >= 1")
        target = jl_target_dim(jl.eps_jl, jl.k)
        if target < pts.shape[1]:
            rng = np.random.default_rng(jl.seed)
            proj = rng.standard_normal((pts.shape[1], target)) / math.sqrt(target)
            pts = pts @ proj
    centered = pts - pts.mean(axis=0)
    frob_sq = float(np.einsum("ij,ij->", centered, centered))
    return Dataset(centered, centered=True, frob_sq=frob_sq)


def gen_manifold(spec: SyntheticSpec) -> Dataset:
    """Sample `spec.n` points on a d-dimensional cube or sphere in R^D.

    For intrinsic_dim < ambient_dim the sample is mapped through a seeded
    random orthonormal frame (QR of a Gaussian matrix), so the rows span a
    rank-d subspace; with equal dimensions the sample is returned as is.
    """
    d, amb, n = spec.intrinsic_dim, spec.ambient_dim, spec.n
    if d < 1 or amb < 1:
        raise ValueError("dimensions must be >= 1")
    if d > amb:
        raise ValueError(f"intrinsic_dim {d} exceeds ambient_dim {amb}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind not in ("unit-cube", "unit-sphere"):
        raise ValueError(f"unknown kind {spec.kind!r}")
    rng = np.random.default_rng(spec.rng_seed)
    if spec.kind == "unit-cube":
        base = rng.random((n, d))
    else:
        base = rng.standard_normal((n, d))
        norms = np.linalg.norm(base, axis=1, keepdims=True)
        # A zero row has probability zero; resample any that appear.
        while np.any(norms == 0.0):
            bad = norms[:, 0] == 0.0
            base[bad] = rng.standard_normal((int(bad.sum()), d))
            norms = np.linalg.norm(base, axis=1, keepdims=True)
        base = base / norms
    if d == amb:
        pts = base
    else:
        frame, _ = np.linalg.qr(rng.standard_normal((amb, d)))
        pts = base @ frame.T
    return Dataset(pts, centered=False)


def inject_noise(ds: Dataset, nsr: float, rng_seed: int = 0) -> Dataset:
    """Add isotropic Gaussian noise at a given noise-to-signal ratio.

    The per-coordinate scale is nsr * sqrt(frob_sq / (n * dim)), the global
    RMS of the centered data; the result is re-centered.  Requires a
    centered dataset; nsr = 0 returns the input unchanged.
    """
    if not ds.centered:
        raise ValueError("inject_noise requires a centered dataset")
    if nsr < 0.0:
        raise ValueError("nsr must be nonnegative")
    if nsr == 0.0:
        return ds
    sigma = math.sqrt(ds.frob_sq / (ds.n * ds.dim))
    rng = np.random.default_rng(rng_seed)
    noisy = ds.points + nsr * sigma * rng.standard_normal(ds.points.shape)
    noisy -= noisy.mean(axis=0)
    frob_sq = float(np.einsum("ij,ij->", noisy, noisy))
    return Dataset(noisy, centered=True, frob_sq=frob_sq)

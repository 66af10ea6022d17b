"""Covariance models, seeded Gaussian sampling, and symmetric eigendecompositions.

Everything downstream (estimators, Monte Carlo) funnels through the
primitives here, so determinism and eigenvalue hygiene (sorting, clipping
of negative round-off) are enforced once, in this module.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EigenSolverError",
    "CovarianceModel",
    "SampleSet",
    "SpectralDecomposition",
    "derive_seed",
    "rng_from",
    "sample_gaussian",
    "sample_covariance",
    "sym_eig",
    "sym_eigvalues",
    "load_samples_csv",
    "save_samples_csv",
]

_MASK64 = (1 << 64) - 1

# Relative width of the clipping band for eigenvalues of nominally PSD
# matrices: values in (-CLIP_REL * max|eig|, 0) are round-off, not signal.
CLIP_REL = 1e-10

# Symmetry tolerance for eigensolver inputs, relative to max|entry|.
SYM_TOL = 1e-8


class EigenSolverError(RuntimeError):
    """Symmetric eigensolver failed to converge."""


def _entropy(parts: tuple[int, ...]) -> list[int]:
    # the length word up front keeps (s,), (s, 0), (s, 0, 0) on distinct
    # streams; trailing zeros alone do not change a SeedSequence pool
    return [len(parts), *(int(p) & _MASK64 for p in parts)]


def derive_seed(*parts: int) -> int:
    """Collapse integer parts into one 64-bit seed, deterministically.

    Used everywhere a child stream is split off a master seed (replicate
    index, subsample level, subset index), so that results never depend on
    scheduling or evaluation order.
    """
    return int(
        np.random.SeedSequence(_entropy(parts)).generate_state(1, np.uint64)[0]
    )


def rng_from(*parts: int) -> np.random.Generator:
    """Generator seeded from the same derivation as :func:`derive_seed`."""
    return np.random.default_rng(np.random.SeedSequence(_entropy(parts)))


@dataclass(frozen=True)
class CovarianceModel:
    """Ground-truth covariance, specified by its spectrum.

    Parameters
    ----------
    eigenvalues : array
        Nonnegative, sorted non-increasing.
    basis : array, optional
        Orthonormal matrix whose column k is the eigenvector paired with
        ``eigenvalues[k]``. ``None`` means the model is diagonal in the
        standard basis.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray | None = None

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d vector")
        if not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite")
        if np.any(lam < 0):
            raise ValueError("eigenvalues must be nonnegative")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted non-increasing")
        object.__setattr__(self, "eigenvalues", lam)
        if self.basis is not None:
            vec = np.asarray(self.basis, dtype=float)
            if vec.shape != (lam.size, lam.size):
                raise ValueError(
                    f"basis must be {lam.size}x{lam.size}, got {vec.shape}"
                )
            gram_err = float(np.max(np.abs(vec.T @ vec - np.eye(lam.size))))
            if gram_err > 1e-10:
                raise ValueError(
                    f"basis is not orthonormal: max |V'V - I| = {gram_err:.3e}"
                )
            object.__setattr__(self, "basis", vec)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def matrix(self) -> np.ndarray:
        """Dense covariance matrix V diag(lam) V'."""
        if self.basis is None:
            return np.diag(self.eigenvalues)
        return (self.basis * self.eigenvalues) @ self.basis.T

    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def operator_norm(self) -> float:
        return float(self.eigenvalues[0])

    @staticmethod
    def identity(dim: int) -> "CovarianceModel":
        if dim < 1:
            raise ValueError("dim must be >= 1")
        return CovarianceModel(np.ones(dim))

    @staticmethod
    def poly_decay(dim: int, beta: float) -> "CovarianceModel":
        """Spectrum lam_k = k**(-beta), k = 1..dim."""
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if beta < 0:
            raise ValueError("beta must be >= 0")
        k = np.arange(1, dim + 1, dtype=float)
        return CovarianceModel(k ** -beta)

    @staticmethod
    def from_values(values) -> "CovarianceModel":
        """Model with the given eigenvalues, sorted for the caller."""
        lam = np.sort(np.asarray(values, dtype=float))[::-1]
        return CovarianceModel(lam.copy())

    def with_random_basis(self, seed: int) -> "CovarianceModel":
        """Same spectrum, conjugated by a seeded random orthogonal matrix."""
        rng = rng_from(seed)
        raw = rng.standard_normal((self.dim, self.dim))
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))  # fix the sign convention
        return CovarianceModel(self.eigenvalues.copy(), q)


@dataclass(frozen=True)
class SampleSet:
    """Observations as rows of an (n, dim) array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"data must be a nonempty 2-d array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data contains non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def prefix(self, k: int) -> "SampleSet":
        """First k observations, in order."""
        if not 1 <= k <= self.n:
            raise ValueError(f"prefix length {k} out of range [1, {self.n}]")
        return SampleSet(self.data[:k])


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (non-increasing, round-off clipped) and orthonormal eigenvectors.

    Column k of ``eigenvectors`` pairs with ``eigenvalues[k]``; the input
    matrix is recovered as V diag(lam) V'.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def sample_gaussian(model: CovarianceModel, n: int, seed: int) -> SampleSet:
    """n i.i.d. mean-zero Gaussian rows with covariance ``model``.

    Rows are V diag(sqrt(lam)) Z with Z standard normal, so the draw is a
    pure function of (model, n, seed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_from(seed)
    z = rng.standard_normal((n, model.dim))
    x = z * np.sqrt(model.eigenvalues)
    if model.basis is not None:
        x = x @ model.basis.T
    return SampleSet(x)


def sample_covariance(samples: SampleSet) -> np.ndarray:
    """Gram-based covariance X'X / n (no centering), exactly symmetrized."""
    x = samples.data
    a = x.T @ x
    a += a.T
    a /= 2.0 * samples.n
    return a


def _clip_roundoff(lam: np.ndarray) -> np.ndarray:
    # lam is sorted non-increasing; band width scales with the top magnitude
    scale = max(abs(lam[0]), abs(lam[-1]))
    eps = CLIP_REL * scale
    lam[(lam < 0.0) & (lam > -eps)] = 0.0
    return lam


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYM_TOL * max(scale, 1.0):
        raise ValueError(
            f"matrix is not symmetric: max |A - A'| = {asym:.3e} "
            f"(tolerance {SYM_TOL * max(scale, 1.0):.3e})"
        )
    return a


def sym_eig(a: np.ndarray) -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Eigenvalues come back non-increasing, with negatives inside the
    round-off band clipped to zero. Solver non-convergence raises
    :class:`EigenSolverError` with the backend diagnostic attached.
    """
    a = _check_symmetric(a)
    try:
        lam, vec = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(
            f"eigensolver failed on {a.shape[0]}x{a.shape[0]} input: {exc}"
        ) from exc
    lam = _clip_roundoff(lam[::-1].copy())
    return SpectralDecomposition(lam, vec[:, ::-1].copy())


def sym_eigvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues only; cheaper than :func:`sym_eig` on hot paths."""
    a = _check_symmetric(a)
    try:
        lam = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(
            f"eigensolver failed on {a.shape[0]}x{a.shape[0]} input: {exc}"
        ) from exc
    return _clip_roundoff(lam[::-1].copy())


def load_samples_csv(path) -> SampleSet:
    """Read observations from CSV, one row per observation.

    A first row that does not parse as numbers is treated as a header and
    skipped. Ragged rows or non-numeric cells elsewhere are errors.
    """
    path = Path(path)
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric cell in {row!r}")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(
                f"{path}: row {i + 1} has {len(row)} cells, expected {width}"
            )
    return SampleSet(np.asarray(rows, dtype=float))


def save_samples_csv(samples: SampleSet, path, header: bool = True) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{j}" for j in range(samples.dim)])
        for row in samples.data:
            writer.writerow([repr(float(v)) for v in row])

"""Dense symmetric-matrix algebra: block assembly, PSD tests, Schur
complements, eigenvalue reports.

Everything here works on plain numpy arrays wrapped in a thin SymMatrix
type that enforces symmetry on construction. Matrices in this package are
small (a few dozen rows at most), so dense O(s^3) eigenvalue methods are
used throughout: eigvalsh for symmetric input, eigvals (QR on the
Hessenberg form) for general square input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SymMatrix",
    "BlockLayout",
    "EigenReport",
    "assemble_blocks",
    "is_psd",
    "schur_complement",
    "spectral_radius",
    "eig_report",
]

# Relative asymmetry above this raises instead of silently averaging.
ASYMMETRY_ALARM = 1e-12

# Schur complements are refused when cond(S22) exceeds this.
SCHUR_COND_CAP = 1e12


class MatrixShapeError(ValueError):
    """Inconsistent dimensions in a matrix operation."""


class AsymmetryError(ValueError):
    """Input claimed symmetric but is not, beyond the alarm threshold."""


class IllConditionedError(ValueError):
    """A required inverse is numerically unreliable."""


@dataclass(frozen=True)
class SymMatrix:
    """A dense real symmetric matrix, symmetrized as (S + S^T)/2 on
    construction. Immutable; safe to share between threads."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise MatrixShapeError(f"expected square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise MatrixShapeError("side must be >= 1")
        scale = np.abs(a).max()
        asym = np.abs(a - a.T).max()
        if scale > 0 and asym > ASYMMETRY_ALARM * scale:
            raise AsymmetryError(
                f"relative asymmetry {asym / scale:.3e} exceeds {ASYMMETRY_ALARM:.0e}"
            )
        sym = 0.5 * (a + a.T)
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @property
    def side(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class BlockLayout:
    """Row/column partition sizes for symmetric block assembly."""

    row_sizes: tuple

    def __init__(self, row_sizes: Sequence[int]):
        sizes = tuple(int(s) for s in row_sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise MatrixShapeError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "row_sizes", sizes)

    @property
    def side(self) -> int:
        return sum(self.row_sizes)

    def offsets(self):
        off = [0]
        for s in self.row_sizes:
            off.append(off[-1] + s)
        return off


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalue summary: real sorted spectrum for symmetric input,
    complex moduli otherwise."""

    eigenvalues: np.ndarray
    min_eig: float
    spectral_radius: float
    symmetric: bool


def assemble_blocks(layout: BlockLayout, blocks) -> SymMatrix:
    """Place a grid of blocks on the layout and return the symmetric result.

    ``blocks[i][j]`` is either an array of shape (row_sizes[i], row_sizes[j])
    or None for a zero block. The grid must be symmetric up to transposition:
    blocks[j][i] == blocks[i][j].T entrywise.
    """
    sizes = layout.row_sizes
    nb = len(sizes)
    if len(blocks) != nb or any(len(row) != nb for row in blocks):
        raise MatrixShapeError(f"expected a {nb}x{nb} grid of blocks")
    off = layout.offsets()
    out = np.zeros((layout.side, layout.side))
    for i in range(nb):
        for j in range(nb):
            blk = blocks[i][j]
            if blk is None:
                continue
            b = np.atleast_2d(np.asarray(blk, dtype=float))
            if b.shape != (sizes[i], sizes[j]):
                raise MatrixShapeError(
                    f"block ({i},{j}) has shape {b.shape}, expected {(sizes[i], sizes[j])}"
                )
            out[off[i]:off[i + 1], off[j]:off[j + 1]] = b
    asym = np.abs(out - out.T).max()
    scale = np.abs(out).max()
    if scale > 0 and asym > ASYMMETRY_ALARM * scale:
        raise AsymmetryError("block grid is not symmetric up to transposition")
    return SymMatrix(out)


def eig_report(a) -> EigenReport:
    """Eigenvalue report for a square matrix; symmetric inputs take the
    symmetric (tridiagonalization) path."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MatrixShapeError(f"expected square matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    symmetric = bool(scale == 0 or np.abs(m - m.T).max() <= 1e-12 * scale)
    if symmetric:
        w = np.linalg.eigvalsh(0.5 * (m + m.T))
        return EigenReport(w, float(w[0]), float(np.abs(w).max()), True)
    w = np.linalg.eigvals(m)
    mods = np.sort(np.abs(w))
    return EigenReport(mods, float(mods[0]), float(mods[-1]), False)


def is_psd(s, tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of the symmetric matrix is >= -tol."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    m = s.entries if isinstance(s, SymMatrix) else SymMatrix(np.asarray(s)).entries
    return bool(np.linalg.eigvalsh(m)[0] >= -tol)


def min_eig(s) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = s.entries if isinstance(s, SymMatrix) else 0.5 * (np.asarray(s, float) + np.asarray(s, float).T)
    return float(np.linalg.eigvalsh(m)[0])


def schur_complement(s, split: int) -> SymMatrix:
    """Schur complement of the trailing block: S11 - S12 S22^{-1} S12^T,
    where S is partitioned after row/column ``split``."""
    m = s.entries if isinstance(s, SymMatrix) else SymMatrix(np.asarray(s)).entries
    side = m.shape[0]
    if not 0 < split < side:
        raise MatrixShapeError(f"split {split} out of range for side {side}")
    s11 = m[:split, :split]
    s12 = m[:split, split:]
    s22 = m[split:, split:]
    cond = np.linalg.cond(s22)
    if not np.isfinite(cond) or cond > SCHUR_COND_CAP:
        raise IllConditionedError(f"S22 condition estimate {cond:.3e} exceeds {SCHUR_COND_CAP:.0e}")
    comp = s11 - s12 @ np.linalg.solve(s22, s12.T)
    return SymMatrix(0.5 * (comp + comp.T))


def spectral_radius(a) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    return eig_report(a).spectral_radius

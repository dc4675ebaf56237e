"""Hermitian eigensolves, band structures and spectral-gap detection.

Dense solves (numpy/LAPACK) are the default and the correctness oracle;
real-space operators above the sparse threshold use ARPACK shift-invert
targeting the energy of interest.  Momentum grids always contain k = 0 and
k = pi exactly (even point counts spanning [-pi, pi)), so time-reversal
invariant momenta are sampled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterError, SolverError
from .model import (
    HermitianOperator,
    ModelParams,
    bloch_stack,
    ribbon_stack,
)

#: minimum empty-interval width (units of t0) accepted as a true spectral gap
GAP_THRESHOLD = 0.05


@dataclass
class BandData:
    """Eigenvalues over a momentum grid.

    ``energies`` has shape (nkx, nbands) for ribbons and (nkx, nky, nbands)
    for bulk grids, ascending along the last axis.  ``localization`` (ribbons
    only) holds per-state edge weights, shape (nkx, nbands, 2) for the
    (bottom, top) edges.
    """

    kx: np.ndarray
    energies: np.ndarray
    ky: Optional[np.ndarray] = None
    localization: Optional[np.ndarray] = None

    @property
    def nbands(self) -> int:
        return self.energies.shape[-1]

    def flat_energies(self) -> np.ndarray:
        return np.sort(self.energies.ravel())


@dataclass
class GapReport:
    """Largest eigenvalue-free subinterval found inside an energy window."""

    window: tuple
    gap: Optional[tuple]
    is_gapped: bool
    gap_threshold: float = GAP_THRESHOLD


def _as_matrix(h):
    if isinstance(h, HermitianOperator):
        return h.matrix
    return h


def _dense_eigh(mat):
    if sp.issparse(mat):
        mat = np.asarray(mat.todense())
    return np.linalg.eigh(mat)


def eig_hermitian(
    h,
    window: Optional[tuple] = None,
    nearest: Optional[tuple] = None,
    method: str = "auto",
):
    """Eigenvalues/eigenvectors of a Hermitian operator, ascending.

    Exactly one of ``window=(e_lo, e_hi)`` / ``nearest=(e0, count)`` may be
    given; with neither, the full spectrum is returned.  ``method`` is one of
    ``auto`` (dense below the sparse threshold, shift-invert above), ``dense``
    or ``sparse``.  Shift-invert runs with a fixed start vector so repeated
    solves are reproducible.
    """
    if window is not None and nearest is not None:
        raise ParameterError("pass at most one of window / nearest")
    mat = _as_matrix(h)
    dim = mat.shape[0]
    use_sparse = method == "sparse" or (method == "auto" and dim > 2000)
    if not use_sparse:
        vals, vecs = _dense_eigh(mat)
        if window is not None:
            lo, hi = window
            keep = (vals >= lo) & (vals <= hi)
            return vals[keep], vecs[:, keep]
        if nearest is not None:
            e0, count = nearest
            order = np.lexsort((vals, np.abs(vals - e0)))[: int(count)]
            order = order[np.argsort(vals[order])]
            return vals[order], vecs[:, order]
        return vals, vecs

    smat = sp.csc_matrix(mat)
    v0 = np.ones(dim) / math.sqrt(dim)  # fixed start vector: deterministic runs
    try:
        if nearest is not None:
            e0, count = nearest
            k = min(int(count), dim - 2)
            vals, vecs = spla.eigsh(smat, k=k, sigma=e0, which="LM", v0=v0)
        elif window is not None:
            lo, hi = window
            sigma = 0.5 * (lo + hi)
            k = min(16, dim - 2)
            while True:
                vals, vecs = spla.eigsh(smat, k=k, sigma=sigma, which="LM", v0=v0)
                covered = vals.min() < lo and vals.max() > hi
                if covered or k >= min(dim - 2, 4 * int(math.sqrt(dim)) + 64):
                    break
                k = min(2 * k, dim - 2)
            keep = (vals >= lo) & (vals <= hi)
            vals, vecs = vals[keep], vecs[:, keep]
        else:
            vals, vecs = spla.eigsh(smat, k=dim - 2, v0=v0)
    except spla.ArpackNoConvergence as exc:  # pragma: no cover - rare path
        raise SolverError(
            "iterative eigensolver failed to converge",
            diagnostics={
                "converged_eigenvalues": getattr(exc, "eigenvalues", None),
                "requested": window or nearest or "all",
            },
        ) from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def momentum_grid(count: int, period: float = 2.0 * math.pi) -> np.ndarray:
    """Even-count uniform grid over [-period/2, period/2) including 0 exactly."""
    n = int(count)
    if n % 2:
        n += 1
    return np.linspace(-period / 2.0, period / 2.0, n, endpoint=False)


def _solve_grid(build, ks, threads: int = 1, vectors: bool = False):
    mats = [build(k) for k in ks]
    stack = np.stack(mats)
    if vectors:
        return np.linalg.eigh(stack)
    return np.linalg.eigvalsh(stack), None


def bulk_bands(
    params: ModelParams, grid: tuple = (32, 32), threads: int = 1
) -> BandData:
    """Band energies over the magnetic Brillouin zone on an (nkx, nky) grid."""
    nkx, nky = grid
    if nkx < 16 or nky < 16:
        raise ParameterError("bulk band grid must be at least 16x16")
    Q = params.magnetic_height
    kxs = momentum_grid(nkx)
    kys = momentum_grid(nky, period=2.0 * math.pi / Q)
    stack = bloch_stack(params, kxs, kys)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(np.linalg.eigvalsh, stack))
        energies = np.stack(rows)
    else:
        energies = np.linalg.eigvalsh(stack)
    return BandData(kx=kxs, ky=kys, energies=energies)


def ribbon_bands(
    params: ModelParams,
    ny: int,
    kx_count: int = 102,
    threads: int = 1,
    ring_rows: int = 2,
) -> BandData:
    """Ribbon bands with per-state edge weights.

    The localization tag of each state is the probability weight inside the
    outermost ``ring_rows`` rows, reported separately for the bottom and the
    top edge.
    """
    if ny < 2 * params.magnetic_height:
        raise ParameterError(
            f"ribbon height {ny} too small; need at least 2*lcm(q,2) = "
            f"{2 * params.magnetic_height} rows"
        )
    if kx_count < 101:
        raise ParameterError("ribbon momentum grid needs at least 101 points")
    kxs = momentum_grid(kx_count)
    stack = ribbon_stack(params, ny, kxs)

    def solve(h):
        vals, vecs = np.linalg.eigh(h)
        w = (np.abs(vecs) ** 2).reshape(ny, 2, -1).sum(axis=1)  # row weight per state
        bottom = w[:ring_rows].sum(axis=0)
        top = w[-ring_rows:].sum(axis=0)
        return vals, np.stack([bottom, top], axis=-1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(solve, stack))
    else:
        out = [solve(h) for h in stack]
    energies = np.stack([o[0] for o in out])
    localization = np.stack([o[1] for o in out])
    return BandData(kx=kxs, energies=energies, localization=localization)


def find_gap(values: np.ndarray, window: tuple, gap_threshold: float = GAP_THRESHOLD):
    """Maximal empty subinterval of sorted ``values`` inside ``window``."""
    lo, hi = window
    if not hi > lo:
        raise ParameterError(f"empty energy window {window}")
    inside = np.sort(values[(values > lo) & (values < hi)])
    points = np.concatenate(([lo], inside, [hi]))
    widths = np.diff(points)
    i = int(np.argmax(widths))
    gap = (float(points[i]), float(points[i + 1]))
    if widths[i] >= gap_threshold:
        return gap
    return None


def gap_in_window(
    bands: BandData, window: tuple, gap_threshold: float = GAP_THRESHOLD
) -> GapReport:
    """Scan merged band energies for the largest gap inside the window."""
    gap = find_gap(bands.flat_energies(), window, gap_threshold)
    return GapReport(
        window=(float(window[0]), float(window[1])),
        gap=gap,
        is_gapped=gap is not None,
        gap_threshold=gap_threshold,
    )

"""Topological invariants and the spin-mixing / staggering phase diagram.

Chern numbers come from the lattice field-strength (link-variable) method on
a discretized magnetic Brillouin zone: overlap-determinant links, plaquette
field strengths folded to the principal branch, integer after rounding.  The
method only needs the selected band group to stay separated from the rest, so
folded degenerate pairs inside the group are fine.

The Z2 index is obtained on a ribbon: count the crossings of the Fermi level
by states localized on one chosen edge for kx in [0, pi]; the parity of that
count is the invariant.  At beta = 0 it is cross-checked against the spin
Chern number.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DegeneracyError, GaplessError, ParameterError, ResolutionError
from .model import (
    SPIN_DOWN,
    SPIN_UP,
    ModelParams,
    bloch_stack,
    ribbon_stack,
    spin_bloch_stack,
)
from .spectra import GAP_THRESHOLD, GapReport, bulk_bands, gap_in_window

PHASE_TOPOLOGICAL = "topological"
PHASE_METAL = "metal"
PHASE_TRIVIAL = "trivial"
PHASE_ERROR = "error"  # per-point failure recorded in PhasePoint.error

#: maximum |C - round(C)| accepted when certifying an integer Chern number
CHERN_RESIDUAL_TOL = 0.01
DEFAULT_FERMI_ENERGY = 1.5
DEFAULT_WINDOW = (1.0, 2.0)


@dataclass
class PhasePoint:
    beta: float
    lam: float
    phase: str
    nu: Optional[int]
    gap: Optional[GapReport]
    error: Optional[str] = None


@dataclass
class PhaseMap:
    beta_grid: np.ndarray
    lambda_grid: np.ndarray
    points: list  # row-major: points[i][j] at (beta_grid[i], lambda_grid[j])


def _band_stack(params: ModelParams, nkx: int, nky: int, spin: Optional[int]):
    """Eigen-decomposition over the periodic FHS grid (no endpoint doubling)."""
    Q = params.magnetic_height
    kxs = np.linspace(-math.pi, math.pi, nkx, endpoint=False)
    kys = np.linspace(-math.pi / Q, math.pi / Q, nky, endpoint=False)
    if spin is None:
        stack = bloch_stack(params, kxs, kys)
    else:
        stack = spin_bloch_stack(params, kxs, kys, spin)
    vals, vecs = np.linalg.eigh(stack)
    return vals, vecs


def _select_band_indices(vals: np.ndarray, bands) -> List[int]:
    nb = vals.shape[-1]
    if isinstance(bands, tuple) and len(bands) == 2 and bands[0] == "below":
        counts = (vals < bands[1]).sum(axis=-1)
        if counts.min() != counts.max():
            raise DegeneracyError(
                f"number of bands below E={bands[1]} varies across the zone "
                f"({counts.min()}..{counts.max()}); no clean band group"
            )
        return list(range(int(counts[0, 0])))
    idx = sorted(int(b) for b in bands)
    if any(b < 0 or b >= nb for b in idx):
        raise ParameterError(f"band indices {idx} out of range for {nb} bands")
    return idx


def chern_fhs(
    params: ModelParams,
    bands,
    kgrid: tuple = (24, 24),
    spin: Optional[int] = None,
) -> int:
    """Chern number of a band group via the lattice field-strength sum.

    ``bands`` is either an explicit list of band indices or ``("below", E)``.
    ``spin`` restricts to one decoupled spin sector (requires beta = 0).
    Raises DegeneracyError if the group touches its complement anywhere on the
    grid and ResolutionError if the rounded total is not integer to within
    ``CHERN_RESIDUAL_TOL``.
    """
    nkx, nky = kgrid
    if nkx < 24 or nky < 24:
        raise ParameterError("FHS grid must be at least 24x24")
    vals, vecs = _band_stack(params, nkx, nky, spin)
    idx = _select_band_indices(vals, bands)
    if not idx:
        return 0
    if idx != list(range(idx[0], idx[0] + len(idx))):
        raise ParameterError("band selection must be a contiguous index range")
    lo, hi = idx[0], idx[-1]
    nb = vals.shape[-1]
    sep = np.inf
    if lo > 0:
        sep = min(sep, float((vals[..., lo] - vals[..., lo - 1]).min()))
    if hi < nb - 1:
        sep = min(sep, float((vals[..., hi + 1] - vals[..., hi]).min()))
    if sep < 1e-9:
        raise DegeneracyError(
            f"selected bands {idx} touch their complement (min separation {sep:.2e})"
        )

    v = vecs[..., idx]  # (nkx, nky, dim, nsel)
    vdag = v.conj().transpose(0, 1, 3, 2)
    ux = np.linalg.det(vdag @ np.roll(v, -1, axis=0))
    uy = np.linalg.det(vdag @ np.roll(v, -1, axis=1))
    if np.min(np.abs(ux)) < 1e-12 or np.min(np.abs(uy)) < 1e-12:
        raise ResolutionError("vanishing link variable; refine the FHS grid")
    # plaquette orientation fixed so the lowest band of the +2*pi*alpha
    # (spin-up) sector at alpha=1/3 carries Chern number +1
    fs = np.angle(
        np.conj(ux) * np.conj(np.roll(uy, -1, axis=0)) * np.roll(ux, -1, axis=1) * uy
    )
    total = float(fs.sum() / (2.0 * math.pi))
    nearest = int(round(total))
    if abs(total - nearest) >= CHERN_RESIDUAL_TOL:
        raise ResolutionError(
            f"field-strength sum {total:.6f} not integer within "
            f"{CHERN_RESIDUAL_TOL}; refine the grid"
        )
    return nearest


def hofstadter_band_groups(params: ModelParams) -> List[List[int]]:
    """Band-index groups of the doubled magnetic cell, one per physical band.

    With the cell height fixed to lcm(q, 2), each of the q physical bands of a
    spin sector folds into a degenerate pair when q is odd; groups collect the
    folded indices so they can be fed to :func:`chern_fhs` together.
    """
    Q = params.magnetic_height
    fold = Q // params.q
    return [list(range(i * fold, (i + 1) * fold)) for i in range(params.q)]


def spin_chern(
    params: ModelParams, e_f: float = DEFAULT_FERMI_ENERGY, kgrid: tuple = (24, 24)
) -> tuple:
    """Per-spin Chern numbers of all bands below ``e_f`` (beta = 0 only)."""
    if params.beta != 0.0:
        raise ParameterError("spin Chern numbers need conserved spin (beta = 0)")
    c_up = chern_fhs(params, ("below", e_f), kgrid=kgrid, spin=SPIN_UP)
    c_down = chern_fhs(params, ("below", e_f), kgrid=kgrid, spin=SPIN_DOWN)
    return c_up, c_down


def bulk_gap_at(
    params: ModelParams,
    e_f: float,
    grid: tuple = (128, 128),
    gap_threshold: float = GAP_THRESHOLD,
) -> tuple:
    """Bulk gap (e_below, e_above) around e_f, or GaplessError if none.

    The default grid is fine enough that sampling holes in dispersive bands
    stay well below the gap threshold; gap stability under further grid
    refinement is asserted separately in the test suite.
    """
    bands = bulk_bands(params, grid)
    flat = bands.flat_energies()
    below = flat[flat < e_f]
    above = flat[flat > e_f]
    e_below = float(below.max()) if below.size else -np.inf
    e_above = float(above.min()) if above.size else np.inf
    if np.any(flat == e_f) or (e_above - e_below) < gap_threshold:
        raise GaplessError(
            f"no bulk gap at E={e_f}: nearest levels ({e_below:.4f}, {e_above:.4f})"
        )
    return e_below, e_above


def _ribbon_slab(params: ModelParams, ny: int, kxs: np.ndarray):
    """Ribbon eigenvalues plus per-state weight on the bottom half.

    Half-ribbon weights attribute a state to an edge even when its decay
    length grows near a transition, where a fixed shallow ring would fail.
    """
    stack = ribbon_stack(params, ny, np.asarray(kxs))
    vals, vecs = np.linalg.eigh(stack)
    w = (np.abs(vecs) ** 2).reshape(len(kxs), ny, 2, 2 * ny).sum(axis=2)
    bottom = w[:, : ny // 2].sum(axis=1)
    return vals, bottom


def _count_bottom_crossings(
    params, ny, e_f, k_lo, k_hi, e_lo, e_hi, w_lo, w_hi, depth, edge_weight_min
):
    """Bottom-edge crossings of e_f between two solved momenta.

    Sign changes are tracked per sorted band index, which also resolves pairs
    of branches crossing e_f in opposite directions within one interval
    (their net level count is unchanged).  Intervals with an ambiguous edge
    character are bisected, twice at most, then flagged.
    """
    flipped = np.nonzero((e_lo < e_f) != (e_hi < e_f))[0]
    if flipped.size == 0:
        return 0
    ambiguous = [
        j
        for j in flipped
        if not (
            min(w_lo[j], w_hi[j]) >= edge_weight_min
            or max(w_lo[j], w_hi[j]) < 1.0 - edge_weight_min
        )
    ]
    if (flipped.size > 1 or ambiguous) and depth < 2:
        k_mid = 0.5 * (k_lo + k_hi)
        e_mid, w_mid = _ribbon_slab(params, ny, np.array([k_mid]))
        return _count_bottom_crossings(
            params, ny, e_f, k_lo, k_mid, e_lo, e_mid[0], w_lo, w_mid[0],
            depth + 1, edge_weight_min,
        ) + _count_bottom_crossings(
            params, ny, e_f, k_mid, k_hi, e_mid[0], e_hi, w_mid[0], w_hi,
            depth + 1, edge_weight_min,
        )
    total = 0
    for j in flipped:
        w = 0.5 * (w_lo[j] + w_hi[j])
        if j in ambiguous:
            raise DegeneracyError(
                f"ambiguous edge weight {w:.3f} for a Fermi crossing near "
                f"kx={k_lo:.4f}; refine the momentum grid"
            )
        if w >= edge_weight_min:
            total += 1
    return total


def z2_invariant(
    params: ModelParams,
    e_f: float = DEFAULT_FERMI_ENERGY,
    ny_ribbon: int = 48,
    kx_points: int = 201,
    edge_weight_min: float = 0.5,
    gap_bounds: Optional[tuple] = None,
) -> int:
    """Z2 index from the parity of Fermi-level edge crossings on a ribbon.

    Counts, for kx in [0, pi], the states crossing the Fermi level whose
    weight sits on the bottom half of the ribbon (threshold
    ``edge_weight_min``); nu is the count mod 2.  The bulk must be gapped at
    e_f (GaplessError otherwise).  The parity is evaluated at three Fermi
    levels inside the bulk gap and the majority is returned: an accidental
    coincidence of opposite-edge branches at one level (where the finite
    ribbon hybridizes them into avoided curves) cannot then flip the result.
    """
    g_lo, g_hi = gap_bounds if gap_bounds is not None else bulk_gap_at(params, e_f)
    if not g_lo < e_f < g_hi:
        raise GaplessError(f"E={e_f} outside the certified bulk gap {gap_bounds}")
    kxs = np.linspace(0.0, math.pi, int(kx_points))
    vals, bottom = _ribbon_slab(params, ny_ribbon, kxs)
    # shifted vote energies stay inside the gap; semi-infinite gaps (Fermi
    # level beyond the whole spectrum) shift by a fixed margin instead
    lo_shift = 0.25 * (e_f - g_lo) if math.isfinite(g_lo) else 0.5
    hi_shift = 0.25 * (g_hi - e_f) if math.isfinite(g_hi) else 0.5
    candidates = (e_f, e_f - lo_shift, e_f + hi_shift)
    parities, failure = [], None
    for ef in candidates:
        try:
            crossings = 0
            for i in range(len(kxs) - 1):
                crossings += _count_bottom_crossings(
                    params, ny_ribbon, ef, kxs[i], kxs[i + 1],
                    vals[i], vals[i + 1], bottom[i], bottom[i + 1],
                    0, edge_weight_min,
                )
            parities.append(crossings % 2)
        except DegeneracyError as exc:
            failure = exc
    if not parities or (len(parities) == 2 and parities[0] != parities[1]):
        raise failure or DegeneracyError("edge-crossing count unresolved")
    return int(round(np.median(parities)))


def classify_point(
    params: ModelParams,
    window: tuple = DEFAULT_WINDOW,
    bulk_grid: tuple = (128, 128),
    ny_ribbon: int = 48,
    kx_points: int = 201,
    gap_threshold: float = GAP_THRESHOLD,
) -> PhasePoint:
    """Classify one (beta, lambda) point as topological, trivial or metal.

    Metal if the window holds no spectral gap; otherwise the Z2 index decides,
    evaluated at the window midpoint when it falls inside the detected gap and
    at the gap midpoint otherwise.
    """
    bands = bulk_bands(params, bulk_grid)
    report = gap_in_window(bands, window, gap_threshold)
    if not report.is_gapped:
        return PhasePoint(params.beta, params.lam, PHASE_METAL, None, report)
    g_lo, g_hi = report.gap
    mid = 0.5 * (window[0] + window[1])
    e_f = mid if g_lo < mid < g_hi else 0.5 * (g_lo + g_hi)
    nu = z2_invariant(params, e_f, ny_ribbon, kx_points, gap_bounds=(g_lo, g_hi))
    phase = PHASE_TOPOLOGICAL if nu == 1 else PHASE_TRIVIAL
    return PhasePoint(params.beta, params.lam, phase, nu, report)


def phase_diagram(
    alpha,
    beta_range: tuple = (0.0, 0.25),
    lambda_range: tuple = (0.0, 2.0),
    resolution: tuple = (16, 16),
    window: tuple = DEFAULT_WINDOW,
    threads: int = 1,
    **classify_kwargs,
) -> PhaseMap:
    """Classify a (beta, lambda) grid; per-point failures are recorded, not raised."""
    nb, nl = resolution
    if nb < 16 or nl < 16:
        raise ParameterError("phase-diagram resolution must be at least 16x16")
    betas = np.linspace(beta_range[0], beta_range[1], nb)
    lams = np.linspace(lambda_range[0], lambda_range[1], nl)
    tasks = [(b, l) for b in betas for l in lams]

    def work(bl):
        b, l = bl
        p = ModelParams(alpha=alpha, beta=float(b), lam=float(l))
        try:
            return classify_point(p, window, **classify_kwargs)
        except Exception as exc:  # recorded per point, no global abort
            return PhasePoint(float(b), float(l), PHASE_ERROR, None, None, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(work, tasks))
    else:
        flat = [work(t) for t in tasks]
    points = [flat[i * nl : (i + 1) * nl] for i in range(nb)]
    return PhaseMap(beta_grid=betas, lambda_grid=lams, points=points)

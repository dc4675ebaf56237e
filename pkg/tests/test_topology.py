"""Chern numbers, Z2 index and phase classification."""

from fractions import Fraction

import numpy as np
import pytest

from qshsim.errors import DegeneracyError, GaplessError, ParameterError
from qshsim.model import SPIN_DOWN, SPIN_UP, ModelParams
from qshsim.topology import (
    PHASE_METAL,
    PHASE_TOPOLOGICAL,
    bulk_gap_at,
    chern_fhs,
    classify_point,
    hofstadter_band_groups,
    phase_diagram,
    spin_chern,
    z2_invariant,
)

A13 = Fraction(1, 3)


def test_chern_flux_third_band_groups():
    # reference integers confirmed on refined grids
    p = ModelParams(alpha=A13)
    groups = hofstadter_band_groups(p)
    assert groups == [[0, 1], [2, 3], [4, 5]]
    up = [chern_fhs(p, g, (24, 24), spin=SPIN_UP) for g in groups]
    dn = [chern_fhs(p, g, (24, 24), spin=SPIN_DOWN) for g in groups]
    assert up == [1, -2, 1]
    assert dn == [-1, 2, -1]  # time reversal negates Chern numbers
    assert sum(up) == 0 and sum(dn) == 0  # sum rule


def test_chern_grid_stability():
    p = ModelParams(alpha=A13)
    for g in hofstadter_band_groups(p):
        assert chern_fhs(p, g, (24, 24), spin=SPIN_UP) == chern_fhs(
            p, g, (48, 48), spin=SPIN_UP
        )


def test_chern_zero_flux():
    p = ModelParams(alpha=Fraction(0, 1))
    assert chern_fhs(p, [0, 1], spin=SPIN_UP) == 0


def test_chern_degenerate_selection_rejected():
    # a folded sub-band touches its partner: not a valid selection
    p = ModelParams(alpha=A13)
    with pytest.raises(DegeneracyError):
        chern_fhs(p, [0], (24, 24), spin=SPIN_UP)


def test_chern_full_set_kramers_cancellation():
    p = ModelParams(alpha=A13, beta=0.05)
    assert chern_fhs(p, ("below", 1.5), (24, 24)) == 0


def test_spin_chern_examples():
    assert spin_chern(ModelParams(alpha=A13), 1.5) == (-1, 1)
    assert spin_chern(ModelParams(alpha=A13, lam=1.0), 1.5) == (-1, 1)
    assert spin_chern(ModelParams(alpha=Fraction(0, 1)), -5.0) == (0, 0)
    c_up, c_down = spin_chern(ModelParams(alpha=A13), 1.5)
    assert c_up == -c_down and abs(c_up) == 1
    with pytest.raises(ParameterError):
        spin_chern(ModelParams(alpha=A13, beta=0.1), 1.5)


def test_z2_examples():
    assert z2_invariant(ModelParams(alpha=A13), 1.5) == 1
    assert z2_invariant(ModelParams(alpha=A13, lam=1.0), 1.5) == 1
    assert z2_invariant(ModelParams(alpha=A13), -5.0) == 0  # below all bands


def test_z2_requires_bulk_gap():
    with pytest.raises(GaplessError):
        z2_invariant(ModelParams(alpha=A13, beta=0.1, lam=1.0), 1.5)
    with pytest.raises(GaplessError):
        bulk_gap_at(ModelParams(alpha=Fraction(0, 1)), 1.5)


def test_classify_reference_points():
    assert classify_point(ModelParams(alpha=A13)).phase == PHASE_TOPOLOGICAL
    pt = classify_point(ModelParams(alpha=A13, lam=1.0))
    assert pt.phase == PHASE_TOPOLOGICAL and pt.nu == 1
    pt = classify_point(ModelParams(alpha=A13, beta=0.1, lam=1.0))
    assert pt.phase == PHASE_METAL and pt.nu is None


def test_z2_matches_spin_chern_on_lambda_sweep():
    for lam in np.linspace(0.0, 1.0, 5):
        p = ModelParams(alpha=A13, lam=float(lam))
        nu = z2_invariant(p, 1.5)
        c_up, _ = spin_chern(p, 1.5)
        assert nu == abs(c_up) % 2 == 1


def test_phase_boundary_single_crossing_at_lambda_one():
    # sweeping the spin mixing at lam = t0 leaves the topological phase once
    betas = np.linspace(0.0, 0.1, 11)
    labels = []
    for b in betas:
        labels.append(
            classify_point(ModelParams(alpha=A13, beta=float(b), lam=1.0)).phase
        )
    assert labels[0] == PHASE_TOPOLOGICAL
    assert labels[-1] == PHASE_METAL
    flips = sum(1 for a, b in zip(labels, labels[1:]) if a != b)
    assert flips == 1


def _connected_component(points, start):
    """4-connected flood fill over equal-phase grid points."""
    nb, nl = len(points), len(points[0])
    phase = points[start[0]][start[1]].phase
    seen, stack = {start}, [start]
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < nb and 0 <= b < nl and (a, b) not in seen:
                if points[a][b].phase == phase:
                    seen.add((a, b))
                    stack.append((a, b))
    return seen


def test_phase_diagram_two_regions():
    pmap = phase_diagram(
        A13, (0.0, 0.25), (0.0, 2.0), resolution=(16, 16), threads=4
    )
    flat = [pt for row in pmap.points for pt in row]
    assert all(pt.error is None for pt in flat)
    phases = {pt.phase for pt in flat}
    assert phases == {PHASE_TOPOLOGICAL, PHASE_METAL}  # no trivial points
    assert pmap.points[0][0].phase == PHASE_TOPOLOGICAL  # (beta=0, lam=0)
    # point closest to (0.1, 1.0) is metallic
    i = int(np.argmin(np.abs(pmap.beta_grid - 0.1)))
    j = int(np.argmin(np.abs(pmap.lambda_grid - 1.0)))
    assert pmap.points[i][j].phase == PHASE_METAL
    # the beta=0 line is topological up to lam = t0
    for jj, lam in enumerate(pmap.lambda_grid):
        if lam <= 1.0:
            assert pmap.points[0][jj].phase == PHASE_TOPOLOGICAL
    # a topological region grown from (0,0) and a metal region grown from
    # (0.1, 1.0): connected patches, jointly covering most of the window
    topo_region = _connected_component(pmap.points, (0, 0))
    metal_region = _connected_component(pmap.points, (i, j))
    assert len(topo_region) >= 16
    assert len(metal_region) >= 16
    assert not (topo_region & metal_region)


def test_phase_diagram_resolution_guard():
    with pytest.raises(ParameterError):
        phase_diagram(A13, resolution=(8, 8))

"""Lindblad evolution: jump operators, decay laws, populations."""

import math
from fractions import Fraction

import numpy as np
import pytest

from qshsim.dynamics import (
    LindbladSpec,
    SubspaceBasis,
    _Dissipator,
    _lindblad_rhs_reference,
    corner_up_state,
    decay_scan,
    duration_from_us,
    edge_site_mask,
    embed_excited_hamiltonian,
    gamma_to_khz,
    lindblad_evolve,
    populations,
    subspace_jump_operators,
    validate_density_matrix,
)
from qshsim.errors import ParameterError
from qshsim.model import ModelParams, open_hamiltonian

A13 = Fraction(1, 3)


def test_subspace_dimension():
    assert SubspaceBasis(6, 6).dim == 73
    basis = SubspaceBasis(2, 3)
    idx = {basis.state_index(m, n, s) for n in range(3) for m in range(2) for s in (0, 1)}
    assert idx == set(range(1, basis.dim))


def test_time_conversions():
    assert math.isclose(duration_from_us(2.0), 12 * math.pi)
    assert math.isclose(gamma_to_khz(1.0 / 600.0), 5.0)
    assert math.isclose(gamma_to_khz(1.0 / 300.0), 10.0)


def test_jump_operator_examples():
    basis = SubspaceBasis(1, 1)
    ops = subspace_jump_operators(basis, LindbladSpec(gamma=1.0))
    photon, transmon, dephase = ops
    up = np.zeros(3)
    up[1] = 1.0
    down = np.zeros(3)
    down[2] = 1.0
    r = 1 / math.sqrt(2)
    assert np.allclose(photon @ up, [r, 0, 0])
    assert np.allclose(photon @ down, [-r, 0, 0])
    assert np.allclose(transmon @ up, [r, 0, 0])
    assert np.allclose(transmon @ down, [r, 0, 0])
    assert np.allclose(dephase @ up, down)  # within-cell spin flip
    assert np.allclose(dephase @ down, up)
    vac = np.array([1.0, 0, 0])
    assert np.allclose(dephase @ vac, -vac)

    zeros = subspace_jump_operators(basis, LindbladSpec(gamma=0.0))
    assert all(np.all(op == 0) for op in zeros)


def test_structured_dissipator_matches_reference():
    basis = SubspaceBasis(2, 2)
    h = embed_excited_hamiltonian(
        open_hamiltonian(ModelParams(alpha=A13, beta=0.1, nx=2, ny=2)), basis
    )
    rng = np.random.default_rng(3)
    x = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = x @ x.conj().T
    rho /= rho.trace()
    for flags in [(1, 1, 1), (1, 1, 0), (0, 0, 1), (1, 0, 1), (0, 1, 0), (0, 1, 1)]:
        spec = LindbladSpec(
            gamma=0.37,
            photon_loss=bool(flags[0]),
            transmon_loss=bool(flags[1]),
            dephasing=bool(flags[2]),
        )
        ops = subspace_jump_operators(basis, spec)
        ref = _lindblad_rhs_reference(rho, h, ops)
        fast = -1j * (h @ rho - rho @ h) + _Dissipator(basis, spec).apply(rho)
        assert np.max(np.abs(fast - ref)) < 1e-12


def test_single_cell_analytic_decay():
    basis = SubspaceBasis(1, 1)
    rho0 = np.zeros((3, 3), dtype=complex)
    rho0[1, 1] = 1.0
    g = 0.25
    ts, rhos = lindblad_evolve(
        rho0, np.zeros((2, 2)), LindbladSpec(gamma=g), basis, 8.0, dt=0.002
    )
    for t, rho in zip(ts, rhos):
        _, _, p3 = populations(rho, basis)
        assert abs(p3 - math.exp(-g * t)) < 1e-10


def test_closed_system_matches_schroedinger():
    basis = SubspaceBasis(6, 6)
    h = open_hamiltonian(ModelParams(alpha=A13, nx=6, ny=6))
    rho0 = corner_up_state(basis)
    t = 2.0
    ts, rhos = lindblad_evolve(
        rho0, h, LindbladSpec(gamma=0.0), basis, t, dt=0.001, sample_count=2
    )
    purity = np.trace(rhos[-1] @ rhos[-1]).real
    assert abs(purity - 1.0) < 1e-8

    vals, vecs = np.linalg.eigh(h.toarray())
    psi0 = np.zeros(72, dtype=complex)
    psi0[0] = 1.0
    psi = (vecs * np.exp(-1j * vals * t)) @ (vecs.conj().T @ psi0)
    rho_exact = np.zeros((73, 73), dtype=complex)
    rho_exact[1:, 1:] = np.outer(psi, psi.conj())
    assert np.max(np.abs(rhos[-1] - rho_exact)) < 1e-8


def test_populations_examples():
    basis = SubspaceBasis(6, 6)
    rho = corner_up_state(basis)
    p1, p2, p3 = populations(rho, basis)
    assert (p1, p2, p3) == (1.0, 0.0, 1.0)  # the corner is an edge site

    vac = np.zeros((73, 73), dtype=complex)
    vac[0, 0] = 1.0
    assert populations(vac, basis) == (0.0, 0.0, 0.0)

    mask = edge_site_mask(6, 6)
    assert mask.sum() == 20 and (~mask).sum() == 16


def test_population_consistency_site_sum_vs_vacuum():
    basis = SubspaceBasis(2, 2)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = x @ x.conj().T
    rho /= rho.trace()
    _, _, p3 = populations(rho, basis)
    assert abs(p3 - (1.0 - rho[0, 0].real)) < 1e-10


def test_validate_density_matrix():
    good = np.diag([0.5, 0.5, 0.0]).astype(complex)
    validate_density_matrix(good)
    with pytest.raises(ParameterError):
        validate_density_matrix(np.diag([0.9, 0.3, 0.0]).astype(complex))
    bad = good.copy()
    bad[0, 1] = 0.2
    with pytest.raises(ParameterError):
        validate_density_matrix(bad)


def test_decay_law_and_monotonicity_small_lattice():
    basis = SubspaceBasis(2, 2)
    h = open_hamiltonian(ModelParams(alpha=A13, nx=2, ny=2))
    rho0 = corner_up_state(basis)
    t = 5.0
    p3s = []
    for g in (0.0, 0.02, 0.05, 0.1):
        _, rhos = lindblad_evolve(
            rho0, h, LindbladSpec(gamma=g), basis, t, dt=0.002, sample_count=2
        )
        _, _, p3 = populations(rhos[-1], basis)
        assert abs(p3 - math.exp(-g * t)) < 1e-3 * max(math.exp(-g * t), 1e-9)
        p3s.append(p3)
    assert all(a >= b for a, b in zip(p3s, p3s[1:]))  # non-increasing in gamma


def test_dephasing_only_preserves_excitation():
    basis = SubspaceBasis(2, 2)
    h = open_hamiltonian(ModelParams(alpha=A13, nx=2, ny=2))
    spec = LindbladSpec(gamma=0.05, photon_loss=False, transmon_loss=False)
    _, rhos = lindblad_evolve(
        corner_up_state(basis), h, spec, basis, 5.0, dt=0.002, sample_count=4
    )
    for rho in rhos:
        _, _, p3 = populations(rho, basis)
        assert abs(p3 - 1.0) < 1e-8


def test_trace_and_positivity_along_trajectory():
    basis = SubspaceBasis(2, 2)
    h = open_hamiltonian(ModelParams(alpha=A13, beta=0.1, nx=2, ny=2))
    _, rhos = lindblad_evolve(
        corner_up_state(basis), h, LindbladSpec(gamma=0.08), basis, 8.0,
        dt=0.002, sample_count=9,
    )
    for rho in rhos:
        assert abs(np.trace(rho).real - 1.0) < 1e-8
        assert np.linalg.eigvalsh(rho).min() >= -1e-8


def test_step_guards():
    basis = SubspaceBasis(2, 2)
    h = open_hamiltonian(ModelParams(alpha=A13, nx=2, ny=2))
    with pytest.raises(ParameterError):
        lindblad_evolve(
            corner_up_state(basis), h, LindbladSpec(gamma=0.0), basis, 1.0, dt=0.5
        )
    with pytest.raises(ParameterError):
        LindbladSpec(gamma=-0.1)
    with pytest.raises(ParameterError):
        decay_scan([-1.0])


def test_step_halving_then_failure():
    # a step at the stability bound accumulates enough positivity defect over
    # a long run that even the automatic one-time halving cannot save it
    from qshsim.errors import StepSizeError

    basis = SubspaceBasis(2, 2)
    h = open_hamiltonian(ModelParams(alpha=A13, nx=2, ny=2))
    bound = 0.05 / np.linalg.norm(h.toarray(), 2)
    with pytest.raises(StepSizeError, match="after halving"):
        lindblad_evolve(
            corner_up_state(basis),
            h,
            LindbladSpec(gamma=0.0),
            basis,
            30.0,
            dt=bound * 0.999,
            sample_count=3,
        )


def test_decay_scan_lattice_guard():
    with pytest.raises(ParameterError):
        decay_scan([0.0], params=ModelParams(alpha=A13, nx=9, ny=9))


def test_lab_frame_cross_check():
    """Bare-operator master equation in the lab frame vs the reduced model.

    The oracle integrates the driven plaquette with bare jump operators
    (photon loss, qubit loss, qubit dephasing) in the exact interaction
    picture of the free Hamiltonian; the reduced rotating-frame model with
    dressed jump operators must reproduce the site populations up to
    rotating-wave and secular corrections.
    """
    from qshsim.circuit import (
        DEVICE_CELLS,
        _bond_operator,
        dressed_transform,
        free_hamiltonian,
        plaquette_plans,
    )

    cells = DEVICE_CELLS
    n, dim = 4, 9
    beta, gamma, t_final = 0.1, 0.05, 0.5
    plans = plaquette_plans(A13, beta)

    h0 = free_hamiltonian(cells)
    e0, v0 = np.linalg.eigh(h0)
    bonds = [_bond_operator(n, p.bond) for p in plans]
    tone_data = [
        [(t.amplitude, t.freq, t.sign * t.phase) for t in p.tones] for p in plans
    ]
    jumps = []
    for i in range(n):
        pg, qe = 1 + 2 * i, 2 + 2 * i
        a = np.zeros((dim, dim))
        a[0, pg] = 1.0
        sm = np.zeros((dim, dim))
        sm[0, qe] = 1.0
        sz = -np.eye(dim)
        sz[qe, qe] = 1.0
        jumps.extend([a, sm, sz])
    jumps = [math.sqrt(gamma) * j for j in jumps]

    def rot(t):
        return (v0 * np.exp(1j * e0 * t)) @ v0.conj().T

    def rhs(t, rho):
        r = rot(t)
        rd = r.conj().T
        h_i = np.zeros((dim, dim), dtype=complex)
        for op, tones in zip(bonds, tone_data):
            j = sum(a * math.cos(w * t + ph) for a, w, ph in tones)
            h_i += j * (r @ op @ rd)
        out = -1j * (h_i @ rho - rho @ h_i)
        for g_op in jumps:
            gi = r @ g_op @ rd
            gid = gi.conj().T
            out += gi @ rho @ gid - 0.5 * (gid @ gi @ rho + rho @ gid @ gi)
        return out

    w = dressed_transform(n)
    rho_d0 = np.zeros((dim, dim), dtype=complex)
    rho_d0[1, 1] = 1.0
    rho = w @ rho_d0 @ w.T
    fmax = max(t.freq for p in plans for t in p.tones)
    dt = min(0.05 / (2 * max(c.g for c in cells)), (2 * math.pi / fmax) / 60.0)
    steps = int(math.ceil(t_final / dt))
    dt = t_final / steps
    for k in range(steps):
        t = k * dt
        k1 = rhs(t, rho)
        k2 = rhs(t + dt / 2, rho + dt / 2 * k1)
        k3 = rhs(t + dt / 2, rho + dt / 2 * k2)
        k4 = rhs(t + dt, rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def site_pops(r):
        d = np.diag(r).real
        return np.array([d[1 + 2 * i] + d[2 + 2 * i] for i in range(n)])

    pops_lab = site_pops(rho)

    basis = SubspaceBasis(2, 2)
    params = ModelParams(alpha=A13, beta=beta, nx=2, ny=2)
    _, rhos = lindblad_evolve(
        rho_d0,
        open_hamiltonian(params),
        LindbladSpec(gamma=gamma),
        basis,
        t_final,
        dt=0.001,
        sample_count=2,
    )
    pops_rot = site_pops(rhos[-1])

    assert abs(pops_lab.sum() - pops_rot.sum()) < 1e-6  # both follow e^{-gamma t}
    assert np.max(np.abs(pops_lab - pops_rot)) < 0.02

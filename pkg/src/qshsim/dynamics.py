"""Lindblad dynamics of the edge-detection protocol in the dressed subspace.

State space: the global vacuum plus one dressed excitation (up or down) on
any site, dim = 1 + 2*nx*ny.  Site ordering matches the real-space model, so
the open-lattice Hamiltonian acts directly as the excited block.

Per site three jump channels act at a common rate gamma:

* photon loss      a|up> = +|0g>/sqrt(2), a|down> = -|0g>/sqrt(2);
* qubit loss       sigma^-|up> = sigma^-|down> = +|0g>/sqrt(2);
* qubit dephasing  sigma^z restricted to the subspace: -1 on the vacuum and
  on other sites' excitations, and a spin flip |up> <-> |down> on the site.

Because every dressed excitation carries mean photon and qubit occupation
1/2 and dephasing conserves excitation, the total excited population decays
exactly as exp(-gamma*t); the integrator is tested against that law.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError, StepSizeError
from .model import HermitianOperator, ModelParams, open_hamiltonian

#: t0/(2*pi) of the reference device in MHz (for physical-time conversion)
T0_MHZ = 3.0

TRACE_TOL = 1e-8
HERM_TOL = 1e-10
POSITIVITY_TOL = -1e-8


def duration_from_us(t_us: float, t0_mhz: float = T0_MHZ) -> float:
    """Convert microseconds to dimensionless time t0*T (t0 = 2*pi * t0_mhz)."""
    return 2.0 * math.pi * t0_mhz * t_us


def gamma_to_khz(gamma_t0: float, t0_mhz: float = T0_MHZ) -> float:
    """Decay rate in units of t0 -> gamma/(2*pi) in kHz."""
    return gamma_t0 * t0_mhz * 1e3


@dataclass(frozen=True)
class SubspaceBasis:
    """Vacuum + one dressed excitation per site and spin; dim = 1 + 2*nx*ny."""

    nx: int
    ny: int

    @property
    def dim(self) -> int:
        return 1 + 2 * self.nx * self.ny

    def state_index(self, m: int, n: int, spin: int) -> int:
        """Index of |spin>_(m,n); (m, n) are 0-based, spin 0=up, 1=down."""
        if not (0 <= m < self.nx and 0 <= n < self.ny):
            raise ParameterError(f"site ({m},{n}) outside {self.nx}x{self.ny}")
        return 1 + 2 * (n * self.nx + m) + spin

    def labels(self) -> list:
        out = ["vacuum"]
        for n in range(self.ny):
            for m in range(self.nx):
                for spin in ("up", "down"):
                    out.append((m + 1, n + 1, spin))  # 1-based export convention
        return out


@dataclass(frozen=True)
class LindbladSpec:
    """Common rate and channel switches for the three decoherence channels."""

    gamma: float
    photon_loss: bool = True
    transmon_loss: bool = True
    dephasing: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterError("decay rate gamma must be nonnegative")


def subspace_jump_operators(
    basis: SubspaceBasis, spec: LindbladSpec
) -> List[np.ndarray]:
    """Explicit jump operators (already scaled by sqrt(gamma)) on the subspace."""
    dim = basis.dim
    ops: List[np.ndarray] = []
    root = math.sqrt(spec.gamma)
    r = 1.0 / math.sqrt(2.0)
    for n in range(basis.ny):
        for m in range(basis.nx):
            iu = basis.state_index(m, n, 0)
            idn = basis.state_index(m, n, 1)
            if spec.photon_loss:
                op = np.zeros((dim, dim))
                op[0, iu] = r
                op[0, idn] = -r
                ops.append(root * op)
            if spec.transmon_loss:
                op = np.zeros((dim, dim))
                op[0, iu] = r
                op[0, idn] = r
                ops.append(root * op)
            if spec.dephasing:
                op = -np.eye(dim)
                op[iu, iu] = 0.0
                op[idn, idn] = 0.0
                op[iu, idn] = 1.0
                op[idn, iu] = 1.0
                ops.append(root * op)
    return ops


def embed_excited_hamiltonian(h, basis: SubspaceBasis) -> np.ndarray:
    """Excited-block Hamiltonian -> full subspace matrix (vacuum row/col zero)."""
    if isinstance(h, HermitianOperator):
        h = h.toarray()
    h = np.asarray(h)
    nexc = basis.dim - 1
    if h.shape == (basis.dim, basis.dim):
        return h.astype(complex)
    if h.shape != (nexc, nexc):
        raise ParameterError(
            f"Hamiltonian shape {h.shape} matches neither the excited block "
            f"({nexc}) nor the full subspace ({basis.dim})"
        )
    full = np.zeros((basis.dim, basis.dim), dtype=complex)
    full[1:, 1:] = h
    return full


def validate_density_matrix(rho: np.ndarray, check_positivity: bool = True):
    """Enforce Hermiticity / unit trace / positivity tolerances."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > HERM_TOL:
        raise ParameterError(f"density matrix not Hermitian: defect {herm:.2e}")
    tr = float(rho.trace().real)
    if abs(tr - 1.0) > TRACE_TOL:
        raise ParameterError(f"density matrix trace {tr} deviates from 1")
    if check_positivity:
        evmin = float(np.linalg.eigvalsh(rho).min())
        if evmin < POSITIVITY_TOL:
            raise ParameterError(f"density matrix has eigenvalue {evmin:.2e}")


class _Dissipator:
    """Structured application of the three channels; matches the literal operators.

    Loss channels: both loss types together give sum Gamma^dag Gamma = N (the
    excitation projector), and all quantum jumps land on the vacuum, so their
    contribution is gamma*(tr(N rho)|G><G| - {N, rho}/2) when both are active.
    Dephasing operators are unitary; their action is expanded with rank-one
    site projectors (columns of V below).
    """

    def __init__(self, basis: SubspaceBasis, spec: LindbladSpec):
        self.basis = basis
        self.spec = spec
        dim = basis.dim
        n_sites = basis.nx * basis.ny
        self.n_exc = np.zeros(dim)
        self.n_exc[1:] = 1.0
        # |+_r> columns: (|up>_r + |down>_r)/sqrt(2)
        v = np.zeros((dim, n_sites))
        for n in range(basis.ny):
            for m in range(basis.nx):
                r_idx = n * basis.nx + m
                v[basis.state_index(m, n, 0), r_idx] = 1.0 / math.sqrt(2.0)
                v[basis.state_index(m, n, 1), r_idx] = 1.0 / math.sqrt(2.0)
        self.v = v
        self.sum_y = 2.0 * (v @ v.T)  # sum_r Y_r, Y_r = 2|+_r><+_r|
        self.n_sites = n_sites
        # per-site loss structure (needed when only one loss channel is on)
        self.single_loss = None
        if spec.photon_loss != spec.transmon_loss:
            sgn = -1.0 if spec.photon_loss else 1.0
            w = np.zeros((dim, n_sites))
            for n in range(basis.ny):
                for m in range(basis.nx):
                    r_idx = n * basis.nx + m
                    w[basis.state_index(m, n, 0), r_idx] = 1.0 / math.sqrt(2.0)
                    w[basis.state_index(m, n, 1), r_idx] = sgn / math.sqrt(2.0)
            self.single_loss = w

    def apply(self, rho: np.ndarray) -> np.ndarray:
        g = self.spec.gamma
        if g == 0.0:
            return np.zeros_like(rho)
        out = np.zeros_like(rho)
        if self.spec.photon_loss and self.spec.transmon_loss:
            pop = float(np.real(np.sum(self.n_exc * np.diag(rho))))
            out[0, 0] += g * pop
            out -= 0.5 * g * (self.n_exc[:, None] * rho + rho * self.n_exc[None, :])
        elif self.single_loss is not None:
            w = self.single_loss
            # Gamma_r = |G><w_r|: jumps land on vacuum, Gamma^dag Gamma = |w_r><w_r|
            m = w.conj().T @ rho @ w
            out[0, 0] += g * float(np.real(np.trace(m)))
            p = w @ (w.conj().T @ rho)
            out -= 0.5 * g * (p + p.conj().T)
        if self.spec.dephasing:
            sy = self.sum_y
            m = self.v.T @ rho @ self.v  # Hermitian, so diag(m) is real
            out += g * (
                -(sy @ rho) - (rho @ sy) + 4.0 * (self.v * np.diag(m).real) @ self.v.T
            )
        return out


def _lindblad_rhs_reference(rho, h_full, jump_ops):
    """Direct textbook right-hand side; oracle for the structured path."""
    out = -1j * (h_full @ rho - rho @ h_full)
    for op in jump_ops:
        od = op.conj().T
        out += op @ rho @ od - 0.5 * (od @ op @ rho + rho @ od @ op)
    return out


def lindblad_evolve(
    rho0: np.ndarray,
    h_eff,
    spec: LindbladSpec,
    basis: SubspaceBasis,
    t_final: float,
    dt: float = 0.0025,
    sample_count: int = 20,
    _halved: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 integration of the master equation.

    Returns ``(times, rhos)`` with ``sample_count`` snapshots including t=0 and
    t_final.  Density-matrix invariants are re-validated at every snapshot; on
    violation the step is halved once and the run restarted, then the failure
    is raised.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    validate_density_matrix(rho0)
    h_full = embed_excited_hamiltonian(h_eff, basis)
    h_norm = float(np.linalg.norm(h_full, 2))
    bound = 0.05 / max(h_norm, spec.gamma, 1e-12)
    if dt > bound:
        raise ParameterError(
            f"dt={dt} exceeds stability bound {bound:.4f} = 0.05/max(|H|, gamma)"
        )
    diss = _Dissipator(basis, spec)

    def rhs(rho):
        return -1j * (h_full @ rho - rho @ h_full) + diss.apply(rho)

    steps = max(1, int(math.ceil(t_final / dt)))
    step = t_final / steps if t_final > 0 else 0.0
    sample_at = np.unique(
        np.round(np.linspace(0, steps, max(2, sample_count))).astype(int)
    )
    times, rhos = [], []
    rho = rho0.copy()
    try:
        if 0 in sample_at:
            times.append(0.0)
            rhos.append(rho.copy())
        for k in range(steps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * step * k1)
            k3 = rhs(rho + 0.5 * step * k2)
            k4 = rhs(rho + step * k3)
            rho = rho + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (k + 1) in sample_at:
                validate_density_matrix(rho)
                times.append((k + 1) * step)
                rhos.append(rho.copy())
    except ParameterError as exc:
        if _halved:
            raise StepSizeError(
                f"integration inaccurate even after halving dt: {exc}"
            ) from exc
        return lindblad_evolve(
            rho0, h_eff, spec, basis, t_final, dt / 2.0, sample_count, _halved=True
        )
    return np.array(times), np.array(rhos)


def edge_site_mask(nx: int, ny: int) -> np.ndarray:
    """Boolean (nx, ny) perimeter mask (ring depth 1)."""
    mask = np.zeros((nx, ny), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def populations(rho: np.ndarray, basis: SubspaceBasis) -> Tuple[float, float, float]:
    """(edge, inner, total) excited populations; total also equals 1 - <G|rho|G>."""
    diag = np.diag(rho).real
    mask = edge_site_mask(basis.nx, basis.ny)
    p_edge = p_inner = 0.0
    for n in range(basis.ny):
        for m in range(basis.nx):
            w = (
                diag[basis.state_index(m, n, 0)]
                + diag[basis.state_index(m, n, 1)]
            )
            if mask[m, n]:
                p_edge += w
            else:
                p_inner += w
    return float(p_edge), float(p_inner), float(p_edge + p_inner)


@dataclass
class DecayScanRow:
    gamma_t0: float
    gamma_khz: float
    p1: float
    p2: float
    p3: float


def corner_up_state(basis: SubspaceBasis) -> np.ndarray:
    """Pure |up> excitation on site (1,1) (the lattice corner)."""
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    i = basis.state_index(0, 0, 0)
    rho[i, i] = 1.0
    return rho


def decay_scan(
    gammas: Sequence[float],
    params: Optional[ModelParams] = None,
    t_us: float = 2.0,
    dt: float = 0.0025,
    threads: int = 1,
) -> List[DecayScanRow]:
    """Final edge/inner/total populations after ``t_us`` for each decay rate.

    Protocol: 6x6 lattice (flux 1/3, no spin mixing or staggering unless
    overridden), initial |up> excitation at the (1,1) corner site.
    """
    if any(g < 0 for g in gammas):
        raise ParameterError("decay rates must be nonnegative")
    if params is None:
        params = ModelParams(alpha="1/3", nx=6, ny=6)
    if params.nx * params.ny > 64:
        raise ParameterError("master-equation lattice capped at 8x8 sites")
    basis = SubspaceBasis(params.nx, params.ny)
    h_exc = open_hamiltonian(params)
    t_final = duration_from_us(t_us)
    rho0 = corner_up_state(basis)

    def run(gamma):
        spec = LindbladSpec(gamma=float(gamma))
        _, rhos = lindblad_evolve(
            rho0, h_exc, spec, basis, t_final, dt=dt, sample_count=2
        )
        p1, p2, p3 = populations(rhos[-1], basis)
        return DecayScanRow(
            gamma_t0=float(gamma),
            gamma_khz=gamma_to_khz(float(gamma)),
            p1=p1,
            p2=p2,
            p3=p3,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, gammas))
    return [run(g) for g in gammas]

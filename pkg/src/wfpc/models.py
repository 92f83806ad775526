"""Model and state builders for a two-manifold system coupled to bosonic modes.

The system space splits into a ground manifold {|g_i>} and an excited manifold
{|e_i>}; the environment is a product of truncated harmonic modes.  Builders
return ``SystemModel`` (joint Hamiltonian, excited projector, dipole) and
``CorrelatedState`` (joint state with marginals rho, tau and correlation
matrix chi = R - rho (x) tau).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DensityMatrix,
    SpaceLayout,
    commutator,
    dag,
    EigenExp,
    kron,
    kron_all,
    max_norm,
    partial_trace,
    validate_density,
)


class ConstructionFailed(RuntimeError):
    pass


@dataclass
class SystemModel:
    """Joint bare Hamiltonian plus the system-space control operators.

    ``h0`` lives on the joint space, ``proj_excited`` and ``dipole`` on the
    system space.  The dipole is Hermitian with support only on the
    ground-excited blocks, so the control field drives g <-> e transitions
    and nothing else.
    """

    layout: SpaceLayout
    h0: np.ndarray
    proj_excited: np.ndarray
    dipole: np.ndarray
    coupling: float

    @property
    def proj_excited_joint(self) -> np.ndarray:
        return kron(self.proj_excited, np.eye(self.layout.env_dim))

    def dipole_raising(self) -> np.ndarray:
        """System-space raising part of the dipole: the e<-g block of mu."""
        g = self.layout.system_ground_dim
        out = np.zeros_like(self.dipole)
        out[g:, :g] = self.dipole[g:, :g]
        return out


@dataclass
class CorrelatedState:
    """Joint state R with marginals and correlation matrix chi = R - rho(x)tau."""

    joint: DensityMatrix
    rho: np.ndarray
    tau: np.ndarray
    chi: np.ndarray

    @property
    def layout(self) -> SpaceLayout:
        return self.joint.layout

    @property
    def mat(self) -> np.ndarray:
        return self.joint.mat


@dataclass
class BlockReport:
    """Max-norms of the g/e sectors of rho and chi."""

    norm_ge_rho: float
    norm_ge_chi: float
    norm_gg_chi: float
    norm_ee_chi: float


def number_op(d: int) -> np.ndarray:
    return np.diag(np.arange(d)).astype(complex)


def ladder_lower(d: int) -> np.ndarray:
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = np.sqrt(n)
    return a


def quadrature_x(d: int) -> np.ndarray:
    a = ladder_lower(d)
    return (a + dag(a)) / np.sqrt(2)


def embed_system(op_sys: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    return kron(op_sys, np.eye(layout.env_dim), max_dim=layout.max_dim)


def env_mode_operator(layout: SpaceLayout, op: np.ndarray, mode: int) -> np.ndarray:
    """Environment-space operator acting on one mode, identity elsewhere."""
    mats = [np.eye(d, dtype=complex) for d in layout.env_dims]
    mats[mode] = op
    return kron_all(mats, max_dim=layout.max_dim)


def make_model(
    layout: SpaceLayout, h0: np.ndarray, dipole: np.ndarray, coupling: float
) -> SystemModel:
    """Assemble and validate a SystemModel from explicit operators."""
    if h0.shape != (layout.dim, layout.dim):
        raise ValueError(f"h0 shape {h0.shape} does not match joint dim {layout.dim}")
    if max_norm(h0 - dag(h0)) > 1e-10:
        raise ValueError("h0 must be Hermitian")
    ds, g = layout.system_dim, layout.system_ground_dim
    if dipole.shape != (ds, ds):
        raise ValueError("dipole must act on the system space")
    if max_norm(dipole - dag(dipole)) > 1e-10:
        raise ValueError("dipole must be Hermitian")
    if max_norm(dipole[:g, :g]) > 1e-12 or max_norm(dipole[g:, g:]) > 1e-12:
        raise ValueError("dipole must vanish on the g-g and e-e blocks")
    return SystemModel(
        layout=layout,
        h0=np.asarray(h0, dtype=complex),
        proj_excited=layout.proj_excited(),
        dipole=np.asarray(dipole, dtype=complex),
        coupling=float(coupling),
    )


def _oscillator_h0(
    omega_s: float,
    omega_env,
    g: float,
    layout: SpaceLayout,
    sys_coupling_op: np.ndarray,
) -> np.ndarray:
    omega_env = list(omega_env)
    if len(omega_env) != len(layout.env_dims):
        raise ValueError("one frequency per environment mode required")
    ds = layout.system_dim
    ident_env = np.eye(layout.env_dim)
    h_sys = omega_s * (number_op(ds) + 0.5 * np.eye(ds))
    h = kron(h_sys, ident_env, max_dim=layout.max_dim)
    x_sum = np.zeros((layout.env_dim, layout.env_dim), dtype=complex)
    for k, (wk, dk) in enumerate(zip(omega_env, layout.env_dims)):
        h_mode = wk * (number_op(dk) + 0.5 * np.eye(dk))
        h += kron(np.eye(ds), env_mode_operator(layout, h_mode, k), max_dim=layout.max_dim)
        x_sum += env_mode_operator(layout, quadrature_x(dk), k)
    h += g * kron(sys_coupling_op, x_sum, max_dim=layout.max_dim)
    return h


def _oscillator_dipole(layout: SpaceLayout) -> np.ndarray:
    # g-e block of the system quadrature; for the oscillator split
    # (ground = lowest level) only the 0<->1 element survives.
    ds, g = layout.system_dim, layout.system_ground_dim
    x = quadrature_x(ds)
    mu = np.zeros_like(x)
    mu[:g, g:] = x[:g, g:]
    mu[g:, :g] = x[g:, :g]
    return mu


def _require_oscillator_layout(layout: SpaceLayout):
    if layout.system_ground_dim != 1:
        raise ValueError(
            "oscillator builders split the system as ground = lowest level only"
        )
    if not layout.env_dims:
        raise ValueError("at least one environment mode required")


def build_h0_commuting(
    omega_s: float, omega_env, g: float, layout: SpaceLayout
) -> SystemModel:
    """Oscillator system + modes with number-operator coupling g n_S sum_k x_k.

    The coupling is diagonal in the system basis, so the free evolution never
    crosses the ground/excited partition: [H0, P(x)I] = 0.
    """
    _require_oscillator_layout(layout)
    h0 = _oscillator_h0(omega_s, omega_env, g, layout, number_op(layout.system_dim))
    return make_model(layout, h0, _oscillator_dipole(layout), g)


def build_h0_noncommuting(
    omega_s: float, omega_env, g: float, layout: SpaceLayout
) -> SystemModel:
    """Same structure with quadrature coupling g x_S sum_k x_k.

    x_S connects adjacent system levels, so for g != 0 the free evolution
    pumps population across the partition: [H0, P(x)I] != 0.
    """
    _require_oscillator_layout(layout)
    h0 = _oscillator_h0(omega_s, omega_env, g, layout, quadrature_x(layout.system_dim))
    return make_model(layout, h0, _oscillator_dipole(layout), g)


def custom_commuting_model(
    layout: SpaceLayout,
    sys_energies,
    coupling_weights,
    omega_env,
    g: float,
    dipole: np.ndarray,
) -> SystemModel:
    """General multi-level model with diagonal system part (Condition-2 safe).

    ``sys_energies`` and ``coupling_weights`` are per-system-level diagonals;
    the joint Hamiltonian is diag(E) + sum_k w_k (n_k + 1/2)
    + g diag(c) (x) sum_k x_k, which commutes with the excited projector.
    """
    sys_energies = np.asarray(sys_energies, dtype=float)
    coupling_weights = np.asarray(coupling_weights, dtype=float)
    ds = layout.system_dim
    if sys_energies.shape != (ds,) or coupling_weights.shape != (ds,):
        raise ValueError("need one energy and one coupling weight per system level")
    ident_env = np.eye(layout.env_dim)
    h = kron(np.diag(sys_energies).astype(complex), ident_env, max_dim=layout.max_dim)
    x_sum = np.zeros((layout.env_dim, layout.env_dim), dtype=complex)
    for k, (wk, dk) in enumerate(zip(omega_env, layout.env_dims)):
        h_mode = wk * (number_op(dk) + 0.5 * np.eye(dk))
        h += kron(np.eye(ds), env_mode_operator(layout, h_mode, k), max_dim=layout.max_dim)
        x_sum += env_mode_operator(layout, quadrature_x(dk), k)
    h += g * kron(np.diag(coupling_weights).astype(complex), x_sum, max_dim=layout.max_dim)
    return make_model(layout, h, dipole, g)


def split_correlations(joint: DensityMatrix) -> CorrelatedState:
    """Decompose R into rho (x) tau + chi; both partial traces of chi vanish."""
    layout = joint.layout
    dims = layout.dims
    m = joint.mat
    rho = partial_trace(m, dims, keep=[0])
    tau = partial_trace(m, dims, keep=range(1, len(dims)))
    chi = m - kron(rho, tau, max_dim=layout.max_dim)
    return CorrelatedState(joint=joint, rho=rho, tau=tau, chi=chi)


def as_state(mat: np.ndarray, layout: SpaceLayout) -> CorrelatedState:
    """Validate a raw matrix and split it into marginals + correlations."""
    return split_correlations(validate_density(mat, layout))


def gibbs_state(model: SystemModel, beta: float) -> CorrelatedState:
    """Thermal joint state exp(-beta H0)/Z; commutes with H0 by construction.

    Eigenvalues are shifted by the ground energy before exponentiation, so the
    construction is overflow-safe for any finite beta >= 0.
    """
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and nonnegative, got {beta}")
    eig = EigenExp(model.h0)
    shifted = eig.eigvals - eig.eigvals.min()
    weights = np.exp(-beta * shifted)
    weights /= weights.sum()
    mat = (eig.eigvecs * weights) @ dag(eig.eigvecs)
    return as_state(mat, model.layout)


def _chi_sectors(chi: np.ndarray, layout: SpaceLayout):
    ds, de = layout.system_dim, layout.env_dim
    g = layout.system_ground_dim
    t = chi.reshape(ds, de, ds, de)
    return (
        max_norm(t[:g, :, g:, :]),
        max_norm(t[:g, :, :g, :]),
        max_norm(t[g:, :, g:, :]),
    )


def block_report(state: CorrelatedState) -> BlockReport:
    """Max-norms of the g-e sector of rho and of chi's sectors."""
    g = state.layout.system_ground_dim
    norm_ge_rho = max_norm(state.rho[:g, g:])
    ge, gg, ee = _chi_sectors(state.chi, state.layout)
    return BlockReport(
        norm_ge_rho=norm_ge_rho, norm_ge_chi=ge, norm_gg_chi=gg, norm_ee_chi=ee
    )


def decaying_env_density(layout: SpaceLayout, rate: float = 0.8) -> np.ndarray:
    """Diagonal environment state with exponentially decaying mode populations."""
    mats = []
    for d in layout.env_dims:
        w = np.exp(-rate * np.arange(d))
        mats.append(np.diag(w / w.sum()).astype(complex))
    return kron_all(mats, max_dim=layout.max_dim)


def thermal_env_density(layout: SpaceLayout, omega_env, beta: float) -> np.ndarray:
    """Product of per-mode thermal states at inverse temperature beta."""
    mats = []
    for wk, d in zip(omega_env, layout.env_dims):
        w = np.exp(-beta * wk * np.arange(d))
        mats.append(np.diag(w / w.sum()).astype(complex))
    return kron_all(mats, max_dim=layout.max_dim)


def coherent_product_state(
    layout: SpaceLayout, theta: float, tau: np.ndarray | None = None
) -> CorrelatedState:
    """Product state (cos t |g0> + sin t |e0>) (x) tau; chi = 0."""
    ds = layout.system_dim
    psi = np.zeros(ds, dtype=complex)
    psi[0] = np.cos(theta)
    psi[layout.system_ground_dim] = np.sin(theta)
    rho = np.outer(psi, psi.conj())
    if tau is None:
        tau = decaying_env_density(layout)
    return as_state(kron(rho, tau, max_dim=layout.max_dim), layout)


def classical_correlated_state(
    layout: SpaceLayout,
    tau_g: np.ndarray,
    tau_e: np.ndarray,
    p_ground: float = 0.5,
) -> CorrelatedState:
    """Mixture p |g0><g0| (x) tau_g + (1-p) |e0><e0| (x) tau_e.

    Correlated (chi != 0 when tau_g != tau_e) but with no g-e coherence
    anywhere, so it is invisible to phase-control witnesses.
    """
    ds = layout.system_dim
    gg = np.zeros((ds, ds), dtype=complex)
    gg[0, 0] = 1.0
    ee = np.zeros((ds, ds), dtype=complex)
    e0 = layout.system_ground_dim
    ee[e0, e0] = 1.0
    mat = p_ground * kron(gg, tau_g) + (1 - p_ground) * kron(ee, tau_e)
    return as_state(mat, layout)


def diag_excited_state(
    layout: SpaceLayout,
    sys_weights=None,
    env_density: np.ndarray | None = None,
) -> CorrelatedState:
    """Diagonal state with all system population in the excited manifold."""
    ds, g = layout.system_dim, layout.system_ground_dim
    if sys_weights is None:
        sys_weights = np.ones(ds - g)
    sys_weights = np.asarray(sys_weights, dtype=float)
    if sys_weights.shape != (ds - g,) or sys_weights.min() < 0:
        raise ValueError("need one nonnegative weight per excited level")
    rho = np.zeros((ds, ds), dtype=complex)
    rho[g:, g:] = np.diag(sys_weights / sys_weights.sum())
    if env_density is None:
        env_density = decaying_env_density(layout)
    return as_state(kron(rho, env_density, max_dim=layout.max_dim), layout)


def _correlated_pure_state(layout: SpaceLayout) -> np.ndarray:
    # (|g0, vac> + |e0, one photon in mode 0>)/sqrt(2): its system marginal is
    # diagonal (orthogonal env branches) while the g-e coherence sits in chi.
    d = layout.dim
    de = layout.env_dim
    psi = np.zeros(d, dtype=complex)
    psi[0] = 1.0 / np.sqrt(2)
    stride = 1
    for dk in layout.env_dims[1:]:
        stride *= dk
    one_photon = stride * 1  # index of |100...> within the env factor
    psi[layout.system_ground_dim * de + one_photon] = 1.0 / np.sqrt(2)
    return np.outer(psi, psi.conj())


def build_witness_state(
    layout: SpaceLayout,
    offdiag_in_rho: bool,
    offdiag_in_chi: bool,
    seed: int = 0,
    max_attempts: int = 1000,
) -> CorrelatedState:
    """Construct a valid joint state with the requested g-e block placement.

    The four placements mix three ingredients: a coherent-system product state
    (feeds rho's g-e block), a correlated pure state with orthogonal
    environment branches (feeds chi's g-e block only), and block-diagonal
    classically correlated noise.  Mixture weights are jittered from ``seed``
    until the block report matches the request.
    """
    if layout.env_dims[0] < 2:
        raise ValueError("witness states need at least 2 levels in the first mode")
    rng = np.random.default_rng(seed)
    tau_a = decaying_env_density(layout, rate=0.8)
    tau_b = decaying_env_density(layout, rate=1.6)
    noise = classical_correlated_state(layout, tau_a, tau_b).mat
    psi_corr = _correlated_pure_state(layout)

    for _ in range(max_attempts):
        theta = np.pi / 4 + 0.2 * rng.standard_normal()
        q = float(np.clip(0.5 + 0.1 * rng.standard_normal(), 0.2, 0.8))
        if not offdiag_in_rho and not offdiag_in_chi:
            mat = noise
        elif not offdiag_in_rho and offdiag_in_chi:
            mat = q * psi_corr + (1 - q) * noise
        elif offdiag_in_rho and not offdiag_in_chi:
            mat = coherent_product_state(layout, theta, tau_a).mat
        else:
            q = min(q, 0.55)
            q2 = float(np.clip(0.35 + 0.05 * rng.standard_normal(), 0.1, 0.4))
            coh = coherent_product_state(layout, theta, tau_a).mat
            mat = q * coh + q2 * psi_corr + (1 - q - q2) * noise
        state = as_state(mat, layout)
        rep = block_report(state)
        rho_ok = (rep.norm_ge_rho > 1e-3) == offdiag_in_rho
        chi_ok = (rep.norm_ge_chi > 1e-3) == offdiag_in_chi
        if not offdiag_in_rho:
            rho_ok = rho_ok and rep.norm_ge_rho <= 1e-12
        if not offdiag_in_chi:
            chi_ok = chi_ok and rep.norm_ge_chi <= 1e-12
        if rho_ok and chi_ok:
            return state
    raise ConstructionFailed(
        f"could not realize placement rho={offdiag_in_rho} chi={offdiag_in_chi}"
    )


def condition2_violation(model: SystemModel) -> float:
    """Max-norm of [P (x) I, H0]; zero means free evolution preserves p."""
    return max_norm(commutator(model.proj_excited_joint, model.h0))


def condition3_violation(model: SystemModel, state: CorrelatedState) -> float:
    """Max-norm of [H0, R]; zero means the state is free-evolution invariant."""
    return max_norm(commutator(model.h0, state.mat))

"""Dense complex linear algebra on tensor-product Hilbert spaces.

Everything operates on plain ``numpy`` complex arrays.  Subsystem ordering is
fixed as system (x) env_mode_1 (x) env_mode_2 (x) ... throughout the package;
``SpaceLayout`` records the factor dimensions and the ground/excited split of
the system space.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from math import prod

import numpy as np

# Default numerical tolerances.  Comfortably above double-precision noise for
# joint dimensions up to a few hundred; override per call where needed.
HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-10
MAX_JOINT_DIM = 4096


class DimensionMismatchError(ValueError):
    pass


class MemoryCapError(ValueError):
    pass


class DensityValidationError(ValueError):
    """Base for density-matrix validation failures; carries the violation size."""

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = float(violation)


class NonHermitianError(DensityValidationError):
    pass


class TraceNotOneError(DensityValidationError):
    pass


class NotPSDError(DensityValidationError):
    pass


@dataclass(frozen=True)
class SpaceLayout:
    """Factor dimensions of the joint space and the g/e split of the system.

    The system space has ``system_ground_dim`` ground levels followed by
    ``system_excited_dim`` excited levels; each entry of ``env_dims`` is the
    truncation dimension of one environment mode.
    """

    system_ground_dim: int
    system_excited_dim: int
    env_dims: tuple[int, ...]
    max_dim: int = MAX_JOINT_DIM

    def __post_init__(self):
        object.__setattr__(self, "env_dims", tuple(int(d) for d in self.env_dims))
        if self.system_ground_dim < 1 or self.system_excited_dim < 1:
            raise ValueError("system manifolds need at least one level each")
        if any(d < 1 for d in self.env_dims):
            raise ValueError("environment mode dimensions must be positive")
        if self.dim > self.max_dim:
            raise MemoryCapError(
                f"joint dimension {self.dim} exceeds cap {self.max_dim}"
            )

    @property
    def system_dim(self) -> int:
        return self.system_ground_dim + self.system_excited_dim

    @property
    def env_dim(self) -> int:
        return prod(self.env_dims) if self.env_dims else 1

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.system_dim,) + self.env_dims

    @property
    def dim(self) -> int:
        return self.system_dim * self.env_dim

    def proj_excited(self) -> np.ndarray:
        """System-space projector onto the excited manifold."""
        p = np.zeros((self.system_dim, self.system_dim), dtype=complex)
        for i in range(self.system_ground_dim, self.system_dim):
            p[i, i] = 1.0
        return p

    def ground_indices(self) -> np.ndarray:
        return np.arange(self.system_ground_dim)

    def excited_indices(self) -> np.ndarray:
        return np.arange(self.system_ground_dim, self.system_dim)


@dataclass
class DensityMatrix:
    """A validated quantum state on the joint space described by ``layout``."""

    mat: np.ndarray
    layout: SpaceLayout


def dag(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def max_norm(m: np.ndarray) -> float:
    """Entrywise max-abs norm."""
    m = np.asarray(m)
    return 0.0 if m.size == 0 else float(np.max(np.abs(m)))


def is_hermitian(m: np.ndarray, tol: float = HERM_TOL) -> bool:
    return max_norm(m - dag(m)) <= tol


def kron(a: np.ndarray, b: np.ndarray, max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    """Kronecker product with a guard on the result size."""
    a = np.asarray(a)
    b = np.asarray(b)
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if max(rows, cols) > max_dim:
        raise MemoryCapError(f"kron result {rows}x{cols} exceeds cap {max_dim}")
    return np.kron(a, b)


def kron_all(mats, max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = kron(out, m, max_dim=max_dim)
    return out


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(
            f"commutator needs equal square matrices, got {a.shape} and {b.shape}"
        )
    return a @ b - b @ a


class EigenExp:
    """Cached eigendecomposition of a Hermitian matrix for repeated exponentials.

    ``exp(scale)`` returns expm(scale * h).  For purely imaginary ``scale`` the
    result is unitary to machine precision by construction.
    """

    def __init__(self, h: np.ndarray, herm_tol: float = HERM_TOL):
        h = np.asarray(h, dtype=complex)
        dev = max_norm(h - dag(h))
        if dev > herm_tol:
            raise NonHermitianError(
                f"generator deviates from Hermitian by {dev:.3e}", dev
            )
        self.eigvals, self.eigvecs = np.linalg.eigh((h + dag(h)) / 2)

    def exp(self, scale: complex) -> np.ndarray:
        phases = np.exp(scale * self.eigvals)
        return (self.eigvecs * phases) @ dag(self.eigvecs)


def herm_exp(h: np.ndarray, scale: complex, herm_tol: float = HERM_TOL) -> np.ndarray:
    """expm(scale * h) for Hermitian h, via eigendecomposition."""
    return EigenExp(h, herm_tol=herm_tol).exp(scale)


_LETTERS = string.ascii_letters


def partial_trace(m: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out all factors not listed in ``keep``.

    ``dims`` is the factor dimension tuple; ``keep`` is an iterable of factor
    indices, returned in their original order.  The full trace is preserved:
    tr(result) == tr(m).
    """
    dims = tuple(int(d) for d in dims)
    m = np.asarray(m)
    d = prod(dims)
    if m.shape != (d, d):
        raise DimensionMismatchError(
            f"matrix shape {m.shape} does not match factor dims {dims}"
        )
    n = len(dims)
    keep = tuple(sorted(set(int(k) for k in keep)))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionMismatchError(f"keep indices {keep} out of range for {n} factors")
    if 2 * n > len(_LETTERS):
        raise DimensionMismatchError("too many tensor factors")
    row = _LETTERS[:n]
    col = _LETTERS[n : 2 * n]
    in_sub = list(row)
    for i in range(n):
        in_sub.append(col[i] if i in keep else row[i])
    out_sub = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    kept_dim = prod(dims[i] for i in keep) if keep else 1
    reduced = np.einsum("".join(in_sub) + "->" + out_sub, m.reshape(dims + dims))
    return reduced.reshape(kept_dim, kept_dim)


def permute_subsystems(m: np.ndarray, dims, perm) -> np.ndarray:
    """Reorder tensor factors: new factor i is old factor perm[i]."""
    dims = tuple(int(d) for d in dims)
    perm = tuple(int(p) for p in perm)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise DimensionMismatchError(f"perm {perm} is not a permutation of {n} factors")
    d = prod(dims)
    t = np.asarray(m).reshape(dims + dims)
    axes = perm + tuple(p + n for p in perm)
    return t.transpose(axes).reshape(d, d)


def validate_density(
    m: np.ndarray,
    layout: SpaceLayout,
    herm_tol: float = HERM_TOL,
    trace_tol: float = TRACE_TOL,
    psd_floor: float = PSD_FLOOR,
) -> DensityMatrix:
    """Check Hermiticity, unit trace and positivity; return a DensityMatrix.

    Raises NonHermitianError / TraceNotOneError / NotPSDError naming the
    measured violation.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (layout.dim, layout.dim):
        raise DimensionMismatchError(
            f"matrix shape {m.shape} does not match layout dim {layout.dim}"
        )
    herm_dev = max_norm(m - dag(m))
    if herm_dev > herm_tol:
        raise NonHermitianError(f"Hermiticity violated by {herm_dev:.3e}", herm_dev)
    trace_dev = abs(complex(np.trace(m)) - 1.0)
    if trace_dev > trace_tol:
        raise TraceNotOneError(f"trace deviates from 1 by {trace_dev:.3e}", trace_dev)
    eigmin = float(np.linalg.eigvalsh((m + dag(m)) / 2).min())
    if eigmin < psd_floor:
        raise NotPSDError(f"minimum eigenvalue {eigmin:.3e} below floor", eigmin)
    return DensityMatrix(mat=m, layout=layout)

"""Shared test utilities: independent oracles and random-object generators.

The oracles here deliberately avoid the library code paths they check:
Kronecker products by index arithmetic, partial traces by explicit index
summation, and matrix exponentials by scaling-and-squaring of the Taylor
series.
"""

from __future__ import annotations

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def kron_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.zeros((ra * rb, ca * cb), dtype=complex)
    for i1 in range(ra):
        for j1 in range(ca):
            for i2 in range(rb):
                for j2 in range(cb):
                    out[i1 * rb + i2, j1 * cb + j2] = a[i1, j1] * b[i2, j2]
    return out


def partial_trace_oracle(m: np.ndarray, dims, keep) -> np.ndarray:
    dims = tuple(dims)
    keep = tuple(sorted(keep))
    traced = [i for i in range(len(dims)) if i not in keep]
    kept_dims = [dims[i] for i in keep]
    dk = int(np.prod(kept_dims)) if kept_dims else 1
    out = np.zeros((dk, dk), dtype=complex)

    def flat(idx):
        f = 0
        for i, d in enumerate(dims):
            f = f * d + idx[i]
        return f

    def flat_kept(idx):
        f = 0
        for pos, i in enumerate(keep):
            f = f * kept_dims[pos] + idx[i]
        return f

    all_indices = np.ndindex(*dims)
    for row in all_indices:
        for col in np.ndindex(*dims):
            if all(row[i] == col[i] for i in traced):
                out[flat_kept(row), flat_kept(col)] += m[flat(row), flat(col)]
    return out


def expm_taylor(h: np.ndarray, scale: complex, terms: int = 30) -> np.ndarray:
    """Scaling-and-squaring Taylor exponential, independent of eigensolvers."""
    a = scale * np.asarray(h, dtype=complex)
    norm = np.max(np.abs(a))
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-300)))) + 1) if norm > 0.5 else 0
    a = a / (2**squarings)
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (m + m.conj().T) / 2


def random_density(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))

"""Dense complex linear algebra and signal primitives.

Operators are square ``numpy`` arrays of ``complex128``; scalar samples are
plain Python/NumPy complex numbers.  Everything here is pure and safe to call
concurrently.  Scaled units with hbar = 1 are assumed throughout the package,
so a Hermitian generator ``h`` advances a state by ``exp(-1j * h * dt)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, StructureError

__all__ = [
    "as_operator",
    "matmul",
    "adjoint",
    "trace",
    "expm_unitary",
    "fft_amplitude",
    "frobenius_distance_to_unitary",
]

#: Max entrywise deviation from h == h^dagger accepted by expm_unitary.
HERMITICITY_TOL = 1e-10


def as_operator(a, name: str = "operator") -> np.ndarray:
    """Validate and return ``a`` as a square, finite complex matrix."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructureError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise StructureError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = as_operator(a, "left factor")
    b = as_operator(b, "right factor")
    if a.shape != b.shape:
        raise StructureError(
            f"dimension mismatch in matmul: {a.shape} vs {b.shape}"
        )
    return a @ b


def adjoint(a) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a, dtype=np.complex128).conj().T


def trace(a) -> complex:
    """Sum of diagonal entries."""
    return complex(np.trace(np.asarray(a, dtype=np.complex128)))


def expm_unitary(h, dt: float, herm_tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Unitary ``exp(-1j * h * dt)`` of a Hermitian generator ``h``.

    Computed through the eigendecomposition of ``h``, which keeps the result
    unitary to machine precision regardless of ``norm(h * dt)``.  Raises
    :class:`ContractError` if ``h`` deviates from Hermiticity by more than
    ``herm_tol`` in any entry.
    """
    h = as_operator(h, "generator")
    dev = float(np.abs(h - h.conj().T).max()) if h.size else 0.0
    if dev > herm_tol:
        raise ContractError(
            f"generator is not Hermitian: max |h - h^dag| = {dev:.3e} > {herm_tol:.1e}"
        )
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def fft_amplitude(samples, dt: float):
    """Two-sided DFT magnitude of a uniformly sampled complex signal.

    Returns ``(freqs, amps)`` where ``freqs`` are physical angular
    frequencies ``2*pi*k/(N*dt)`` in ascending order and ``amps`` the
    corresponding unnormalized DFT magnitudes.
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    if x.size < 2:
        raise StructureError(f"fft_amplitude needs at least 2 samples, got {x.size}")
    if not dt > 0:
        raise StructureError(f"sample spacing must be positive, got {dt}")
    amps = np.abs(np.fft.fftshift(np.fft.fft(x)))
    freqs = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(x.size, d=dt))
    return freqs, amps


def frobenius_distance_to_unitary(u) -> float:
    """``norm(u^dag u - I)`` in the Frobenius norm; 0 for exactly unitary u."""
    u = np.asarray(u, dtype=np.complex128)
    g = u.conj().T @ u
    g[np.diag_indices_from(g)] -= 1.0
    return float(np.linalg.norm(g))

"""Dense complex linear algebra and power-allocation primitives.

Everything downstream works in complex128; rates and log-domain quantities are
computed with natural logs internally and converted to base 2 at the boundary.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class SingularMatrixError(ValueError):
    """A matrix that must be invertible is numerically singular."""


_EIG_FLOOR = 1e-12
_HERMITIAN_TOL = 1e-12


def _as_matrix(a, name):
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    return arr


def _check_hermitian(a, name):
    scale = max(1.0, float(np.linalg.norm(a)))
    dev = float(np.linalg.norm(a - a.conj().T))
    if dev > _HERMITIAN_TOL * scale:
        raise ValueError(f"{name} is not Hermitian (deviation {dev:.3e})")


def hermitian_inv_sqrt(a):
    """Inverse square root B of a Hermitian positive definite matrix.

    Satisfies B @ a @ B^H = I; B is Hermitian. Raises SingularMatrixError when
    any eigenvalue falls below 1e-12 times the largest one.
    """
    mat = _as_matrix(a, "matrix")
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"matrix must be square, got shape {mat.shape}")
    _check_hermitian(mat, "matrix")
    vals, vecs = np.linalg.eigh(mat)
    top = float(vals[-1])
    if top <= 0.0 or float(vals[0]) <= _EIG_FLOOR * top:
        raise SingularMatrixError(
            f"eigenvalue {float(vals[0]):.6e} is below the invertibility floor "
            f"({_EIG_FLOOR:g} of the largest eigenvalue {top:.6e})"
        )
    b = (vecs * (vals**-0.5)) @ vecs.conj().T
    return 0.5 * (b + b.conj().T)


def khatri_rao(a, b):
    """Column-wise Kronecker product: column l is kron(a[:, l], b[:, l])."""
    am = _as_matrix(a, "a")
    bm = _as_matrix(b, "b")
    if am.shape[1] != bm.shape[1]:
        raise ValueError(
            f"column counts must match, got {am.shape[1]} and {bm.shape[1]}"
        )
    cols = am.shape[1]
    return (am[:, None, :] * bm[None, :, :]).reshape(am.shape[0] * bm.shape[0], cols)


@dataclass(frozen=True)
class PowerAllocation:
    """Unit-sum power shares per channel and the water level that produced them."""

    shares: np.ndarray
    water_level: float


def water_filling(singular_values, snr):
    """Optimal power split over parallel channels with the given singular values.

    Maximizes sum log2(1 + snr * share_i * sigma_i^2) subject to the shares
    forming a unit simplex. Channels with zero singular value get zero power.
    """
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.ndim != 1 or sv.size == 0:
        raise ValueError("singular_values must be a nonempty 1-D array")
    if not np.all(np.isfinite(sv)) or np.any(sv < 0.0):
        raise ValueError("singular_values must be finite and nonnegative")
    if not (np.isfinite(snr) and snr > 0.0):
        raise ValueError(f"snr must be positive and finite, got {snr}")
    if not np.any(sv > 0.0):
        raise ValueError("all singular values are zero; no channel can carry power")
    shares, level = _kernels.waterfill(snr * sv * sv)
    total = float(shares.sum())
    if abs(total - 1.0) > 1e-10:
        raise RuntimeError(f"power shares sum to {total!r}, expected 1")
    return PowerAllocation(shares=shares, water_level=float(level))


@dataclass(frozen=True)
class SvdResult:
    """Thin singular value decomposition a = u @ diag(s) @ v^H."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray


def svd(a):
    """Thin SVD with nonincreasing singular values and a reconstruction check."""
    mat = _as_matrix(a, "matrix")
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    rebuilt = (u * s) @ vh
    scale = max(1.0, float(np.linalg.norm(mat)))
    err = float(np.linalg.norm(rebuilt - mat))
    if err > 1e-10 * scale:
        raise ArithmeticError(f"SVD reconstruction error {err:.3e} exceeds tolerance")
    return SvdResult(u=u, singular_values=s, v=vh.conj().T)


@dataclass(frozen=True)
class EvdResult:
    """Eigendecomposition of a Hermitian matrix, eigenvalues nonincreasing."""

    values: np.ndarray
    vectors: np.ndarray


def evd_hermitian(a):
    mat = _as_matrix(a, "matrix")
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"matrix must be square, got shape {mat.shape}")
    _check_hermitian(mat, "matrix")
    vals, vecs = np.linalg.eigh(mat)
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    rebuilt = (vecs * vals) @ vecs.conj().T
    scale = max(1.0, float(np.linalg.norm(mat)))
    err = float(np.linalg.norm(rebuilt - mat))
    if err > 1e-10 * scale:
        raise ArithmeticError(
            f"eigendecomposition reconstruction error {err:.3e} exceeds tolerance"
        )
    return EvdResult(values=vals, vectors=vecs)

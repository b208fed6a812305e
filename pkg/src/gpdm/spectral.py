"""Pseudo-spectral Galerkin solver for viscous Burgers on a 1D curve.

The solution is expanded in approximate eigenvectors of the (generally
nonsymmetric) discrete Laplace-Beltrami operator; the nonlinear advection
is handled through a first-order gradient operator obtained as the
difference of two kernel estimators, and time is discretized implicitly,
so each step solves one dense K x K system in coefficient space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SpectralError(RuntimeError):
    """Eigen-decomposition failed or violated its validity contract."""


# modes whose imaginary magnitude exceeds this fraction of the real scale
# are deemed complex and discarded
IMAG_RTOL = 1e-6
RESIDUAL_TOL = 1e-8


def _l2_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v) / np.sqrt(v.shape[0]))


def _l2_inner(u: np.ndarray, v: np.ndarray) -> float:
    return float(u @ v / u.shape[0])


@dataclass(frozen=True)
class EigenBasis:
    """Leading eigenpairs of the discrete Laplacian, unit l2-normalized.

    Eigenvalues are sorted by magnitude, smallest first; retained modes are
    real to within IMAG_RTOL of the spectral scale, and max_imag_discarded
    records the largest imaginary residue that was projected away.
    """

    eigenvalues: np.ndarray  # (K,)
    vectors: np.ndarray  # (N, K)
    max_imag_discarded: float
    max_residual: float
    orthogonality_defect: float

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def n_points(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class SpectralState:
    """Coefficient vector of one spectral trajectory plus cached grid values."""

    coefficients: np.ndarray
    t: float
    grid_values: np.ndarray
    step_count: int = 0


def eigendecompose(l0, k_modes: int, imag_rtol: float = IMAG_RTOL) -> EigenBasis:
    """Smallest-magnitude eigenpairs of the discrete Laplacian.

    The matrix is treated as dense and nonsymmetric. Conjugate modes with
    imaginary parts above `imag_rtol` (relative to the spectral scale) are
    dropped and reported; the retained vectors are projected to real,
    normalized to unit l2 norm, and checked against the residual contract
    ||L0 phi - lambda phi||_l2 <= 1e-8.
    """
    a = l0.toarray() if sp.issparse(l0) else np.asarray(l0, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("operator must be square")
    if not 1 <= k_modes <= n:
        raise ValueError(f"k_modes must satisfy 1 <= K <= {n}")
    try:
        lam, vec = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise SpectralError("eigen-decomposition did not converge") from exc
    order = np.argsort(np.abs(lam), kind="stable")
    lam, vec = lam[order], vec[:, order]
    scale = float(np.abs(lam.real).max())
    keep, discarded = [], 0.0
    for i in range(n):
        rel_imag = abs(lam[i].imag) / max(abs(lam[i].real), 1e-30)
        if rel_imag > imag_rtol:
            discarded = max(discarded, abs(lam[i].imag) / max(scale, 1e-30))
            continue
        keep.append(i)
        if len(keep) == k_modes:
            break
    if len(keep) < k_modes:
        raise SpectralError(
            f"only {len(keep)} sufficiently real modes available, {k_modes} requested"
        )
    keep = np.asarray(keep)
    values = lam[keep].real.copy()
    vectors = vec[:, keep].real.copy()
    for j in range(k_modes):
        nrm = _l2_norm(vectors[:, j])
        if nrm == 0.0:
            raise SpectralError(f"eigenvector {j} vanished under realness projection")
        vectors[:, j] /= nrm
        # deterministic sign: largest-magnitude component positive
        pivot = np.argmax(np.abs(vectors[:, j]))
        if vectors[pivot, j] < 0:
            vectors[:, j] = -vectors[:, j]
    residuals = a @ vectors - vectors * values[None, :]
    max_res = float(np.max(np.linalg.norm(residuals, axis=0) / np.sqrt(n)))
    if max_res > RESIDUAL_TOL:
        raise SpectralError(f"eigen residual {max_res:g} exceeds {RESIDUAL_TOL:g}")
    gram = vectors.T @ vectors / n
    defect = float(np.abs(gram - np.eye(k_modes)).max())
    return EigenBasis(
        eigenvalues=values,
        vectors=vectors,
        max_imag_discarded=discarded,
        max_residual=max_res,
        orthogonality_defect=defect,
    )


def assemble_gradient_operator(l1, l0):
    """First-order operator L2 = L1 - L0.

    With L1 built from the kernel with drift A = D iota (the curve's
    Jacobian) and L0 drift-free, the second-order parts cancel and L2
    applies the derivative along the curve's parameter.
    """
    if l1.shape != l0.shape:
        raise ValueError("L1 and L0 must have identical shapes")
    out = l1 - l0
    return out.tocsr() if sp.issparse(out) else out


def initial_coefficients(basis: EigenBasis, u0: np.ndarray) -> np.ndarray:
    """Least-squares expansion of initial data in the (near-orthogonal) basis."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[0] != basis.n_points:
        raise ValueError("initial data length does not match the basis")
    coeffs, *_ = np.linalg.lstsq(basis.vectors, u0, rcond=None)
    return coeffs


def reconstruct(basis: EigenBasis, coefficients: np.ndarray) -> np.ndarray:
    """Grid values sum_k c_k phi_k."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape[0] != basis.count:
        raise ValueError("coefficient length does not match the basis")
    return basis.vectors @ coefficients


def spectral_state(basis: EigenBasis, coefficients: np.ndarray, t: float = 0.0) -> SpectralState:
    """Bundle coefficients with their cached grid reconstruction."""
    return SpectralState(
        coefficients=np.asarray(coefficients, dtype=float),
        t=t,
        grid_values=reconstruct(basis, coefficients),
    )


def burgers_step(
    basis: EigenBasis,
    l2,
    state: SpectralState,
    forcing=None,
    dt: float = 1e-3,
    c: float = 1.0,
) -> SpectralState:
    """One implicit step of the spectral Burgers scheme.

    Assembles M_n[k, l] = <u^n * (L2 phi_l), phi_k> in the scaled l2 inner
    product and solves

        (I - dt (M_n + diag(c lambda))) u^{n+1} = u^n + dt f^{n+1},

    where f^{n+1} are the basis inner products of the forcing at t + dt.
    The viscosity multiplier c defaults to 1 (unit-viscosity equation).
    """
    n = basis.n_points
    kk = basis.count
    phi = basis.vectors
    w = l2 @ phi if sp.issparse(l2) else np.asarray(l2) @ phi
    m_n = phi.T @ (state.grid_values[:, None] * w) / n
    system = np.eye(kk) - dt * (m_n + np.diag(c * basis.eigenvalues))
    rhs = state.coefficients.copy()
    t_next = state.t + dt
    if forcing is not None:
        f_vals = np.asarray(forcing(t_next), dtype=float)
        rhs = rhs + dt * (phi.T @ f_vals) / n
    try:
        coeffs = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SpectralError("spectral step system is singular") from exc
    return SpectralState(
        coefficients=coeffs,
        t=t_next,
        grid_values=phi @ coeffs,
        step_count=state.step_count + 1,
    )


def export_eigenbasis(basis: EigenBasis, path) -> None:
    """Write (k, eigenvalue, orthogonality defect vs the rest) as CSV."""
    gram = basis.vectors.T @ basis.vectors / basis.n_points
    np.fill_diagonal(gram, 0.0)
    defects = np.abs(gram).max(axis=1)
    with open(path, "w") as fh:
        fh.write("k,eigenvalue,orthogonality_defect\n")
        for i, (lam, dft) in enumerate(zip(basis.eigenvalues, defects)):
            fh.write(f"{i},{lam:.17g},{dft:.17g}\n")

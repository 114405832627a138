"""Eigendecomposition and the three positional encodings (WavePE, RWPE, LapPE)."""
import logging
from dataclasses import dataclass

import numpy as np

from mgt.exceptions import ConvergenceException, NotSymmetricException, ScaleException, ShapeMismatchException
from mgt.graph import Graph, normalized_laplacian

logger = logging.getLogger(__name__)

JACOBI_THRESHOLD = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_TOLERANCE = 1e-12
DEFAULT_SCALES = (1.0, 2.0, 3.0, 4.0, 5.0)
# rotations below this relative size cannot move the off-diagonal norm
NEGLIGIBLE = 1e-20


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Ascending eigenvalues with matching orthonormal eigenvector columns."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


@dataclass(frozen=True, eq=False)
class WaveletTensor:
    """``matrices[i]`` is the heat-kernel wavelet ψ at ``scales[i]``; shape k×n×n."""
    scales: np.ndarray
    matrices: np.ndarray

    @property
    def k(self) -> int:
        return self.scales.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    def channels_last(self) -> np.ndarray:
        """The n×n×k layout consumed by the equivariant encoder."""
        return np.moveaxis(self.matrices, 0, -1)


def _rotate(matrix, vectors, p, q):
    apq = matrix[p, q]
    theta = (matrix[q, q] - matrix[p, p]) / (2.0 * apq)
    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p = matrix[:, p].copy()
    col_q = matrix[:, q].copy()
    matrix[:, p] = c * col_p - s * col_q
    matrix[:, q] = s * col_p + c * col_q

    row_p = matrix[p, :].copy()
    row_q = matrix[q, :].copy()
    matrix[p, :] = c * row_p - s * row_q
    matrix[q, :] = s * row_p + c * row_q
    matrix[p, q] = matrix[q, p] = 0.0

    vec_p = vectors[:, p].copy()
    vec_q = vectors[:, q].copy()
    vectors[:, p] = c * vec_p - s * vec_q
    vectors[:, q] = s * vec_p + c * vec_q


def eigendecompose(m: np.ndarray) -> EigenDecomposition:
    """Cyclic Jacobi rotations on a dense symmetric matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatchException(f'expected a square matrix, got shape {m.shape}', 'M')

    n = m.shape[0]
    if n and np.max(np.abs(m - m.T)) >= SYMMETRY_TOLERANCE:
        raise NotSymmetricException(f'max |M - Mᵀ| = {np.max(np.abs(m - m.T)):.3e}', 'M')

    matrix = m.copy()
    vectors = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(m)))
    upper = np.triu_indices(n, 1)

    for sweep in range(JACOBI_MAX_SWEEPS + 1):
        off = float(np.sqrt(2.0 * np.sum(matrix[upper] ** 2)))
        if off < JACOBI_THRESHOLD * scale:
            logger.debug('jacobi converged after %d sweeps (n=%d)', sweep, n)
            break

        if sweep == JACOBI_MAX_SWEEPS:
            raise ConvergenceException(f'off-diagonal norm {off:.3e} after {JACOBI_MAX_SWEEPS} sweeps', 'M')

        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(matrix[p, q]) > NEGLIGIBLE * scale:
                    _rotate(matrix, vectors, p, q)

    order = np.argsort(np.diag(matrix), kind='stable')
    eigenvalues = np.diag(matrix)[order].copy()
    eigenvectors = vectors[:, order].copy()
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def wavelet_matrix(eig: EigenDecomposition, s: float) -> np.ndarray:
    """ψ_s = U diag(e^{-sλ}) Uᵀ"""
    if s < 0:
        raise ScaleException(f'scale must be non-negative, got {s}', 's')

    u = eig.eigenvectors
    psi = (u * np.exp(-s * eig.eigenvalues)) @ u.T
    return 0.5 * (psi + psi.T)


def wavelet_tensor(g: Graph, scales=DEFAULT_SCALES) -> WaveletTensor:
    scales = np.asarray(scales, dtype=np.float64).reshape(-1)
    if scales.size == 0:
        raise ScaleException('at least one scale is required', 'scales')

    for index, s in enumerate(scales):
        if s < 0:
            raise ScaleException(f'scale must be non-negative, got {s}', f'scales[{index}]')

    eig = eigendecompose(normalized_laplacian(g))
    matrices = np.stack([wavelet_matrix(eig, s) for s in scales])
    scales.setflags(write=False)
    matrices.setflags(write=False)
    return WaveletTensor(scales=scales, matrices=matrices)


def heat_kernel_signature(tensor: WaveletTensor) -> np.ndarray:
    """Per-node diagonal of every ψ_s, n×k.

    The diagonal of a diffusion matrix is the continuous counterpart of the
    random-walk return probabilities used by RWPE.
    """
    return np.stack([np.diag(psi) for psi in tensor.matrices], axis=1)


def random_walk_matrix(g: Graph) -> np.ndarray:
    degrees = g.degrees
    inverse = np.zeros_like(degrees)
    inverse[degrees > 0] = 1.0 / degrees[degrees > 0]
    return inverse[:, None] * g.adjacency


def rwpe(g: Graph, steps: int) -> np.ndarray:
    """Column t-1 is the diagonal of (D⁻¹A)ᵗ."""
    if steps < 1:
        raise ScaleException(f'number of random-walk steps must be positive, got {steps}', 'K')

    walk = random_walk_matrix(g)
    power = np.eye(g.n)
    columns = []
    for _ in range(steps):
        power = power @ walk
        columns.append(np.diag(power).copy())

    return np.stack(columns, axis=1)


def _sign_normalize(vector: np.ndarray) -> np.ndarray:
    # argmax picks the lowest index among equal magnitudes
    pivot = int(np.argmax(np.abs(vector)))
    return -vector if vector[pivot] < 0 else vector


def lappe(g: Graph, m: int, eig: EigenDecomposition | None = None) -> np.ndarray:
    """Eigenvectors of the m smallest eigenvalues after the first, sign-normalized.

    The sign convention is deterministic but not permutation-stable.
    """
    if not 1 <= m <= g.n - 1:
        raise ScaleException(f'LapPE width must lie in 1..{g.n - 1}, got {m}', 'm')

    eig = eigendecompose(normalized_laplacian(g)) if eig is None else eig
    columns = [_sign_normalize(eig.eigenvectors[:, index]) for index in range(1, m + 1)]
    return np.stack(columns, axis=1)

"""
Complex-matrix primitives: vectorization, Kronecker products, random
ensembles and the validity checks shared by the model and learning code.

All vectorization is column-major (Fortran order), so that

    vectorize(A @ X @ B) == kron(B.T, A) @ vectorize(X)

and in particular vectorize(K @ rho @ K^dagger) == kron(K.conj(), K) @ vectorize(rho).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidityError


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used by validators and tests."""

    hermitian: float = 1e-10
    psd: float = 1e-10
    trace: float = 1e-10
    stiefel: float = 1e-8
    stochastic: float = 1e-10
    channel: float = 1e-8
    imaginary: float = 1e-9
    negative_probability: float = 1e-9
    underflow: float = 1e-300
    kraus_truncation: float = 1e-10


TOL = Tolerances()


def dagger(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def vectorize(m):
    """Stack the columns of a matrix into a single vector.

    >>> vectorize(np.array([[1, 3], [2, 4]]))
    array([1, 2, 3, 4])
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    return m.reshape(-1, order="F")


def devectorize(v, n=None):
    """Inverse of :func:`vectorize` for square matrices.

    Parameters
    ----------
    v : array_like, shape (n**2,)
    n : int, optional
        Side length; inferred from ``len(v)`` when omitted.
    """
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    if n is None:
        n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise DimensionError(f"length {v.size} is not the square of a side length")
    return v.reshape((n, n), order="F")


def kron(a, b):
    """Kronecker product; ``out[i*r + k, j*s + l] = a[i, j] * b[k, l]``."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    return np.kron(a, b)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_gaussian(shape, seed=None):
    """Standard complex Gaussian samples (real and imaginary parts ~ N(0, 1/2))."""
    rng = _rng(seed)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_stiefel(rows, cols, seed=None):
    """Haar-distributed complex matrix with orthonormal columns.

    A complex Gaussian matrix is QR-factorized and the columns of ``Q`` are
    rescaled by the phases of ``diag(R)`` to remove the factorization's
    phase ambiguity.
    """
    if cols < 1 or rows < cols:
        raise DimensionError(f"need rows >= cols >= 1, got ({rows}, {cols})")
    g = complex_gaussian((rows, cols), seed)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    phases = d / np.abs(d)
    return q * phases[np.newaxis, :]


def random_density(n, seed=None):
    """Random full-rank density matrix from the Ginibre ensemble, ``GG^dagger / tr``."""
    if n < 1:
        raise DimensionError("density matrix dimension must be >= 1")
    g = complex_gaussian((n, n), seed)
    rho = g @ dagger(g)
    rho = (rho + dagger(rho)) / 2
    return rho / np.trace(rho).real


def random_unit_vector(n, seed=None, real=True):
    rng = _rng(seed)
    v = rng.standard_normal(n) if real else complex_gaussian(n, rng)
    return v / np.linalg.norm(v)


def random_stochastic(rows, cols, seed=None, concentration=1.0):
    """Column-stochastic matrix with i.i.d. Dirichlet(concentration) columns."""
    rng = _rng(seed)
    return rng.dirichlet(np.full(rows, concentration), size=cols).T


def stiefel_residual(kappa):
    """Frobenius distance of ``kappa^dagger kappa`` from the identity."""
    kappa = np.asarray(kappa)
    return float(np.linalg.norm(dagger(kappa) @ kappa - np.eye(kappa.shape[1])))


def density_report(rho):
    """Hermiticity, positivity and trace residuals of a candidate state."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    herm = float(np.linalg.norm(rho - dagger(rho)))
    min_eig = float(np.linalg.eigvalsh((rho + dagger(rho)) / 2).min())
    trace = complex(np.trace(rho))
    return {
        "hermitian_residual": herm,
        "min_eigenvalue": min_eig,
        "trace_residual": abs(trace - 1.0),
    }


def is_density(rho, tol=None):
    tol = TOL.hermitian if tol is None else tol
    r = density_report(rho)
    return (
        r["hermitian_residual"] <= tol
        and r["min_eigenvalue"] >= -tol
        and r["trace_residual"] <= tol
    )


def validate_density(rho, tol=None):
    """Raise :class:`ValidityError` unless ``rho`` is a density matrix."""
    if not is_density(rho, tol):
        raise ValidityError(f"not a valid density matrix: {density_report(rho)}")
    return rho


def real_probability(value, where=""):
    """Real part of a probability-valued complex scalar.

    The imaginary part must be numerical noise (below ``TOL.imaginary``).
    """
    value = complex(value)
    if abs(value.imag) > TOL.imaginary:
        raise ValidityError(f"probability has imaginary part {value.imag:.3e}{where}")
    return value.real

"""
Conversions between model representations and CP/TP/HP channel checks.

Liouville superoperators act on column-major vectorized matrices,
``L = sum_u conj(K_u) (x) K_u``.  The Choi matrix is obtained from ``L`` by
the reshuffle index permutation

    choi[d*n + b, c*n + a] = L[a*n + b, c*n + d]        (0-based)

which makes ``reshuffle(sum conj(K) (x) K) = sum vec(K) vec(K)^dagger``.
"""
from dataclasses import dataclass

import numpy as np

from .core import TOL, dagger, devectorize, kron, vectorize
from .errors import DimensionError, TransformError, ValidityError
from .models import GeneralOom, Hmm, KHqmm, LHqmm, Noom, StandardOom


@dataclass(frozen=True)
class CanonicalKrausDecomposition:
    """``L = sum_i gamma[i] * conj(K_i) (x) K_i`` with unit-Frobenius ``K_i``."""

    gammas: np.ndarray
    operators: np.ndarray

    @property
    def kraus_rank(self):
        return len(self.gammas)

    def scaled_operators(self):
        """The canonical Kraus operators ``sqrt(gamma_i) K_i``."""
        return np.sqrt(self.gammas)[:, None, None] * self.operators


def hmm_to_oom(h):
    """Observable operators ``T_y = diag(C[y]) A`` of an HMM."""
    T = h.C[:, :, None] * h.A[None, :, :]
    return StandardOom(T, h.x0.copy())


def noom_to_oom(m):
    """Lift a NOOM to an ``n**2``-dimensional general OOM via ``phi (x) phi``."""
    tau = np.stack([kron(p, p) for p in m.phi])
    return GeneralOom(tau, kron(m.v0[:, None], m.v0[:, None])[:, 0], vectorize(np.eye(m.n)))


def kraus_to_liouville(kraus):
    """Liouville superoperator ``sum_u conj(K_u) (x) K_u`` of a set of Kraus operators."""
    kraus = np.asarray(kraus, dtype=complex)
    if kraus.ndim == 2:
        kraus = kraus[None]
    if kraus.ndim != 3 or kraus.shape[1] != kraus.shape[2]:
        raise DimensionError(f"Kraus operators must be square and equally sized, got {kraus.shape}")
    n = kraus.shape[1]
    # sum_u kron(conj(K_u), K_u) without materializing every term
    L = np.einsum("uij,ukl->ikjl", kraus.conj(), kraus)
    return L.reshape(n * n, n * n)


def reshuffle(L):
    """Liouville <-> Choi index permutation (an involution)."""
    L = np.asarray(L)
    d = L.shape[0]
    n = int(round(np.sqrt(d)))
    if L.ndim != 2 or L.shape[1] != d or n * n != d:
        raise DimensionError(f"expected a square matrix of perfect-square size, got {L.shape}")
    return L.reshape(n, n, n, n).transpose(3, 1, 2, 0).reshape(d, d)


def choi_to_canonical_kraus(choi, tol=None):
    """Canonical Kraus operators from the SVD of a (Hermitian) Choi matrix.

    Singular values below ``tol * max(gamma)`` are truncated; the remaining
    count is the Kraus rank.  The phase of each operator is fixed by making
    its largest-magnitude entry real and positive.
    """
    tol = TOL.kraus_truncation if tol is None else tol
    choi = np.asarray(choi, dtype=complex)
    d = choi.shape[0]
    n = int(round(np.sqrt(d)))
    if choi.shape != (d, d) or n * n != d:
        raise DimensionError(f"Choi matrix must be square of perfect-square size, got {choi.shape}")
    scale = max(1.0, float(np.linalg.norm(choi)))
    if np.linalg.norm(choi - dagger(choi)) > TOL.channel * scale:
        raise ValidityError("Choi matrix is not Hermitian")
    u, sv, _ = np.linalg.svd(choi)
    keep = sv > tol * sv[0] if sv[0] > 0 else np.zeros_like(sv, dtype=bool)
    ops = []
    for vec in u[:, keep].T:
        k = devectorize(vec, n)
        flat = k.reshape(-1)
        big = flat[np.argmax(np.abs(flat))]
        ops.append(k * (abs(big) / big))
    ops = np.array(ops).reshape(-1, n, n)
    return CanonicalKrausDecomposition(sv[keep].copy(), ops)


def canonical_to_liouville(decomp):
    return kraus_to_liouville(decomp.scaled_operators())


def validate_channel(L, mode="full-model"):
    """Report CP, TP and HP residuals of one or more superoperators.

    Parameters
    ----------
    L : ndarray, shape (d, d) or (s, d, d)
    mode : {"full-model", "per-output"}
        With ``"full-model"`` the trace-preservation residual is taken for
        ``sum_y L_y``; with ``"per-output"`` each ``L_y`` must be TP on its
        own and the largest residual is reported.

    Returns
    -------
    dict
        ``cp_min_eig``, ``tp_residual``, ``hp_residual``, ``kraus_rank`` and
        per-output lists of the same quantities.  Never raises on invalid
        channels.
    """
    L = np.asarray(L, dtype=complex)
    if L.ndim == 2:
        L = L[None]
    if mode not in ("full-model", "per-output"):
        raise ValueError(f"unknown mode {mode!r}")
    n = int(round(np.sqrt(L.shape[1])))
    ident = vectorize(np.eye(n))
    cp, hp, ranks, tps = [], [], [], []
    for Ly in L:
        choi = reshuffle(Ly)
        hp.append(float(np.linalg.norm(choi - dagger(choi))))
        cp.append(float(np.linalg.eigvalsh((choi + dagger(choi)) / 2).min()))
        sv = np.linalg.svd(choi, compute_uv=False)
        ranks.append(int(np.sum(sv > TOL.kraus_truncation * sv[0])) if sv[0] > 0 else 0)
        tps.append(float(np.linalg.norm(ident @ Ly - ident)))
    if mode == "full-model":
        tp = float(np.linalg.norm(ident @ L.sum(axis=0) - ident))
    else:
        tp = max(tps)
    return {
        "mode": mode,
        "cp_min_eig": min(cp),
        "tp_residual": tp,
        "hp_residual": max(hp),
        "kraus_rank": max(ranks),
        "per_output": {
            "cp_min_eig": cp,
            "hp_residual": hp,
            "kraus_rank": ranks,
            "tp_residual": tps,
        },
    }


def general_to_standard_oom(g):
    """Similarity transform a general OOM so its functional becomes all-ones.

    ``S = I + (1/d) 1 (sigma^dagger - 1^T)`` satisfies ``1^T S = sigma^dagger``
    and is singular exactly when ``sigma^dagger 1 = 0``.
    """
    d = g.n
    ones = np.ones(d)
    sdag = g.sigma.conj()
    if abs(sdag @ ones) < 1e-12:
        raise TransformError(
            f"similarity transform is singular: sigma^dagger 1 = {sdag @ ones:.3e}"
        )
    S = np.eye(d) + np.outer(ones, sdag - ones) / d
    S_inv = np.linalg.inv(S)
    tau = S[None] @ g.tau @ S_inv[None]
    new_sigma_row = sdag @ S_inv
    if np.abs(new_sigma_row - ones).max() > 1e-9:
        raise TransformError("transformed functional is not the ones vector")
    return GeneralOom(tau, S @ g.x0, ones.astype(complex))


def hmm_to_khqmm(h):
    """Embed an ``n``-state HMM as an ``(n, s, n)`` K-HQMM.

    ``K[y, j] = sqrt(C[y] * A[:, j]) e_j^T``: operator ``j`` moves the
    weight of source state ``j``.  Only the diagonal of the filtering state
    ever influences later probabilities, and that diagonal follows the HMM
    belief exactly.
    """
    n, s = h.n, h.s
    kraus = np.zeros((s, n, n, n))
    for y in range(s):
        for j in range(n):
            kraus[y, j, :, j] = np.sqrt(h.C[y] * h.A[:, j])
    return KHqmm(kraus, np.diag(h.x0))


def khqmm_to_lhqmm(m):
    L = np.stack([kraus_to_liouville(m.kraus[y]) for y in range(m.s)])
    return LHqmm(L, vectorize(m.rho0))


def lhqmm_to_general_oom(m):
    """View an L-HQMM as a general OOM with the trace functional ``vec(I)``."""
    return GeneralOom(m.L.copy(), m.rho0_vec.copy(), vectorize(np.eye(m.n)).astype(complex))


def liouville_to_canonical_kraus(L):
    return choi_to_canonical_kraus(reshuffle(L))


def lhqmm_to_khqmm(m):
    """Canonical Kraus form of each output; outputs are zero-padded to a common count."""
    decomps = [liouville_to_canonical_kraus(Ly) for Ly in m.L]
    w = max(1, max(d.kraus_rank for d in decomps))
    kraus = np.zeros((m.s, w, m.n, m.n), dtype=complex)
    for y, dec in enumerate(decomps):
        kraus[y, : dec.kraus_rank] = dec.scaled_operators()
    return KHqmm(kraus, devectorize(m.rho0_vec))


def noom_to_khqmm(m):
    """A NOOM is a K-HQMM with one Kraus operator per output and a pure state."""
    return KHqmm(m.phi[:, None].astype(complex), np.outer(m.v0, m.v0))


CONVERSIONS = {
    ("hmm", "standard_oom"): hmm_to_oom,
    ("hmm", "khqmm"): hmm_to_khqmm,
    ("noom", "general_oom"): noom_to_oom,
    ("noom", "khqmm"): noom_to_khqmm,
    ("khqmm", "lhqmm"): khqmm_to_lhqmm,
    ("lhqmm", "khqmm"): lhqmm_to_khqmm,
    ("lhqmm", "general_oom"): lhqmm_to_general_oom,
    ("general_oom", "standard_form"): general_to_standard_oom,
}


def convert(model, target):
    """Dispatch a conversion by family name; see ``CONVERSIONS`` for the supported pairs."""
    key = (model.family, target)
    if key not in CONVERSIONS:
        supported = ", ".join(f"{a}->{b}" for a, b in CONVERSIONS)
        raise ValueError(f"no conversion {model.family}->{target}; supported: {supported}")
    return CONVERSIONS[key](model)

"""
Model families for discrete-output stochastic processes and their
filtering semantics.

Every family exposes the same small protocol:

``initial_state()``
    the filtering state before any observation;
``symbol_probabilities(state)``
    the vector ``p(y | state)`` over all outputs;
``step(state, y)``
    the conditioned, renormalized state and the probability of ``y``.

Sequence likelihoods are always computed by scaled filtering: the state is
renormalized after every symbol and the logs of the normalizers are summed.
Leading burn-in symbols advance the state but are left out of the sum.
"""
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TOL,
    dagger,
    density_report,
    devectorize,
    random_density,
    random_stiefel,
    random_stochastic,
    random_unit_vector,
    real_probability,
    stiefel_residual,
    vectorize,
    _rng,
)
from .errors import (
    DimensionError,
    InputError,
    NegativeProbabilityError,
    ResourceError,
    ValidityError,
    ZeroProbabilityError,
)


def _check_floor(p, y, position=None):
    if p < TOL.underflow:
        at = "" if position is None else f" at position {position}"
        raise ZeroProbabilityError(
            f"probability {p:.3e} of symbol {y}{at} is below the underflow floor",
            position=position,
            symbol=int(y),
        )


def _check_symbols(seq, s):
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1:
        raise InputError("a sequence must be one-dimensional")
    if seq.size and (seq.min() < 0 or seq.max() >= s):
        raise InputError(f"symbols must lie in [0, {s}), got range [{seq.min()}, {seq.max()}]")
    return seq


# --------------------------------------------------------------------------
# Hidden Markov models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Hmm:
    """Hidden Markov model with column-stochastic ``A`` (n x n) and ``C`` (s x n).

    Each step first transitions (``x' = A x``) and then emits from ``x'``.
    """

    A: np.ndarray
    C: np.ndarray
    x0: np.ndarray
    family: str = field(default="hmm", init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        C = np.asarray(self.C, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or C.ndim != 2 or C.shape[1] != n or x0.shape != (n,):
            raise DimensionError(f"inconsistent HMM shapes A{A.shape} C{C.shape} x0{x0.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def s(self):
        return self.C.shape[0]

    def validate(self, tol=TOL.stochastic):
        for name, arr in (("A", self.A), ("C", self.C), ("x0", self.x0)):
            if arr.min() < -tol:
                raise ValidityError(f"HMM parameter {name} has negative entries")
            if np.abs(arr.sum(axis=0) - 1).max() > tol:
                raise ValidityError(f"HMM parameter {name} is not column-stochastic")
        return self

    def initial_state(self):
        return self.x0.copy()

    def symbol_probabilities(self, x):
        return self.C @ (self.A @ x)

    def step(self, x, y):
        return hmm_step(self, x, y)


def hmm_step(model, x, y, position=None):
    """Transition, condition on ``y`` and renormalize.

    Returns
    -------
    x_new : ndarray
        The posterior belief state.
    p : float
        ``P(y | x)``, the normalizer.
    """
    joint = model.C[y] * (model.A @ x)
    p = float(joint.sum())
    _check_floor(p, y, position)
    return joint / p, p


def _scaled_log_likelihood(model, seq, burn_in, state=None):
    s = model.s
    seq = _check_symbols(seq, s)
    if burn_in < 0 or (seq.size and burn_in >= seq.size):
        raise InputError(f"burn_in={burn_in} must be smaller than the sequence length {seq.size}")
    state = model.initial_state() if state is None else state
    total = 0.0
    for t, y in enumerate(seq):
        try:
            state, p = model.step(state, y)
        except ZeroProbabilityError as err:
            err.position = t
            raise
        if t >= burn_in:
            total += np.log(p)
    return total


def hmm_sequence_log_prob(model, seq, burn_in=0):
    """Natural-log probability of ``seq[burn_in:]`` given the burn-in prefix."""
    return _scaled_log_likelihood(model, seq, burn_in)


# --------------------------------------------------------------------------
# Observable operator models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardOom:
    """Real OOM whose evaluation functional is the all-ones vector."""

    T: np.ndarray
    x0: np.ndarray
    family: str = field(default="standard_oom", init=False, repr=False)

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2] or x0.shape != (T.shape[1],):
            raise DimensionError(f"inconsistent OOM shapes T{T.shape} x0{x0.shape}")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self):
        return self.T.shape[1]

    @property
    def s(self):
        return self.T.shape[0]

    @property
    def tau(self):
        return self.T

    @property
    def sigma(self):
        return np.ones(self.n)

    def validate(self, tol=TOL.stochastic):
        if abs(self.x0.sum() - 1) > tol:
            raise ValidityError("OOM initial state does not sum to one")
        if np.abs(self.T.sum(axis=0).sum(axis=0) - 1).max() > tol:
            raise ValidityError("OOM operators do not preserve the ones functional")
        return self

    def initial_state(self):
        return self.x0.copy()

    def symbol_probabilities(self, x):
        return np.array([_oom_prob(self, x, y) for y in range(self.s)])

    def step(self, x, y):
        return oom_step_and_prob(self, x, y)


@dataclass(frozen=True)
class GeneralOom:
    """Complex OOM with evaluation functional ``sigma``; ``p = sigma^dagger tau_y x``."""

    tau: np.ndarray
    x0: np.ndarray
    sigma: np.ndarray
    family: str = field(default="general_oom", init=False, repr=False)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=complex)
        x0 = np.asarray(self.x0, dtype=complex)
        sigma = np.asarray(self.sigma, dtype=complex)
        d = tau.shape[1] if tau.ndim == 3 else -1
        if tau.ndim != 3 or tau.shape[2] != d or x0.shape != (d,) or sigma.shape != (d,):
            raise DimensionError(
                f"inconsistent OOM shapes tau{tau.shape} x0{x0.shape} sigma{sigma.shape}"
            )
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self):
        return self.tau.shape[1]

    @property
    def s(self):
        return self.tau.shape[0]

    def validate(self, tol=TOL.stochastic):
        if abs(np.vdot(self.sigma, self.x0) - 1) > tol:
            raise ValidityError("sigma^dagger x0 != 1")
        lhs = self.sigma.conj() @ self.tau.sum(axis=0)
        if np.abs(lhs - self.sigma.conj()).max() > tol:
            raise ValidityError("sigma^dagger sum_y tau_y != sigma^dagger")
        return self

    def initial_state(self):
        return self.x0.copy()

    def symbol_probabilities(self, x):
        return np.array([_oom_prob(self, x, y) for y in range(self.s)])

    def step(self, x, y):
        return oom_step_and_prob(self, x, y)


def _oom_prob(model, x, y):
    return real_probability(np.vdot(model.sigma, model.tau[y] @ x), f" for symbol {y}")


def oom_step_and_prob(model, x, y, position=None):
    """One filtering step of a standard or general OOM.

    Negative probabilities are reported as errors rather than clipped.
    """
    new = model.tau[y] @ x
    p = real_probability(np.vdot(model.sigma, new), f" for symbol {y}")
    if p < -TOL.negative_probability:
        raise NegativeProbabilityError(f"OOM assigned probability {p:.3e} to symbol {y}")
    _check_floor(p, y, position)
    return new / p, p


# --------------------------------------------------------------------------
# Norm-observable operator models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Noom:
    """Real NOOM: ``p(y | v) = ||phi_y v||^2`` with ``sum_y phi_y^T phi_y = I``."""

    phi: np.ndarray
    v0: np.ndarray
    family: str = field(default="noom", init=False, repr=False)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        v0 = np.asarray(self.v0, dtype=float)
        if phi.ndim != 3 or phi.shape[1] != phi.shape[2] or v0.shape != (phi.shape[1],):
            raise DimensionError(f"inconsistent NOOM shapes phi{phi.shape} v0{v0.shape}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "v0", v0)

    @property
    def n(self):
        return self.phi.shape[1]

    @property
    def s(self):
        return self.phi.shape[0]

    def validate(self, tol=TOL.stochastic):
        if abs(np.linalg.norm(self.v0) - 1) > tol:
            raise ValidityError("NOOM initial state is not a unit vector")
        gram = np.einsum("yji,yjk->ik", self.phi, self.phi)
        if np.abs(gram - np.eye(self.n)).max() > tol:
            raise ValidityError("NOOM operators are not complete")
        return self

    def initial_state(self):
        return self.v0.copy()

    def symbol_probabilities(self, v):
        return np.sum((self.phi @ v) ** 2, axis=1)

    def step(self, v, y):
        return noom_step_and_prob(self, v, y)


def noom_step_and_prob(model, v, y, position=None):
    new = model.phi[y] @ v
    p = float(new @ new)
    _check_floor(p, y, position)
    return new / np.sqrt(p), p


# --------------------------------------------------------------------------
# Hidden quantum Markov models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KHqmm:
    """HQMM in operator-sum (Kraus) form.

    Parameters
    ----------
    kraus : ndarray, shape (s, w, n, n)
        ``kraus[y, u]`` is the u-th Kraus operator attached to output ``y``.
    rho0 : ndarray, shape (n, n)
        Initial density matrix.
    """

    kraus: np.ndarray
    rho0: np.ndarray
    family: str = field(default="khqmm", init=False, repr=False)

    def __post_init__(self):
        kraus = np.asarray(self.kraus, dtype=complex)
        rho0 = np.asarray(self.rho0, dtype=complex)
        if kraus.ndim != 4 or kraus.shape[2] != kraus.shape[3]:
            raise DimensionError(f"kraus must have shape (s, w, n, n), got {kraus.shape}")
        if rho0.shape != kraus.shape[2:]:
            raise DimensionError(f"rho0 shape {rho0.shape} does not match operators")
        object.__setattr__(self, "kraus", kraus)
        object.__setattr__(self, "rho0", rho0)

    @classmethod
    def from_kappa(cls, kappa, s, w, rho0):
        """Partition a stacked ``(s*w*n, n)`` Stiefel matrix into Kraus blocks."""
        kappa = np.asarray(kappa)
        n = kappa.shape[1]
        if kappa.shape[0] != s * w * n:
            raise DimensionError(f"kappa has {kappa.shape[0]} rows, expected {s * w * n}")
        return cls(kappa.reshape(s, w, n, n), rho0)

    @property
    def n(self):
        return self.kraus.shape[2]

    @property
    def s(self):
        return self.kraus.shape[0]

    @property
    def w(self):
        return self.kraus.shape[1]

    @property
    def kappa(self):
        """The vertical stack of all Kraus operators, output-major."""
        return self.kraus.reshape(-1, self.n)

    def validate(self, tol=TOL.stiefel):
        resid = stiefel_residual(self.kappa)
        if resid > tol:
            raise ValidityError(f"Kraus operators are not trace preserving (residual {resid:.3e})")
        r = density_report(self.rho0)
        if (
            r["hermitian_residual"] > TOL.hermitian
            or r["min_eigenvalue"] < -TOL.psd
            or r["trace_residual"] > TOL.trace
        ):
            raise ValidityError(f"rho0 is not a density matrix: {r}")
        return self

    def initial_state(self):
        return self.rho0.copy()

    def symbol_probabilities(self, rho):
        out = np.einsum("ywij,jk,ywik->y", self.kraus, rho, self.kraus.conj())
        return np.array([real_probability(p) for p in out])

    def step(self, rho, y):
        return khqmm_step(self, rho, y)


def khqmm_step(model, rho, y, position=None):
    """Apply the Kraus operators of output ``y`` and renormalize by the trace."""
    ks = model.kraus[y]
    new = np.einsum("wij,jk,wlk->il", ks, rho, ks.conj())
    p = real_probability(np.trace(new), f" for symbol {y}")
    _check_floor(p, y, position)
    new = new / p
    return (new + dagger(new)) / 2, p


def khqmm_sequence_log_likelihood(model, seq, burn_in=0):
    """Log-likelihood of ``seq[burn_in:]`` by trace-normalized filtering."""
    return _scaled_log_likelihood(model, seq, burn_in)


def khqmm_log_likelihoods(kraus, rho0, seqs, burn_in=0):
    """Vectorized :func:`khqmm_sequence_log_likelihood` over equal-length sequences.

    Parameters
    ----------
    kraus : ndarray, shape (s, w, n, n)
    rho0 : ndarray, shape (n, n)
    seqs : int array, shape (m, T)

    Returns
    -------
    ndarray, shape (m,)
    """
    seqs = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
    m, T = seqs.shape
    rho = np.broadcast_to(rho0, (m,) + rho0.shape).astype(complex)
    total = np.zeros(m)
    for t in range(T):
        ks = kraus[seqs[:, t]]
        new = np.einsum("mwij,mjk,mwlk->mil", ks, rho, ks.conj())
        c = np.einsum("mii->m", new).real
        bad = c < TOL.underflow
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ZeroProbabilityError(
                f"sequence {i}: probability {c[i]:.3e} of symbol {seqs[i, t]} at position {t} "
                "is below the underflow floor",
                position=t,
                symbol=int(seqs[i, t]),
                sequence_index=i,
            )
        rho = new / c[:, None, None]
        if t >= burn_in:
            total += np.log(c)
    return total


@dataclass(frozen=True)
class LHqmm:
    """HQMM in Liouville form: ``p(y | rho) = vec(I)^T L_y vec(rho)``.

    Parameters
    ----------
    L : ndarray, shape (s, n*n, n*n)
    rho0_vec : ndarray, shape (n*n,)
        Column-major vectorized initial density matrix.
    """

    L: np.ndarray
    rho0_vec: np.ndarray
    family: str = field(default="lhqmm", init=False, repr=False)

    def __post_init__(self):
        L = np.asarray(self.L, dtype=complex)
        rho0 = np.asarray(self.rho0_vec, dtype=complex)
        if rho0.ndim == 2:
            rho0 = vectorize(rho0)
        d = L.shape[1] if L.ndim == 3 else -1
        if L.ndim != 3 or L.shape[2] != d or rho0.shape != (d,):
            raise DimensionError(f"inconsistent Liouville shapes L{L.shape} rho0{rho0.shape}")
        n = int(round(np.sqrt(d)))
        if n * n != d:
            raise DimensionError(f"superoperator dimension {d} is not a perfect square")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "rho0_vec", rho0)

    @property
    def n(self):
        return int(round(np.sqrt(self.L.shape[1])))

    @property
    def s(self):
        return self.L.shape[0]

    @property
    def trace_functional(self):
        return vectorize(np.eye(self.n))

    def validate(self, tol=TOL.channel):
        # local import: representations depends on this module
        from .representations import validate_channel

        report = validate_channel(self.L, mode="full-model")
        if report["tp_residual"] > tol:
            raise ValidityError(f"superoperators are not trace preserving: {report}")
        if report["hp_residual"] > tol or report["cp_min_eig"] < -tol:
            raise ValidityError(f"superoperators are not CP/HP: {report}")
        r = density_report(devectorize(self.rho0_vec))
        if r["min_eigenvalue"] < -TOL.psd or r["trace_residual"] > TOL.trace:
            raise ValidityError(f"rho0 is not a density matrix: {r}")
        return self

    def initial_state(self):
        return self.rho0_vec.copy()

    def symbol_probabilities(self, rho_vec):
        out = self.trace_functional @ (self.L @ rho_vec).T
        return np.array([real_probability(p) for p in out])

    def step(self, rho_vec, y):
        return lhqmm_step_and_prob(self, rho_vec, y)


def lhqmm_step_and_prob(model, rho_vec, y, position=None):
    new = model.L[y] @ rho_vec
    p = real_probability(model.trace_functional @ new, f" for symbol {y}")
    _check_floor(p, y, position)
    return new / p, p


# --------------------------------------------------------------------------
# Family-generic helpers
# --------------------------------------------------------------------------

MODEL_TYPES = {cls.family: cls for cls in (Hmm, StandardOom, GeneralOom, Noom, KHqmm, LHqmm)}


def sequence_log_likelihood(model, seq, burn_in=0, state=None):
    """Natural-log likelihood of ``seq[burn_in:]`` for any model family."""
    return _scaled_log_likelihood(model, seq, burn_in, state)


def log_likelihoods(model, seqs, burn_in=0):
    """Per-sequence log-likelihoods; uses the vectorized path for K-HQMMs."""
    seqs = [np.asarray(q, dtype=np.int64) for q in seqs]
    if isinstance(model, KHqmm) and seqs and len({q.size for q in seqs}) == 1:
        arr = np.stack(seqs)
        _check_symbols(arr.ravel(), model.s)
        if burn_in >= arr.shape[1]:
            raise InputError(f"burn_in={burn_in} must be smaller than the sequence length")
        return khqmm_log_likelihoods(model.kraus, model.rho0, arr, burn_in)
    return np.array([sequence_log_likelihood(model, q, burn_in) for q in seqs])


def sample_sequence(model, length, seed=None, state=None):
    """Draw a symbol sequence from any model family.

    At every step the full conditional distribution over outputs is
    evaluated at the current state, a symbol is drawn, and the state is
    conditioned on it.
    """
    rng = _rng(seed)
    state = model.initial_state() if state is None else state
    out = np.empty(length, dtype=np.int64)
    for t in range(length):
        p = np.clip(model.symbol_probabilities(state), 0.0, None)
        cdf = np.cumsum(p)
        y = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        y = min(y, model.s - 1)
        state, _ = model.step(state, y)
        out[t] = y
    return out


def validate_oom_depth(model, depth, max_sequences=10**6):
    """Bounded search for negative sequence probabilities.

    Enumerates every sequence of length ``1..depth`` and evaluates its
    (unnormalized) probability.  This is a finite check: passing it does
    not prove that the model is a valid OOM.

    Returns
    -------
    dict
        ``min_probability``, ``violations`` (list of ``(sequence, p)``),
        ``max_marginal_residual`` (largest ``|sum_y p(h y) - p(h)|`` over
        histories ``h``), ``sequences_checked`` and ``bounded`` (always True).
    """
    s = model.s
    if s ** depth > max_sequences:
        raise ResourceError(f"{s}^{depth} sequences exceed the enumeration guard {max_sequences}")
    sigma = np.asarray(model.sigma, dtype=complex)
    tau = np.asarray(model.tau, dtype=complex)
    states = np.asarray(model.x0, dtype=complex)[None, :]
    parent_p = np.array([np.vdot(sigma, model.x0).real])
    histories = [()]
    min_p = np.inf
    violations = []
    max_marg = 0.0
    checked = 0
    for _ in range(depth):
        # (histories, s, d)
        nxt = np.einsum("yij,hj->hyi", tau, states)
        probs = nxt @ sigma.conj()
        p = probs.real
        marg = np.abs(p.sum(axis=1) - parent_p)
        max_marg = max(max_marg, float(marg.max()))
        min_p = min(min_p, float(p.min()))
        bad = np.argwhere(p < -TOL.negative_probability)
        for h, y in bad:
            violations.append((histories[h] + (int(y),), float(p[h, y])))
        checked += p.size
        histories = [h + (y,) for h in histories for y in range(s)]
        states = nxt.reshape(-1, nxt.shape[-1])
        parent_p = p.ravel()
    return {
        "bounded": True,
        "depth": depth,
        "sequences_checked": checked,
        "min_probability": min_p,
        "violations": violations,
        "max_marginal_residual": max_marg,
    }


# --------------------------------------------------------------------------
# Random instances
# --------------------------------------------------------------------------


def random_hmm(n, s, seed=None, concentration=1.0):
    """HMM with Dirichlet(``concentration``) columns for A, C and x0."""
    rng = _rng(seed)
    A = random_stochastic(n, n, rng, concentration)
    C = random_stochastic(s, n, rng, concentration)
    x0 = random_stochastic(n, 1, rng, concentration)[:, 0]
    return Hmm(A, C, x0)


def random_noom(n, s, seed=None):
    """Real NOOM from a random orthonormal stack of ``s`` blocks."""
    rng = _rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((s * n, n)))
    return Noom(q.reshape(s, n, n), random_unit_vector(n, rng))


def random_khqmm(n, s, w, seed=None):
    """K-HQMM with a Haar-random Kraus stack and a Ginibre initial state."""
    rng = _rng(seed)
    kappa = random_stiefel(s * w * n, n, rng)
    return KHqmm.from_kappa(kappa, s, w, random_density(n, rng))

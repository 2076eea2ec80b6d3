"""
Learning K-HQMMs by constrained gradient descent on the Stiefel manifold.

The learnable parameters are the Kraus operators ``kraus[y, u]`` of an
``(n, s, w)`` model, stacked into ``kappa`` of shape ``(s*w*n, n)`` with
``kappa^dagger kappa = I``.  Gradients are Wirtinger derivatives with
respect to the conjugate parameters, ``G = dL/d conj(K)``, so that a real
loss changes as ``dL = 2 Re tr(G^dagger dK)``.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import TOL, dagger, random_density, random_stiefel, stiefel_residual, _rng
from .errors import ConfigurationError, InputError, StepError, ZeroProbabilityError
from .models import KHqmm

log = logging.getLogger(__name__)

UPDATE_SCHEMES = ("wen_yin", "projection")


def _group_by_length(batch):
    groups = {}
    for i, seq in enumerate(batch):
        seq = np.asarray(seq, dtype=np.int64)
        groups.setdefault(seq.size, []).append((i, seq))
    for length, items in groups.items():
        idx = [i for i, _ in items]
        yield idx, np.stack([q for _, q in items]).reshape(len(items), length)


def _forward(kraus, rho0, seqs, first_index=0):
    """Trace-normalized filtering of equal-length sequences, keeping every state.

    Returns ``rhos`` of shape (T+1, m, n, n) and normalizers ``c`` of shape (T, m).
    """
    m, T = seqs.shape
    n = rho0.shape[0]
    kd = dagger(kraus)
    rhos = np.empty((T + 1, m, n, n), dtype=complex)
    cs = np.empty((T, m))
    rhos[0] = rho0
    for t in range(T):
        y = seqs[:, t]
        sigma = (kraus[y] @ rhos[t][:, None] @ kd[y]).sum(axis=1)
        c = np.trace(sigma, axis1=1, axis2=2).real
        bad = c < TOL.underflow
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ZeroProbabilityError(
                f"sequence {first_index + i}: symbol {y[i]} at position {t} has probability "
                f"{c[i]:.3e}, below the underflow floor",
                position=t,
                symbol=int(y[i]),
                sequence_index=first_index + i,
            )
        cs[t] = c
        rhos[t + 1] = sigma / c[:, None, None]
    return rhos, cs


def _loss_and_gradient(kraus, rho0, batch, burn_in, need_grad=True):
    kraus = np.asarray(kraus, dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex)
    m = len(batch)
    n = rho0.shape[0]
    eye = np.eye(n)
    kd = dagger(kraus)
    G = np.zeros_like(kraus)
    total = 0.0
    for idx, seqs in _group_by_length(batch):
        if seqs.size and (seqs.min() < 0 or seqs.max() >= kraus.shape[0]):
            raise InputError(f"symbols must lie in [0, {kraus.shape[0]})")
        rhos, cs = _forward(kraus, rho0, seqs, first_index=idx[0])
        T = seqs.shape[1]
        total -= np.log(cs[burn_in:]).sum()
        if not need_grad:
            continue
        # reverse pass; adj holds dL/d rho_t with dL = tr(adj d rho_t)
        adj = np.zeros((len(idx), n, n), dtype=complex)
        for t in range(T - 1, -1, -1):
            y = seqs[:, t]
            c = cs[t][:, None, None]
            inner = np.einsum("mij,mji->m", adj, rhos[t + 1])
            if t >= burn_in:
                inner = inner + 1.0
            B = (adj - inner[:, None, None] * eye) / c
            Ks = kraus[y]
            contrib = B[:, None] @ Ks @ rhos[t][:, None]
            np.add.at(G, y, contrib)
            adj = (kd[y] @ B[:, None] @ Ks).sum(axis=1)
    return total / m, G / m


def batch_loss(kraus, rho0, batch, burn_in=0):
    """Mean negative log-likelihood of a batch of sequences.

    Parameters
    ----------
    kraus : ndarray, shape (s, w, n, n)
    rho0 : ndarray, shape (n, n)
    batch : sequence of int arrays
        Sequences may differ in length.
    burn_in : int
        Leading symbols of every sequence that advance the state only.
    """
    return _loss_and_gradient(kraus, rho0, batch, burn_in, need_grad=False)[0]


def conjugate_gradient(kraus, rho0, batch, burn_in=0):
    """Loss and its Wirtinger gradient ``dL/d conj(K)`` for every Kraus operator.

    The gradient is accumulated by a reverse pass through the
    trace-normalized filter.  With ``sigma_t = sum_u K rho_{t-1} K^dagger``,
    ``c_t = tr(sigma_t)`` and ``rho_t = sigma_t / c_t``, the adjoint of
    ``sigma_t`` is

        B_t = (A_t - (tr(A_t rho_t) + [t >= burn_in]) I) / c_t

    which contributes ``B_t K rho_{t-1}`` to the gradient of each operator
    used at step ``t`` and propagates ``A_{t-1} = sum_u K^dagger B_t K``.

    Returns
    -------
    loss : float
    G : ndarray, shape (s, w, n, n)
        Reshape to ``(-1, n)`` for the stacked form matching ``kappa``.
    """
    return _loss_and_gradient(kraus, rho0, batch, burn_in)


def momentum_renorm(G, M, beta):
    """Normalize the gradient, fold it into the momentum buffer, normalize again.

    Returns
    -------
    direction : ndarray
        Unit Frobenius norm (or zero when both gradient and buffer vanish).
    M : ndarray
        The updated momentum buffer.
    """
    g_norm = np.linalg.norm(G)
    if g_norm >= 1e-15:
        G = G / g_norm
    M = beta * M + G
    m_norm = np.linalg.norm(M)
    direction = M / m_norm if m_norm >= 1e-15 else np.zeros_like(M)
    return direction, M


def wen_yin_retraction(kappa, G, tau, max_condition=1e12):
    """Cayley-type retraction of a step along ``-G`` onto the Stiefel manifold.

    Computes ``kappa - tau U (I + tau/2 V^dagger U)^{-1} V^dagger kappa`` with
    ``U = [G | kappa]`` and ``V = [kappa | -G]``, which only needs a
    ``2n x 2n`` solve.
    """
    kappa = np.asarray(kappa)
    G = np.asarray(G)
    if G.shape != kappa.shape:
        raise ValueError(f"gradient shape {G.shape} does not match kappa {kappa.shape}")
    if tau == 0:
        return kappa.copy()
    n = kappa.shape[1]
    U = np.hstack([G, kappa])
    V = np.hstack([kappa, -G])
    system = np.eye(2 * n) + (tau / 2) * (dagger(V) @ U)
    if not np.all(np.isfinite(system)):
        raise StepError(f"retraction system has non-finite entries at tau={tau}")
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > max_condition:
        raise StepError(f"retraction system condition number {cond:.3e} at tau={tau}")
    return kappa - tau * U @ np.linalg.solve(system, dagger(V) @ kappa)


def polar_projection(Y, rank_tol=1e-12):
    """Nearest matrix with orthonormal columns (the polar factor ``U V^dagger``)."""
    u, sv, vh = np.linalg.svd(Y, full_matrices=False)
    if sv[-1] <= rank_tol * max(sv[0], 1.0):
        raise StepError(f"projection of a rank-deficient matrix (smallest singular value {sv[-1]:.3e})")
    return u @ vh


def projection_update(kappa, G, tau):
    """Euclidean step ``kappa - tau G`` followed by polar projection."""
    return polar_projection(np.asarray(kappa) - tau * np.asarray(G))


@dataclass
class TrainingConfig:
    """Hyperparameters of the training loop.

    ``batches`` caps the number of batches visited per epoch (``None`` uses
    all of them); batches are drawn from a fresh shuffle of the data every
    epoch.
    """

    tau: float = 0.75
    alpha: float = 0.92
    beta: float = 0.9
    batches: int = None
    batch_size: int = 30
    epochs: int = 60
    burn_in: int = 100
    seed: int = 0
    update_scheme: str = "wen_yin"
    reortho_period: int = 50
    reortho_tol: float = 1e-8

    def validate(self):
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        if not 0 < self.alpha <= 1:
            raise ConfigurationError("alpha must lie in (0, 1]")
        if not 0 <= self.beta < 1:
            raise ConfigurationError("beta must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.burn_in < 0:
            raise ConfigurationError("batch_size >= 1, epochs >= 0 and burn_in >= 0 required")
        if self.batches is not None and self.batches < 1:
            raise ConfigurationError("batches must be positive")
        if self.update_scheme not in UPDATE_SCHEMES:
            raise ConfigurationError(f"update_scheme must be one of {UPDATE_SCHEMES}")
        return self


SYNTHETIC_DEFAULTS = TrainingConfig(tau=0.75, alpha=0.92, beta=0.9)
SPLICE_DEFAULTS = TrainingConfig(tau=0.8, alpha=0.9, beta=0.9)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    validation_da: float
    seconds: float


@dataclass
class TrainingRun:
    """Everything produced by :func:`train`.

    ``feasibility`` holds ``||kappa^dagger kappa - I||_F`` after every
    parameter update (and once for the initialization).
    """

    config: TrainingConfig
    arch: tuple
    rho0: np.ndarray
    initial_kappa: np.ndarray
    final_kappa: np.ndarray
    best_kappa: np.ndarray
    best_epoch: int = 0
    records: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def best_validation_da(self):
        return self.records[self.best_epoch].validation_da

    def model(self, which="best"):
        kappa = {"best": self.best_kappa, "final": self.final_kappa, "initial": self.initial_kappa}[which]
        n, s, w = self.arch
        return KHqmm.from_kappa(kappa, s, w, self.rho0)

    def trajectory(self):
        """Rows ``(epoch, loss, validation_da, seconds)``."""
        return [(r.epoch, r.loss, r.validation_da, r.seconds) for r in self.records]

    def to_dict(self):
        from .io import encode_array

        return {
            "config": asdict(self.config),
            "arch": list(self.arch),
            "best_epoch": self.best_epoch,
            "records": [asdict(r) for r in self.records],
            "feasibility": list(self.feasibility),
            "events": list(self.events),
            "rho0": encode_array(self.rho0),
            "initial_kappa": encode_array(self.initial_kappa),
            "final_kappa": encode_array(self.final_kappa),
            "best_kappa": encode_array(self.best_kappa),
        }

    @classmethod
    def from_dict(cls, d):
        from .io import decode_array

        return cls(
            config=TrainingConfig(**d["config"]),
            arch=tuple(d["arch"]),
            rho0=decode_array(d["rho0"]),
            initial_kappa=decode_array(d["initial_kappa"]),
            final_kappa=decode_array(d["final_kappa"]),
            best_kappa=decode_array(d["best_kappa"]),
            best_epoch=d["best_epoch"],
            records=[EpochRecord(**r) for r in d["records"]],
            feasibility=list(d["feasibility"]),
            events=list(d["events"]),
        )


def _score(kraus, rho0, sequences, burn_in):
    from .evaluation import description_accuracy

    model = KHqmm(kraus, rho0)
    return description_accuracy(model, sequences, burn_in).mean


def _update(kappa, direction, tau, scheme, events, where):
    step = wen_yin_retraction if scheme == "wen_yin" else projection_update
    for attempt in range(6):
        try:
            return step(kappa, direction, tau)
        except StepError as err:
            events.append(f"{where}: {err}; halving tau")
            log.warning("%s: %s; halving tau", where, err)
            tau = tau / 2
    events.append(f"{where}: skipped batch after 5 step-size reductions")
    log.warning("%s: skipped batch after 5 step-size reductions", where)
    return kappa


def train(data, arch, config=None, validation=None, init=None):
    """Fit an ``(n, s, w)`` K-HQMM to symbol sequences.

    Parameters
    ----------
    data : list of int arrays
        Training sequences.
    arch : tuple (n, s, w)
    config : TrainingConfig, optional
    validation : list of int arrays, optional
        Sequences scored by description accuracy after every epoch; the
        training data is scored when omitted.
    init : tuple (kappa, rho0), optional
        Starting point; drawn at random from ``config.seed`` otherwise.

    Returns
    -------
    TrainingRun
    """
    config = (config or TrainingConfig()).validate()
    n, s, w = arch
    data = [np.asarray(q, dtype=np.int64) for q in data]
    if not data:
        raise ConfigurationError("no training data")
    validation = data if validation is None else [np.asarray(q, dtype=np.int64) for q in validation]
    rng = _rng(config.seed)
    if init is None:
        kappa = random_stiefel(s * w * n, n, rng)
        rho0 = random_density(n, rng)
    else:
        kappa, rho0 = (np.asarray(a, dtype=complex) for a in init)
    shape = (s, w, n, n)

    start = time.perf_counter()
    run = TrainingRun(config, (n, s, w), rho0, kappa.copy(), kappa.copy(), kappa.copy())
    run.feasibility.append(stiefel_residual(kappa))
    init_loss = batch_loss(kappa.reshape(shape), rho0, data, config.burn_in)
    best_da = _score(kappa.reshape(shape), rho0, validation, config.burn_in)
    run.records.append(EpochRecord(0, float(init_loss), float(best_da), 0.0))

    tau = config.tau
    momentum = np.zeros_like(kappa)
    steps = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        batches = [order[i : i + config.batch_size] for i in range(0, len(order), config.batch_size)]
        if config.batches is not None:
            batches = batches[: config.batches]
        losses = []
        for b, idx in enumerate(batches):
            batch = [data[i] for i in idx]
            try:
                loss, G = conjugate_gradient(kappa.reshape(shape), rho0, batch, config.burn_in)
            except ZeroProbabilityError as err:
                bad = None if err.sequence_index is None else int(idx[err.sequence_index])
                raise ZeroProbabilityError(
                    f"epoch {epoch}, batch {b}, training sequence {bad}: {err}",
                    position=err.position,
                    symbol=err.symbol,
                    sequence_index=bad,
                ) from err
            losses.append(loss)
            direction, momentum = momentum_renorm(G.reshape(kappa.shape), momentum, config.beta)
            kappa = _update(kappa, direction, tau, config.update_scheme, run.events, f"epoch {epoch} batch {b}")
            steps += 1
            if steps % config.reortho_period == 0:
                drift = stiefel_residual(kappa)
                if drift > config.reortho_tol:
                    run.events.append(f"step {steps}: re-projected (drift {drift:.3e})")
                    kappa = polar_projection(kappa)
            run.feasibility.append(stiefel_residual(kappa))
        tau *= config.alpha
        da = _score(kappa.reshape(shape), rho0, validation, config.burn_in)
        run.records.append(
            EpochRecord(epoch, float(np.mean(losses)), float(da), time.perf_counter() - start)
        )
        if da > best_da:
            best_da = da
            run.best_epoch = epoch
            run.best_kappa = kappa.copy()
        log.info("epoch %d loss %.5f validation DA %.5f", epoch, np.mean(losses), da)
    run.final_kappa = kappa
    return run


# --------------------------------------------------------------------------
# Hyperband
# --------------------------------------------------------------------------

HYPERBAND_SCHEDULES = {
    27: [(27, 3), (9, 9), (3, 9), (1, 27)],
    9: [(9, 3), (3, 9), (1, 27)],
}


@dataclass
class HyperbandResult:
    best_run: TrainingRun
    best_config: TrainingConfig
    trials: list
    schedule: list


def _trial(args):
    data, arch, config, validation = args
    return train(data, arch, config, validation)


def hyperband_search(
    data,
    arch,
    validation,
    k=27,
    tau_range=(0.55, 0.95),
    alpha_range=(0.9, 0.99),
    base_config=None,
    schedule=None,
    seed=0,
    jobs=1,
):
    """Successive-thirds elimination over randomly sampled ``(tau, alpha)``.

    ``k`` configurations are drawn uniformly from the ranges.  Each round
    trains every surviving configuration from scratch for the round's epoch
    budget, ranks them by best validation DA and keeps the top third.  The
    configuration with the highest validation DA seen in any round wins.

    ``schedule`` overrides the built-in ``[(survivors, epochs), ...]`` plan;
    otherwise ``k`` must be 9 or 27.
    """
    base = base_config or TrainingConfig()
    if schedule is None:
        if k not in HYPERBAND_SCHEDULES:
            raise ConfigurationError(f"k must be one of {sorted(HYPERBAND_SCHEDULES)}, got {k}")
        schedule = HYPERBAND_SCHEDULES[k]
    if schedule[0][0] != k:
        raise ConfigurationError("schedule must start with k configurations")
    rng = _rng(seed)
    configs = [
        replace(
            base,
            tau=float(rng.uniform(*tau_range)),
            alpha=float(rng.uniform(*alpha_range)),
            seed=base.seed + i,
        )
        for i in range(k)
    ]
    alive = list(range(k))
    trials = []
    best = None
    for rnd, (survivors, epochs) in enumerate(schedule):
        alive = alive[:survivors]
        jobs_args = [(data, arch, replace(configs[i], epochs=epochs), validation) for i in alive]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                runs = list(pool.map(_trial, jobs_args))
        else:
            runs = [_trial(a) for a in jobs_args]
        scores = []
        for i, run in zip(alive, runs):
            score = run.best_validation_da
            scores.append(score)
            trials.append(
                {
                    "round": rnd,
                    "config_id": i,
                    "tau": configs[i].tau,
                    "alpha": configs[i].alpha,
                    "epochs": epochs,
                    "best_validation_da": score,
                }
            )
            if best is None or score > best[0]:
                best = (score, i, run)
        # stable sort keeps lower ids first on ties
        ranked = sorted(range(len(alive)), key=lambda j: -scores[j])
        alive = [alive[j] for j in ranked]
    _, best_id, best_run = best
    return HyperbandResult(best_run, best_run.config, trials, list(schedule))

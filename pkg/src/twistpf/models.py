"""Model instances: linear-Gaussian, finite-state, stochastic volatility.

Each parameter set builds a bootstrap-form Feynman-Kac model (potential =
observation density at the current index, mutation = state dynamics) via
``.fk()``. Exact references live here too: ``kalman_run`` for the
linear-Gaussian model and ``finite_forward`` for finite-state models, both
returning per-step prediction laws and the cumulative log marginal
likelihood. The two are implemented independently of the operator layer so
they can serve as oracles for it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fkcore import ARGaussianFK, FiniteFK
from .rng import SIMULATE, RngStream
from .windows import ObservationWindow

__all__ = [
    "LinearGaussianParams",
    "FiniteHMMParams",
    "SVParams",
    "LinearGaussianFK",
    "StochasticVolatilityFK",
    "simulate",
    "kalman_run",
    "finite_forward",
    "KalmanResult",
    "ForwardResult",
    "write_path_csv",
]


@dataclass(frozen=True)
class LinearGaussianParams:
    """X_{t+1} = a X_t + N(0, q), Y_t = X_t + N(0, r_obs).

    ``mu0_var=None`` selects the stationary initial law N(mu0_mean, q/(1-a^2)).
    """

    a: float
    q: float
    r_obs: float
    mu0_mean: float = 0.0
    mu0_var: float | None = None

    def __post_init__(self):
        if not self.q > 0 or not self.r_obs > 0:
            raise ValueError("q and r_obs must be > 0")
        if self.mu0_var is None and not abs(self.a) < 1:
            raise ValueError("stationary initial law needs |a| < 1")

    @property
    def init_var(self) -> float:
        if self.mu0_var is not None:
            return float(self.mu0_var)
        return self.q / (1.0 - self.a * self.a)

    def fk(self) -> "LinearGaussianFK":
        return LinearGaussianFK(self)


@dataclass(frozen=True)
class FiniteHMMParams:
    """Finite state space, finite observation alphabet.

    ``trans`` rows and ``mu0`` must be probability vectors; ``emit`` rows are
    per-state distributions over symbols and must be strictly positive.
    """

    mu0: np.ndarray
    trans: np.ndarray
    emit: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu0", np.asarray(self.mu0, dtype=float))
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=float))
        object.__setattr__(self, "emit", np.asarray(self.emit, dtype=float))
        FiniteFK(self.mu0, self.trans, self.emit)  # validates

    @property
    def k(self) -> int:
        return self.mu0.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emit.shape[1]

    @property
    def is_mixing(self) -> bool:
        return bool((self.trans > 0).all())

    def fk(self) -> FiniteFK:
        return FiniteFK(self.mu0, self.trans, self.emit)


@dataclass(frozen=True)
class SVParams:
    """Log-volatility AR(1): X_{t+1} = persistence * X_t + N(0, vol_of_vol^2),
    Y_t = scale * exp(X_t / 2) * N(0, 1)."""

    persistence: float = 0.975
    vol_of_vol: float = 0.16
    scale: float = 0.63

    def __post_init__(self):
        if not abs(self.persistence) < 1:
            raise ValueError("persistence must satisfy |rho| < 1")
        if not self.vol_of_vol > 0 or not self.scale > 0:
            raise ValueError("vol_of_vol and scale must be > 0")

    @property
    def state_var(self) -> float:
        return self.vol_of_vol**2

    @property
    def init_var(self) -> float:
        return self.state_var / (1.0 - self.persistence**2)

    def fk(self) -> "StochasticVolatilityFK":
        return StochasticVolatilityFK(self)


class LinearGaussianFK(ARGaussianFK):
    """Bootstrap-form model for :class:`LinearGaussianParams`."""

    def __init__(self, params: LinearGaussianParams):
        super().__init__(params.a, params.q, params.mu0_mean, params.init_var)
        self.r_obs = float(params.r_obs)
        self.params = params

    def log_g(self, window, t, x):
        y = float(window.y(t, context="potential evaluation"))
        x = np.asarray(x, dtype=float)
        return -0.5 * (np.log(2.0 * np.pi * self.r_obs) + (y - x) ** 2 / self.r_obs)


class StochasticVolatilityFK(ARGaussianFK):
    """Bootstrap-form model for :class:`SVParams`."""

    def __init__(self, params: SVParams):
        super().__init__(params.persistence, params.state_var, 0.0, params.init_var)
        self.obs_scale2 = float(params.scale) ** 2
        self.params = params

    def log_g(self, window, t, x):
        y = float(window.y(t, context="potential evaluation"))
        x = np.asarray(x, dtype=float)
        return -0.5 * (
            np.log(2.0 * np.pi * self.obs_scale2) + x + y * y * np.exp(-x) / self.obs_scale2
        )


def simulate(params, n: int, seed: int, replicate: int = 0):
    """Simulate ``n`` steps of the state and observation path.

    Returns ``(x, window)`` where ``x`` has shape ``(n,)`` and the window has
    origin 0 and length ``n``. Callers needing lookahead simply request more
    steps. Deterministic in ``(seed, replicate)``.
    """
    gen = RngStream(seed, replicate).generator(0, SIMULATE)
    if isinstance(params, FiniteHMMParams):
        x = np.empty(n, dtype=np.int64)
        y = np.empty(n, dtype=np.int64)
        cdf_mu = np.cumsum(params.mu0)
        cdf_trans = np.cumsum(params.trans, axis=1)
        cdf_emit = np.cumsum(params.emit, axis=1)
        for c in (cdf_mu, cdf_trans.T, cdf_emit.T):
            c[-1] = 1.0
        state = int(np.searchsorted(cdf_mu, gen.random(), side="right"))
        for t in range(n):
            x[t] = state
            y[t] = np.searchsorted(cdf_emit[state], gen.random(), side="right")
            state = int(np.searchsorted(cdf_trans[state], gen.random(), side="right"))
        return x, ObservationWindow(0, y)
    if isinstance(params, LinearGaussianParams):
        x = np.empty(n, dtype=float)
        state = params.mu0_mean + np.sqrt(params.init_var) * gen.standard_normal()
        sq = np.sqrt(params.q)
        for t in range(n):
            x[t] = state
            state = params.a * state + sq * gen.standard_normal()
        y = x + np.sqrt(params.r_obs) * gen.standard_normal(n)
        return x, ObservationWindow(0, y)
    if isinstance(params, SVParams):
        x = np.empty(n, dtype=float)
        state = np.sqrt(params.init_var) * gen.standard_normal()
        sq = params.vol_of_vol
        for t in range(n):
            x[t] = state
            state = params.persistence * state + sq * gen.standard_normal()
        y = params.scale * np.exp(x / 2.0) * gen.standard_normal(n)
        return x, ObservationWindow(0, y)
    raise TypeError(f"cannot simulate from {type(params).__name__}")


@dataclass
class KalmanResult:
    mean: np.ndarray      # prediction mean per step, shape (n+1,)
    var: np.ndarray       # prediction variance per step, shape (n+1,)
    log_z: np.ndarray     # cumulative log marginal likelihood, shape (n+1,)


@dataclass
class ForwardResult:
    pred: np.ndarray      # prediction law per step, shape (n+1, k)
    log_z: np.ndarray     # cumulative log marginal likelihood, shape (n+1,)


def kalman_run(params: LinearGaussianParams, window, n: int) -> KalmanResult:
    """Exact filter for the linear-Gaussian model over indices ``0..n-1``."""
    window.require(0, n - 1, context="kalman_run")
    mean = np.empty(n + 1)
    var = np.empty(n + 1)
    log_z = np.zeros(n + 1)
    m, v = params.mu0_mean, params.init_var
    a, q, r = params.a, params.q, params.r_obs
    for t in range(n):
        mean[t], var[t] = m, v
        y = float(window.y(t))
        s = v + r
        log_z[t + 1] = log_z[t] - 0.5 * (np.log(2.0 * np.pi * s) + (y - m) ** 2 / s)
        gain = v / s
        m_post = m + gain * (y - m)
        v_post = v * (1.0 - gain)
        m, v = a * m_post, a * a * v_post + q
    mean[n], var[n] = m, v
    return KalmanResult(mean, var, log_z)


def finite_forward(params: FiniteHMMParams, window, n: int) -> ForwardResult:
    """Exact forward pass for a finite model over indices ``0..n-1``.

    Direct alpha recursion on the prediction law, independent of the operator
    layer in :mod:`twistpf.fkcore`.
    """
    window.require(0, n - 1, context="finite_forward")
    k = params.k
    pred = np.empty((n + 1, k))
    log_z = np.zeros(n + 1)
    alpha = params.mu0.copy()
    for t in range(n):
        pred[t] = alpha
        y = int(window.y(t))
        weighted = alpha * params.emit[:, y]
        norm = weighted.sum()
        if not norm > 0:
            raise ValueError(f"zero likelihood at step {t}")
        log_z[t + 1] = log_z[t] + np.log(norm)
        alpha = (weighted / norm) @ params.trans
        alpha = alpha / alpha.sum()
    pred[n] = alpha
    return ForwardResult(pred, log_z)


def write_path_csv(path, x, window) -> None:
    """Write a simulated path as CSV with columns ``t, x, y``."""
    x = np.asarray(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y"])
        for i in range(x.shape[0]):
            t = window.origin + i
            w.writerow([t, x[i], window.values[i]])

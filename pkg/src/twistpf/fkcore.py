"""Core Feynman-Kac abstractions.

A model couples an initial law ``mu0``, a mutation kernel ``M`` and a strictly
positive potential ``G``, all indexed by absolute time through an observation
window. The one-step unnormalized operator is

    Q_t(phi)(x) = G_t(x) * integral M_t(x, dz) phi(z),

and ``phi_map`` is the associated normalized map on laws: it propagates a
prediction law one step and returns the log normalizer ``log mu(G_t)``.
Composing the normalizers over ``n`` steps yields the marginal likelihood of
the first ``n`` observations.

Exact operator evaluations are available for finite-state models (dense
matrices) and, through ``phi_map``, for linear-Gaussian models (closed-form
Gaussian propagation).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "DistributionVector",
    "FKModel",
    "FiniteFK",
    "ARGaussianFK",
    "q_apply",
    "q_apply_log",
    "phi_map",
]

_PROB_TOL = 1e-12


class DistributionVector:
    """A validated law on the state space: finite probability vector or Gaussian."""

    __slots__ = ("kind", "probs", "mean", "var")

    def __init__(self, kind, probs=None, mean=None, var=None):
        self.kind = kind
        self.probs = probs
        self.mean = mean
        self.var = var

    @classmethod
    def finite(cls, probs) -> "DistributionVector":
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("probability vector must be one-dimensional")
        if (p < 0).any():
            raise ValueError("probability vector has negative entries")
        s = p.sum()
        if abs(s - 1.0) > _PROB_TOL:
            raise ValueError(f"probability vector sums to {s!r}, not 1")
        p = p / s
        p.flags.writeable = False
        return cls("finite", probs=p)

    @classmethod
    def gaussian(cls, mean: float, var: float) -> "DistributionVector":
        if not var > 0:
            raise ValueError(f"gaussian law needs variance > 0, got {var!r}")
        return cls("gaussian", mean=float(mean), var=float(var))

    def __repr__(self):
        if self.kind == "finite":
            return f"DistributionVector(finite, k={self.probs.shape[0]})"
        return f"DistributionVector(gaussian, mean={self.mean}, var={self.var})"


class FKModel:
    """Base class: initial sampler, potential and mutation sampler.

    ``lookahead`` declares how many observation indices beyond the current
    step the potential reads; runners validate window coverage up front.
    """

    lookahead = 0

    def sample_initial(self, size: int, gen: np.random.Generator):
        raise NotImplementedError("subclass must implement sample_initial")

    def log_g(self, window, t: int, x):
        """log G_t at the particle positions ``x`` (vectorized)."""
        raise NotImplementedError("subclass must implement log_g")

    def sample_mutation(self, window, t: int, x, gen: np.random.Generator):
        """One draw from M_t(x_i, .) for each position in ``x``."""
        raise NotImplementedError("subclass must implement sample_mutation")


class FiniteFK(FKModel):
    """Finite-state model: categorical initial law, constant transition matrix,
    potential given by an emission table indexed by the observed symbol."""

    def __init__(self, mu0, trans, emit):
        mu0 = np.asarray(mu0, dtype=float)
        trans = np.asarray(trans, dtype=float)
        emit = np.asarray(emit, dtype=float)
        k = mu0.shape[0]
        if trans.shape != (k, k):
            raise ValueError(f"transition matrix shape {trans.shape} != ({k}, {k})")
        if emit.ndim != 2 or emit.shape[0] != k:
            raise ValueError("emission table must have one row per state")
        if (emit <= 0).any():
            raise ValueError("emission probabilities must be strictly positive")
        if np.abs(trans.sum(axis=1) - 1.0).max() > _PROB_TOL:
            raise ValueError("transition matrix rows must sum to 1")
        if abs(mu0.sum() - 1.0) > _PROB_TOL or (mu0 < 0).any():
            raise ValueError("mu0 must be a probability vector")
        for a in (mu0, trans, emit):
            a.flags.writeable = False
        self.mu0 = mu0
        self.trans = trans
        self.emit = emit
        self.log_trans = np.log(np.where(trans > 0, trans, 1e-300))
        self.log_emit = np.log(emit)
        self.k = k
        self.n_symbols = emit.shape[1]

    def trans_matrix(self, window, t: int) -> np.ndarray:
        return self.trans

    def log_g_grid(self, window, t: int) -> np.ndarray:
        """log G_t over the full state grid ``0..k-1``."""
        y = int(window.y(t, context="potential evaluation"))
        return self.log_emit[:, y]

    def log_g(self, window, t: int, x):
        return self.log_g_grid(window, t)[np.asarray(x, dtype=np.int64)]

    def sample_initial(self, size: int, gen) -> np.ndarray:
        cdf = np.cumsum(self.mu0)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, gen.random(size), side="right").astype(np.int64)

    def sample_mutation(self, window, t: int, x, gen) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        rows = np.cumsum(self.trans[x], axis=1)
        rows[:, -1] = 1.0
        u = gen.random(x.shape[0])
        return (rows < u[:, None]).sum(axis=1).astype(np.int64)


class ARGaussianFK(FKModel):
    """Scalar AR(1) state dynamics: X_{t+1} = a X_t + N(0, q)."""

    def __init__(self, a, q, mu0_mean, mu0_var):
        if not q > 0:
            raise ValueError("state noise variance q must be > 0")
        if not mu0_var > 0:
            raise ValueError("initial variance must be > 0")
        self.a = float(a)
        self.q = float(q)
        self.mu0_mean = float(mu0_mean)
        self.mu0_var = float(mu0_var)

    def sample_initial(self, size: int, gen) -> np.ndarray:
        return self.mu0_mean + np.sqrt(self.mu0_var) * gen.standard_normal(size)

    def sample_mutation(self, window, t: int, x, gen) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a * x + np.sqrt(self.q) * gen.standard_normal(x.shape[0])


def q_apply(model: FiniteFK, window, t: int, phi) -> np.ndarray:
    """Exact one-step operator on a finite grid: ``G_t * (M_t @ phi)``."""
    if not isinstance(model, FiniteFK):
        raise TypeError("q_apply is exact only for finite-state models")
    phi = np.asarray(phi, dtype=float)
    g = np.exp(model.log_g_grid(window, t))
    return g * (model.trans_matrix(window, t) @ phi)


def q_apply_log(model: FiniteFK, window, t: int, log_phi) -> np.ndarray:
    """Log-domain version of :func:`q_apply` for long compositions."""
    if not isinstance(model, FiniteFK):
        raise TypeError("q_apply_log is exact only for finite-state models")
    log_phi = np.asarray(log_phi, dtype=float)
    lt = model.log_trans + log_phi[None, :]
    return model.log_g_grid(window, t) + logsumexp(lt, axis=1)


def phi_map(model: FKModel, window, t: int, dist: DistributionVector):
    """Propagate a prediction law one step: returns ``(new law, log normalizer)``.

    The normalizer is ``log mu(G_t)``; summed over steps it reproduces the
    log marginal likelihood. Exact for finite-state models and for
    linear-Gaussian models (where it is one filter recursion step).
    """
    if isinstance(model, FiniteFK):
        if dist.kind != "finite":
            raise TypeError("finite model needs a finite law")
        g = np.exp(model.log_g_grid(window, t))
        weighted = dist.probs * g
        norm = weighted.sum()
        if not norm > 0:
            raise ValueError("potential annihilated the law")
        nxt = weighted @ model.trans_matrix(window, t) / norm
        return DistributionVector.finite(nxt / nxt.sum()), float(np.log(norm))
    if hasattr(model, "r_obs"):
        if dist.kind != "gaussian":
            raise TypeError("linear-Gaussian model needs a gaussian law")
        a, q, r = model.a, model.q, model.r_obs
        y = float(window.y(t, context="filter recursion"))
        s = dist.var + r
        log_norm = -0.5 * (np.log(2.0 * np.pi * s) + (y - dist.mean) ** 2 / s)
        gain = dist.var / s
        m_post = dist.mean + gain * (y - dist.mean)
        v_post = dist.var * (1.0 - gain)
        return DistributionVector.gaussian(a * m_post, a * a * v_post + q), float(log_norm)
    raise TypeError(
        "phi_map is exact only for finite-state or linear-Gaussian models"
    )

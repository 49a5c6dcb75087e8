"""Particle algorithms: bootstrap, twisted, auxiliary, sequential importance sampling.

All runs share conventions:

* Multinomial resampling at every step, fixed particle count.
* Log-domain estimators. The normalizing-constant increment at step ``p``
  uses the potential at observation index ``p - 1``; ``log_z[0] = 0``.
* Random draws come from counter-based streams (see :mod:`twistpf.rng`);
  within a step the consumption order is resample indices, mutation draws in
  particle order, then twist-specific draws. Identical ``(seed, replicate)``
  reproduces a bitwise-identical :class:`RunTrace`.

The twisted run follows the product-space construction: at each step one
uniformly chosen slot is replaced by a draw whose ancestor is selected
proportionally to Q_t(psi_{t+1}) and mutated from the psi-reweighted kernel;
the reported estimator multiplies the standard one by the per-step ratio
``phi_p`` (recorded in ``log_phi``), keeping it unbiased for the marginal
likelihood for any strictly positive bounded psi.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fkcore import FiniteFK, FKModel
from .models import StochasticVolatilityFK
from .resampling import multinomial_resample
from .rng import INIT, MUTATE, RESAMPLE, TWIST, RngStream
from .twists import TwistFunction

__all__ = [
    "RunTrace",
    "bootstrap_run",
    "twisted_run",
    "apf_run",
    "sis_run",
    "default_test_functions",
    "write_runtrace_csv",
]


@dataclass
class RunTrace:
    """Per-step record of one particle run.

    ``log_z[p]`` is the log normalizing-constant estimate after ``p`` steps,
    ``log_phi[p]`` the log of the twist correction factor at step ``p`` (zero
    for untwisted runs), ``eta[name][p]`` the unweighted empirical mean of a
    registered test function. ``gamma(name)`` returns the unnormalized-measure
    estimate ``eta * exp(log_z)``; for long horizons read it in log domain
    instead (it underflows deliberately rather than silently rescaling).
    """

    n_steps: int
    n_particles: int
    log_z: np.ndarray
    log_phi: np.ndarray
    eta: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)

    def gamma(self, name: str) -> np.ndarray:
        return self.eta[name] * np.exp(self.log_z)


def default_test_functions(model: FKModel) -> dict:
    """Bounded test functions registered by default."""
    if isinstance(model, FiniteFK):
        return {
            "id": lambda s: np.asarray(s, dtype=float),
            "is0": lambda s: (np.asarray(s) == 0).astype(float),
        }
    if isinstance(model, StochasticVolatilityFK):
        return {
            "id": lambda x: np.clip(np.asarray(x, dtype=float), -8.0, 8.0),
            "neg": lambda x: (np.asarray(x) <= 0.0).astype(float),
        }
    return {
        "id": lambda x: np.asarray(x, dtype=float),
        "neg": lambda x: (np.asarray(x) <= 0.0).astype(float),
    }


def _logmeanexp(v: np.ndarray) -> float:
    m = v.max()
    if not np.isfinite(m):
        raise ValueError("all log values are -inf")
    return float(m) + math.log(float(np.add.reduce(np.exp(v - m))) / v.size)


def _record(eta, tf, p, pos):
    for name, fn in tf.items():
        eta[name][p] = float(np.mean(fn(pos)))


def bootstrap_run(
    model: FKModel,
    window,
    n_steps: int,
    n_particles: int,
    seed: int,
    replicate: int = 0,
    test_functions: dict | None = None,
    initial=None,
) -> RunTrace:
    """Standard resample-mutate particle run under the model's own dynamics."""
    if n_steps > 0:
        window.require(0, n_steps - 1, context="bootstrap_run")
    tf = default_test_functions(model) if test_functions is None else test_functions
    stream = RngStream(seed, replicate).session()
    if initial is None:
        pos = model.sample_initial(n_particles, stream.generator(0, INIT))
    else:
        pos = np.array(initial)
    pos0 = pos.copy()
    log_z = np.zeros(n_steps + 1)
    log_phi = np.zeros(n_steps + 1)
    eta = {name: np.zeros(n_steps + 1) for name in tf}
    _record(eta, tf, 0, pos)
    for p in range(1, n_steps + 1):
        t = p - 1
        lg = model.log_g(window, t, pos)
        log_z[p] = log_z[p - 1] + _logmeanexp(lg)
        anc = multinomial_resample(lg, n_particles, stream.generator(p, RESAMPLE))
        pos = model.sample_mutation(window, t, pos[anc], stream.generator(p, MUTATE))
        _record(eta, tf, p, pos)
    return RunTrace(
        n_steps, n_particles, log_z, log_phi, eta,
        aux={"initial_positions": pos0, "final_positions": pos},
    )


def twisted_run(
    model: FKModel,
    twist: TwistFunction,
    window,
    n_steps: int,
    n_particles: int,
    seed: int,
    replicate: int = 0,
    test_functions: dict | None = None,
    initial=None,
) -> RunTrace:
    """Particle run under the psi-twisted sampling law.

    ``log_z`` estimates the same marginal likelihood as the bootstrap run;
    ``aux['log_z_standard']`` keeps the uncorrected functional so that
    ``log_z == log_z_standard + cumsum(log_phi)`` holds within rounding.
    """
    if n_steps > 0:
        window.require(0, n_steps - 1 + twist.lookahead, context="twisted_run")
    tf = default_test_functions(model) if test_functions is None else test_functions
    stream = RngStream(seed, replicate).session()
    if initial is None:
        pos = model.sample_initial(n_particles, stream.generator(0, INIT))
    else:
        pos = np.array(initial)
    pos0 = pos.copy()
    log_z = np.zeros(n_steps + 1)
    log_z_std = np.zeros(n_steps + 1)
    log_phi = np.zeros(n_steps + 1)
    eta = {name: np.zeros(n_steps + 1) for name in tf}
    _record(eta, tf, 0, pos)
    for p in range(1, n_steps + 1):
        t = p - 1
        lg = model.log_g(window, t, pos)
        lq = twist.log_q_psi(window, t, pos)
        std_inc = _logmeanexp(lg)
        anc = multinomial_resample(lg, n_particles, stream.generator(p, RESAMPLE))
        new = model.sample_mutation(window, t, pos[anc], stream.generator(p, MUTATE))
        gen_tw = stream.generator(p, TWIST)
        slot = int(gen_tw.integers(n_particles))
        a_idx = int(multinomial_resample(lq, 1, gen_tw)[0])
        new[slot] = twist.sample_twisted_mutation(
            window, t, pos[a_idx : a_idx + 1], gen_tw
        )[0]
        lp = twist.log_psi(window, p, new)
        inc = _logmeanexp(lq) - _logmeanexp(lp)
        log_z[p] = log_z[p - 1] + inc
        log_z_std[p] = log_z_std[p - 1] + std_inc
        log_phi[p] = inc - std_inc
        pos = new
        _record(eta, tf, p, pos)
    return RunTrace(
        n_steps, n_particles, log_z, log_phi, eta,
        aux={
            "log_z_standard": log_z_std,
            "initial_positions": pos0,
            "final_positions": pos,
        },
    )


def apf_run(
    model: FKModel,
    weight: TwistFunction,
    window,
    n_steps: int,
    n_particles: int,
    seed: int,
    replicate: int = 0,
    test_functions: dict | None = None,
) -> RunTrace:
    """Auxiliary particle run: the model is transformed by a strictly positive
    lookahead weight ``r`` (a twist object supplying its integrals in closed
    form), and the estimator is corrected by the initial integral ``mu0(r)``
    and the terminal mean of ``1/r`` so it stays unbiased for the marginal
    likelihood.

    ``eta`` records plain empirical means of the transformed cloud;
    ``aux['filter_est_<name>']`` records the 1/r-weighted estimates that
    target the prediction filter of the original model.
    """
    look = weight.lookahead
    if n_steps > 0:
        window.require(0, n_steps - 1 + look, context="apf_run")
    elif look > 0:
        window.require(0, look - 1, context="apf_run")
    tf = default_test_functions(model) if test_functions is None else test_functions
    stream = RngStream(seed, replicate).session()
    pos = weight.sample_twisted_initial(window, n_particles, stream.generator(0, INIT))
    log_mu0_w = weight.log_mu0_psi(window)
    log_z = np.zeros(n_steps + 1)
    log_phi = np.zeros(n_steps + 1)
    eta = {name: np.zeros(n_steps + 1) for name in tf}
    est = {name: np.zeros(n_steps + 1) for name in tf}
    _record(eta, tf, 0, pos)

    def weighted_estimates(p, lr_vals):
        w = np.exp(-(lr_vals - lr_vals.min()))
        w_sum = w.sum()
        for name, fn in tf.items():
            est[name][p] = float(np.sum(fn(pos) * w) / w_sum)

    weighted_estimates(0, weight.log_psi(window, 0, pos))
    cum_g = 0.0
    for p in range(1, n_steps + 1):
        t = p - 1
        lr = weight.log_psi(window, t, pos)
        lq = weight.log_q_psi(window, t, pos)
        lg_eff = lq - lr
        cum_g += _logmeanexp(lg_eff)
        anc = multinomial_resample(lg_eff, n_particles, stream.generator(p, RESAMPLE))
        pos = weight.sample_twisted_mutation(
            window, t, pos[anc], stream.generator(p, MUTATE)
        )
        lr_new = weight.log_psi(window, p, pos)
        log_z[p] = log_mu0_w + _logmeanexp(-lr_new) + cum_g
        _record(eta, tf, p, pos)
        weighted_estimates(p, lr_new)
    aux = {"log_mu0_weight": log_mu0_w, "final_positions": pos}
    for name in tf:
        aux[f"filter_est_{name}"] = est[name]
    return RunTrace(n_steps, n_particles, log_z, log_phi, eta, aux=aux)


def sis_run(
    model: FKModel,
    window,
    n_steps: int,
    n_chains: int,
    seed: int,
    replicate: int = 0,
    proposal: TwistFunction | None = None,
    test_functions: dict | None = None,
) -> RunTrace:
    """Sequential importance sampling: independent single-particle chains, no
    interaction. With no proposal the chains follow the model dynamics and the
    weights are running potential products; with a twist proposal the chains
    follow the reweighted kernel and carry the corrected weights.

    ``log_z[p]`` is the log of the arithmetic weight mean;
    ``aux['chain_log_weights']`` has shape ``(n_steps + 1, n_chains)``;
    ``aux['selfnorm_<name>']`` records self-normalized estimates.
    """
    look = proposal.lookahead if proposal is not None else 0
    if n_steps > 0:
        window.require(0, n_steps - 1 + look, context="sis_run")
    tf = default_test_functions(model) if test_functions is None else test_functions
    stream = RngStream(seed, replicate).session()
    pos = model.sample_initial(n_chains, stream.generator(0, INIT))
    logw = np.zeros(n_chains)
    chain_lw = np.zeros((n_steps + 1, n_chains))
    log_z = np.zeros(n_steps + 1)
    selfnorm = {name: np.zeros(n_steps + 1) for name in tf}
    for name, fn in tf.items():
        selfnorm[name][0] = float(np.mean(fn(pos)))
    for p in range(1, n_steps + 1):
        t = p - 1
        gen_mu = stream.generator(p, MUTATE)
        if proposal is None:
            logw = logw + model.log_g(window, t, pos)
            pos = model.sample_mutation(window, t, pos, gen_mu)
        else:
            inc = proposal.log_q_psi(window, t, pos)
            pos = proposal.sample_twisted_mutation(window, t, pos, gen_mu)
            logw = logw + inc - proposal.log_psi(window, p, pos)
        chain_lw[p] = logw
        log_z[p] = _logmeanexp(logw)
        w = np.exp(logw - logw.max())
        for name, fn in tf.items():
            selfnorm[name][p] = float(np.sum(fn(pos) * w) / w.sum())
    aux = {"chain_log_weights": chain_lw, "final_positions": pos}
    for name in tf:
        aux[f"selfnorm_{name}"] = selfnorm[name]
    return RunTrace(n_steps, n_chains, log_z, np.zeros(n_steps + 1), eta={}, aux=aux)


def write_runtrace_csv(trace: RunTrace, path) -> None:
    """Columns: ``n, log_Z, log_phi, eta_phi_<name>, gamma_phi_<name>``."""
    names = sorted(trace.eta)
    header = ["n", "log_Z", "log_phi"]
    header += [f"eta_phi_{n}" for n in names]
    header += [f"gamma_phi_{n}" for n in names]
    gam = {n: trace.gamma(n) for n in names}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p in range(trace.n_steps + 1):
            row = [p, repr(float(trace.log_z[p])), repr(float(trace.log_phi[p]))]
            row += [repr(float(trace.eta[n][p])) for n in names]
            row += [repr(float(gam[n][p])) for n in names]
            w.writerow(row)

"""
Finite-difference checks of the objective gradient on random problems.
"""

from dataclasses import dataclass

import numpy as np

from . import objective
from .dataset import MultiViewDataset
from .gp_view import ViewHyperparams, nll_grad
from .objective import ObjectiveState, TradeoffParams

A_CHOICES = (0.0, 0.3, 0.5, 1.0)
B_CHOICES = (0.0, 2.0 ** -8, 2.0, 2.0 ** 8)


def central_difference(fun, x, h=1e-5):
    """Central-difference gradient of the scalar function `fun` at `x`."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def relative_error(g, ref, floor=1e-6):
    """Elementwise ``|g - ref| / max(|g|, |ref|, floor)``."""
    g, ref = np.asarray(g), np.asarray(ref)
    return np.abs(g - ref) / np.maximum(np.maximum(np.abs(g), np.abs(ref)), floor)


def random_problem(rng, n_points, dims, a=None, b=None, restricted=False):
    """
    Random multi-view problem: Gaussian features, balanced random labels,
    hyperparameters drawn from [-1, 1] in the log domain. Two views use the
    scalar (a, b) form; more views get random simplex weights and couplings
    drawn from `B_CHOICES`.
    """
    y = np.where(rng.random(n_points) < 0.5, 1.0, -1.0)
    views = tuple(rng.standard_normal((n_points, d)) for d in dims)
    data = MultiViewDataset(views, y)
    k = len(dims)
    if k == 2:
        a = rng.choice(A_CHOICES) if a is None else a
        b = rng.choice(B_CHOICES) if b is None else b
        tradeoff = TradeoffParams.two_view(float(a), float(b))
    else:
        w = rng.dirichlet(np.ones(k))
        w[-1] = 1.0 - w[:-1].sum()
        B = rng.choice(B_CHOICES, size=(k, k))
        tradeoff = TradeoffParams(tuple(w), B)
    hps = [ViewHyperparams.from_vector(rng.uniform(-1.0, 1.0, 3)) for _ in dims]
    T = None
    if restricted:
        m = int(rng.integers(2, n_points))
        T = tuple(sorted(rng.choice(n_points, size=m, replace=False).tolist()))
    return ObjectiveState(hps, tradeoff, T), data


@dataclass
class CheckResult:
    seed: int
    a: float
    b: float
    fd_error: float
    closed_form_error: float
    coupling_zero: bool


def check_instance(state, data, grad_fn=objective.grad, h=1e-5):
    """Max relative error of `grad_fn` against central differences."""
    g = grad_fn(state, data)
    fd = central_difference(
        lambda v: objective.evaluate(state.with_vector(v), data), state.to_vector(), h)
    return float(np.max(relative_error(g, fd))), g


def run_gradcheck(seeds=20, n_points=8, dims=(3, 4), grad_fn=objective.grad):
    """
    Check `grad_fn` on `seeds` random two-view problems. Seed 0 always uses
    b = 0 so the decoupled case is covered.

    For each problem the log-sf derivative of view 1 is also compared with
    `objective.closed_form_sf_grad` (coupling factor 1/4).
    """
    results = []
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        state, data = random_problem(rng, n_points, dims,
                                     b=0.0 if seed == 0 else None)
        fd_err, g = check_instance(state, data, grad_fn)
        cf = objective.closed_form_sf_grad(state, data, coupling_factor=0.25)
        cf_err = float(relative_error(g[0], cf))
        zero = True
        if state.tradeoff.b == 0.0:
            weighted = np.zeros_like(g)
            for k, w in enumerate(state.tradeoff.weights):
                if w:
                    weighted[3 * k:3 * k + 3] = w * nll_grad(
                        state.view_hps[k], data.views[k], data.labels)
            zero = bool(np.all(g - weighted == 0.0))
        results.append(CheckResult(seed, state.tradeoff.a, state.tradeoff.b,
                                   fd_err, cf_err, zero))
    return results

"""Gradient-free optimizers over bounded parameter boxes.

Three strategies cover the reconstruction workloads:

* cma_es        - full covariance matrix adaptation (rank-one + rank-mu
                  updates, cumulative step-size control) with projection
                  repair for box constraints and restarts within budget.
* powell        - scipy's modified Powell direction-set method (Brent /
                  golden line minimization over the feasible segment).
* basin_hopping - uniform perturbations + a local phase + Metropolis
                  acceptance; the local phase defaults to Nelder-Mead and
                  may be switched to a gradient-based method, which marks
                  the configuration as requiring a smooth objective.

All three return a FitReport whose loss trace records the best value seen
at each improving evaluation index, so the trace is non-increasing by
construction. Budgets count objective evaluations, not iterations.
"""

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import optimize as sciopt

from .errors import ConfigError, ContractError, DomainError


@dataclass(frozen=True)
class ParamSpace:
    """Box [a_1,b_1] x ... x [a_n,b_n] with names and a smoothness flag."""

    bounds: tuple
    names: tuple = None
    smooth: bool = True

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if any(a >= b for a, b in bounds):
            raise ConfigError("every bound must satisfy a < b")
        object.__setattr__(self, "bounds", bounds)
        if self.names is None:
            object.__setattr__(
                self, "names", tuple(f"p{i}" for i in range(len(bounds)))
            )
        elif len(self.names) != len(bounds):
            raise ConfigError("one name per dimension")

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def lows(self):
        return np.array([a for a, _ in self.bounds])

    @property
    def highs(self):
        return np.array([b for _, b in self.bounds])

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lows, self.highs)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lows) and np.all(x <= self.highs))

    def spans(self):
        return self.highs - self.lows


@dataclass
class FitReport:
    """Outcome of one optimization run."""

    phi_hat: np.ndarray = None
    loss_trace: list = dc_field(default_factory=list)  # (eval_index, best_loss)
    val_error: float = None
    wall_seconds: float = 0.0
    evals: int = 0
    converged: bool = False
    status: str = "ok"  # "ok" | "budget_exhausted" | "unsupported"
    message: str = ""

    def to_dict(self):
        return {
            "phi_hat": None if self.phi_hat is None else list(map(float, self.phi_hat)),
            "loss_trace": [[int(i), float(v)] for i, v in self.loss_trace],
            "val_error": self.val_error,
            "wall_seconds": self.wall_seconds,
            "evals": self.evals,
            "converged": self.converged,
            "status": self.status,
            "message": self.message,
        }


class _TracingLoss:
    """Wraps a loss with evaluation counting, best-so-far tracking, and a
    hard budget (raises _BudgetExhausted past it)."""

    def __init__(self, loss, budget):
        self.loss = loss
        self.budget = budget
        self.evals = 0
        self.best = np.inf
        self.best_x = None
        self.trace = []

    def __call__(self, x):
        if self.evals >= self.budget:
            raise _BudgetExhausted()
        self.evals += 1
        v = float(self.loss(np.asarray(x, dtype=float)))
        if v < self.best:
            self.best = v
            self.best_x = np.array(x, dtype=float)
            self.trace.append((self.evals, v))
        return v


class _BudgetExhausted(Exception):
    pass


def _finish(tl, space, started, converged, message=""):
    status = "ok" if converged else "budget_exhausted"
    phi = tl.best_x if tl.best_x is not None else None
    if phi is not None:
        phi = space.clip(phi)
    return FitReport(
        phi_hat=phi,
        loss_trace=tl.trace,
        wall_seconds=time.perf_counter() - started,
        evals=tl.evals,
        converged=converged,
        status=status,
        message=message,
    )


# ---------------------------------------------------------------------------
# CMA-ES


def _cma_weights(lam):
    mu = lam // 2
    w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w**2)
    return w, mu, mu_eff


def _cma_run(tl, space, m, sigma, lam, rng, f_target, sigma_stop, stale_limit):
    """One CMA-ES run; returns a stop reason in
    {"budget", "ftarget", "collapsed", "stale"}."""
    n = space.dim
    w, mu, mu_eff = _cma_weights(lam)
    cs = (mu_eff + 2) / (n + mu_eff + 5)
    ds = 1 + 2 * max(0.0, np.sqrt((mu_eff - 1) / (n + 1)) - 1) + cs
    cc = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1 - c1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    ps = np.zeros(n)
    pc = np.zeros(n)
    C = np.eye(n)
    B, D = np.eye(n), np.ones(n)
    eig_stale = 0
    run_best = np.inf
    stale = 0

    while True:
        eig_stale += 1
        if eig_stale >= max(1, int(1 / ((c1 + cmu) * n * 10))):
            C = (C + C.T) / 2
            vals, B = np.linalg.eigh(C)
            D = np.sqrt(np.maximum(vals, 1e-30))
            eig_stale = 0

        z = rng.standard_normal((lam, n))
        y = z * D @ B.T  # rows: B (D z)
        x = m + sigma * y
        x_rep = np.clip(x, space.lows, space.highs)
        try:
            f = np.array([tl(xi) for xi in x_rep])
        except _BudgetExhausted:
            return "budget"
        order = np.argsort(f)
        xw = x_rep[order[:mu]]
        yw = (xw - m) / sigma

        m_new = w @ xw
        y_mean = (m_new - m) / sigma
        c_inv_half = B @ np.diag(1.0 / D) @ B.T
        ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mu_eff) * (c_inv_half @ y_mean)
        h_sig = float(
            np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * (tl.evals // lam + 1)))
            < (1.4 + 2 / (n + 1)) * chi_n
        )
        pc = (1 - cc) * pc + h_sig * np.sqrt(cc * (2 - cc) * mu_eff) * y_mean
        rank1 = np.outer(pc, pc)
        rank_mu = (yw * w[:, None]).T @ yw
        C = (
            (1 - c1 - cmu) * C
            + c1 * (rank1 + (1 - h_sig) * cc * (2 - cc) * C)
            + cmu * rank_mu
        )
        sigma *= np.exp((cs / ds) * (np.linalg.norm(ps) / chi_n - 1))
        m = m_new

        if tl.best <= f_target:
            return "ftarget"
        if f[order[0]] < run_best - 1e-14:
            run_best = f[order[0]]
            stale = 0
        else:
            stale += 1
            if stale >= stale_limit:
                return "stale"
        if sigma * D.max() < sigma_stop:
            return "collapsed"
        if not np.all(np.isfinite(C)):
            return "collapsed"


def cma_es(loss, space, phi0, sigma0=None, population=None, budget=10_000,
           seed=0, f_target=-np.inf, restarts=True, scatter_fraction=0.05):
    """Covariance matrix adaptation with projection-repaired bounds.

    A small slice of the budget first scatters uniform probes over the box
    (narrow global funnels on flat plateaus give the adapted distribution
    nothing to follow, but a capture point found by scatter seeds the
    polish runs). Then, while budget remains, restart cycles alternate
    between fresh wide runs (population doubled up to a cap) and polish
    runs around the best point found so far with progressively smaller
    initial steps. Runs are cut short once their own best stops improving,
    so plateau wiggles cannot starve the budget. Stops early when f_target
    is reached.
    """
    phi0 = np.asarray(phi0, dtype=float)
    if not space.contains(phi0):
        raise DomainError("initial point must lie inside the parameter box")
    n = space.dim
    lam0 = population if population is not None else 4 + int(3 * np.log(n))
    span = float(np.max(space.spans()))
    sig0 = sigma0 if sigma0 is not None else 0.3 * span
    started = time.perf_counter()
    tl = _TracingLoss(loss, budget)
    rng = np.random.default_rng(seed)

    converged = False
    n_scatter = int(scatter_fraction * budget)
    try:
        for _ in range(n_scatter):
            tl(rng.uniform(space.lows, space.highs))
            if tl.best <= f_target:
                converged = True
                break
    except _BudgetExhausted:
        pass
    if converged:
        return _finish(tl, space, started, True)
    run = 0
    lam = lam0
    polish = 0
    while tl.evals < budget:
        if run == 0:
            m, sigma = phi0.copy(), sig0
        elif run % 2 == 1 and tl.best_x is not None:
            m = tl.best_x.copy()
            sigma = span * (0.02 / (10.0**polish))
            polish = (polish + 1) % 3
        else:
            # fresh wide run from a drawn start: plateau traps near the
            # initial point cannot capture every cycle
            lam = min(lam * 2, 16 * lam0)
            m = rng.uniform(space.lows, space.highs)
            sigma = sig0
        stale_limit = 30 + int(60 * n / lam)
        reason = _cma_run(
            tl, space, m, sigma, lam, rng, f_target,
            sigma_stop=1e-12 * max(span, 1.0), stale_limit=stale_limit,
        )
        if reason == "ftarget":
            converged = True
            break
        if reason == "budget" or not restarts:
            break
        run += 1
    if not converged and tl.best <= f_target:
        converged = True
    return _finish(tl, space, started, converged)


# ---------------------------------------------------------------------------
# modified Powell


def powell(loss, space, phi0, budget=10_000, xtol=1e-10, ftol=1e-12):
    """Modified Powell direction-set search within the parameter box."""
    phi0 = np.asarray(phi0, dtype=float)
    if not space.contains(phi0):
        raise DomainError("initial point must lie inside the parameter box")
    started = time.perf_counter()
    tl = _TracingLoss(loss, budget)
    converged = False
    message = ""
    try:
        res = sciopt.minimize(
            tl,
            phi0,
            method="Powell",
            bounds=space.bounds,
            options={"maxfev": budget, "xtol": xtol, "ftol": ftol},
        )
        converged = bool(res.success)
        message = str(res.message)
    except _BudgetExhausted:
        message = "budget exhausted"
    return _finish(tl, space, started, converged, message)


# ---------------------------------------------------------------------------
# basin hopping


def metropolis_accept(delta, temperature, u):
    """Accept a candidate whose loss increased by delta with probability
    exp(-delta / T); the T -> 0 limit accepts improvements only."""
    if delta <= 0:
        return True
    if temperature <= 0:
        return False
    return u < np.exp(-delta / temperature)


def basin_hopping(loss, space, phi0, step=None, temperature=1e-3, budget=10_000,
                  seed=0, local_method="nelder-mead", local_budget=None,
                  f_target=-np.inf, uniform_hop_prob=0.0):
    """Uniform-perturbation basin hopping with a local minimization phase.

    local_method "nelder-mead" is derivative-free; "bfgs" (the gradient
    analogue) requires a smooth objective and is refused upstream for
    non-smooth fields. With uniform_hop_prob > 0 that fraction of hops
    restarts from a uniform draw over the whole box instead of perturbing
    the current point, which helps when the box is much wider than the
    hop width.
    """
    if local_method not in ("nelder-mead", "bfgs"):
        raise ConfigError("local_method must be 'nelder-mead' or 'bfgs'")
    phi0 = np.asarray(phi0, dtype=float)
    if not space.contains(phi0):
        raise DomainError("initial point must lie inside the parameter box")
    if step is None:
        step = 0.25 * space.spans()
    else:
        step = np.broadcast_to(np.asarray(step, dtype=float), (space.dim,))
    started = time.perf_counter()
    tl = _TracingLoss(loss, budget)
    rng = np.random.default_rng(seed)
    local_budget = local_budget or max(50 * space.dim, 200)

    def local(x0):
        opts = {"maxfev": local_budget, "xatol": 1e-9, "fatol": 1e-12}
        if local_method == "nelder-mead":
            res = sciopt.minimize(
                tl, x0, method="Nelder-Mead", bounds=space.bounds, options=opts
            )
        else:
            res = sciopt.minimize(
                tl,
                x0,
                method="L-BFGS-B",
                bounds=space.bounds,
                options={"maxfun": local_budget},
            )
        return res.x, float(res.fun)

    converged = False
    try:
        x_cur, f_cur = local(phi0)
        while tl.evals < budget:
            if tl.best <= f_target:
                converged = True
                break
            if uniform_hop_prob > 0 and rng.uniform() < uniform_hop_prob:
                cand0 = rng.uniform(space.lows, space.highs)
            else:
                hop = rng.uniform(-step, step)
                cand0 = space.clip(x_cur + hop)
            x_new, f_new = local(cand0)
            if metropolis_accept(f_new - f_cur, temperature, rng.uniform()):
                x_cur, f_cur = x_new, f_new
    except _BudgetExhausted:
        pass
    if tl.best <= f_target:
        converged = True
    return _finish(tl, space, started, converged)


def validation_error(phi_hat, phi_gt, space):
    """Mean over dimensions of |phi_hat - phi_gt| / range, clamped at 1."""
    phi_hat = np.asarray(phi_hat, dtype=float)
    phi_gt = np.asarray(phi_gt, dtype=float)
    if phi_hat.shape != phi_gt.shape or phi_hat.shape[0] != space.dim:
        raise ContractError("parameter vectors must match the space dimension")
    per_dim = np.abs(phi_hat - phi_gt) / space.spans()
    return float(np.minimum(per_dim, 1.0).mean())

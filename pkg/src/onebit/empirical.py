"""Finite-size experiments: draw one-bit instances, fit, and measure.

The estimator solves

    min_x  (1/m) sum_i loss(y_i <a_i, x>) + r ||x||^2

with ``B = diag(y) A`` so the data term is ``sum_i loss((B x)_i)``.  Smooth
losses use an accelerated gradient method with backtracking (the monotone
variant, so the objective never increases); LAD and hinge use ADMM on the
split ``z = B x``.  Losses that vanish at ``+inf`` have no finite minimiser
on linearly separable data, which is checked up front by a feasibility LP.
"""

from __future__ import annotations

import io
import math
import struct
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .errors import DomainError, NumericError
from .expectation import Channel
from .losses import Loss, Smoothness, make_loss, prox

__all__ = ["Instance", "generate_instance", "FitConfig", "FitResult", "fit",
           "separating_direction", "correlation", "bias_norm", "ReplicateSummary",
           "run_replicates", "save_instance", "load_instance", "objective",
           "subgradient_gap"]

CONVERGED = "converged"
UNBOUNDED = "unbounded_separable"
MAX_ITER = "max_iter"
FAILED = "error"

_MAGIC = b"ONEBIT1\0"


@dataclass
class Instance:
    """One draw of the measurement model ``y = flip(sign(A x0))``."""

    n: int
    m: int
    A: np.ndarray
    x0: np.ndarray
    y: np.ndarray
    epsilon: float
    seed: int

    @property
    def B(self) -> np.ndarray:
        return self.y[:, None] * self.A

    def flip_rate(self) -> float:
        return float(np.mean(self.y != np.sign(self.A @ self.x0)))

    def rotated(self, Q) -> "Instance":
        """The same labels with ``A -> A Q^T`` and ``x0 -> Q x0``."""
        Q = np.asarray(Q, dtype=float)
        return Instance(n=self.n, m=self.m, A=self.A @ Q.T, x0=Q @ self.x0, y=self.y.copy(),
                        epsilon=self.epsilon, seed=self.seed)


def _streams(seed):
    # counter-based generator; independent child streams for A and the labels
    children = np.random.SeedSequence(int(seed)).spawn(2)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def generate_instance(n: int, delta: float, epsilon: float = 0.0, seed: int = 0, *,
                      link=None) -> Instance:
    """Draw ``A`` with iid N(0, 1) entries, ``x0 = e1`` and one-bit labels.

    With ``link`` given, labels follow ``P(y_i = 1) = link(<a_i, x0>)`` and
    ``epsilon`` is ignored (stored as NaN).

    Examples
    --------
    >>> inst = generate_instance(4, 2.0, 0.0, seed=7)
    >>> inst.m, bool(np.all(inst.y == np.sign(inst.A[:, 0])))
    (8, True)
    """
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n}")
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    n = int(n)
    m = int(round(delta * n))
    if m < 1:
        raise DomainError("delta * n rounds to zero measurements")
    channel = Channel.from_link(link) if link is not None else Channel.bsc(epsilon)
    rng_a, rng_y = _streams(seed)
    A = rng_a.standard_normal((m, n))
    x0 = np.zeros(n)
    x0[0] = 1.0
    s = A @ x0
    y = channel.sample(s, rng_y)
    eps = float("nan") if link is not None else float(epsilon)
    return Instance(n=n, m=m, A=A, x0=x0, y=y, epsilon=eps, seed=int(seed))


# ---------------------------------------------------------------------------
# instance IO

def save_instance(inst: Instance, path, fmt: str = "csv"):
    """Write ``n, m, epsilon, seed``, then ``A`` row-major, then ``y``."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("n,m,epsilon,seed\n")
        buf.write(f"{inst.n},{inst.m},{inst.epsilon!r},{inst.seed}\n")
        for row in inst.A:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        buf.write(",".join(repr(float(v)) for v in inst.y) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<qqdq", inst.n, inst.m, inst.epsilon, inst.seed))
            fh.write(np.ascontiguousarray(inst.A, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(inst.y, dtype="<f8").tobytes())
    else:
        raise DomainError(f"unknown instance format {fmt!r}")


def load_instance(path, fmt: Optional[str] = None) -> Instance:
    with open(path, "rb") as fh:
        raw = fh.read()
    if fmt is None:
        fmt = "binary" if raw.startswith(_MAGIC) else "csv"
    if fmt == "binary":
        off = len(_MAGIC)
        n, m, eps, seed = struct.unpack_from("<qqdq", raw, off)
        off += struct.calcsize("<qqdq")
        A = np.frombuffer(raw, dtype="<f8", count=m * n, offset=off).reshape(m, n).copy()
        y = np.frombuffer(raw, dtype="<f8", count=m, offset=off + 8 * m * n).copy()
    else:
        lines = raw.decode().splitlines()
        n_s, m_s, eps_s, seed_s = lines[1].split(",")
        n, m, eps, seed = int(n_s), int(m_s), float(eps_s), int(seed_s)
        A = np.array([[float(v) for v in line.split(",")] for line in lines[2:2 + m]])
        y = np.array([float(v) for v in lines[2 + m].split(",")])
    x0 = np.zeros(n)
    x0[0] = 1.0
    return Instance(n=n, m=m, A=A.reshape(m, n), x0=x0, y=y, epsilon=eps, seed=seed)


# ---------------------------------------------------------------------------
# fitting

@dataclass(frozen=True)
class FitConfig:
    tol: float = 1e-8
    max_iter: int = 5000
    # smooth losses take cheap steps; give them more of them
    max_iter_smooth: int = 20000
    rho: float = 1.0
    rho_balance: float = 10.0
    blowup: float = 1e6
    separability_check: bool = True
    record_history: bool = False


@dataclass
class FitResult:
    x_hat: np.ndarray
    status: str
    iterations: int
    objective: float
    solver: str
    optimality: float = float("nan")
    witness: Optional[np.ndarray] = None
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def objective(inst_or_B, loss: Loss, x, r: float = 0.0) -> float:
    """``(1/m) sum loss(y_i <a_i, x>) + r ||x||^2``."""
    B = inst_or_B.B if isinstance(inst_or_B, Instance) else np.asarray(inst_or_B)
    x = np.asarray(x, dtype=float)
    return float(np.mean(loss.value(B @ x)) + r * (x @ x))


def separating_direction(B, *, margin_tol: float = 1e-9) -> Optional[np.ndarray]:
    """A vector with ``B x >= 1`` row-wise, or None if the rows are not separable.

    Solves the always-feasible, bounded LP ``max t`` subject to ``B x >= t``,
    ``|x_j| <= 1``, ``t <= 1`` and rescales the maximiser to unit margin.
    """
    m, n = B.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-B, np.ones((m, 1))])
    bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=np.zeros(m), bounds=bounds, method="highs")
    if res.status != 0:
        raise NumericError(f"separability LP failed: {res.message}")
    x, t = np.asarray(res.x[:-1], dtype=float), float(res.x[-1])
    if t <= margin_tol:
        return None
    w = x / float(np.min(B @ x))
    return w if np.min(B @ w) > 0 else None


def _agd(B, loss, r, cfg, x_init):
    """Monotone FISTA with backtracking on a smooth data term."""
    m, n = B.shape

    def value(x):
        return float(np.mean(loss.value(B @ x)) + r * (x @ x))

    def grad(x):
        return B.T @ loss.d1(B @ x) / m + 2.0 * r * x

    x = x_init.copy()
    f_x = value(x)
    y_pt, x_prev = x.copy(), x.copy()
    t = 1.0
    L = 1.0
    history = [f_x] if cfg.record_history else []
    for it in range(1, cfg.max_iter_smooth + 1):
        f_y, g_y = value(y_pt), grad(y_pt)
        while True:
            z = y_pt - g_y / L
            diff = z - y_pt
            f_z = value(z)
            if f_z <= f_y + g_y @ diff + 0.5 * L * (diff @ diff) + 1e-15 * abs(f_y):
                break
            L *= 2.0
            if L > 1e300:
                raise NumericError("backtracking failed to find a descent step")
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        x_prev = x
        if f_z <= f_x:
            x, f_x = z, f_z
        y_pt = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        if cfg.record_history:
            history.append(f_x)
        g_norm = float(np.linalg.norm(grad(x)))
        scale = 1.0 + float(np.linalg.norm(x))
        if scale > cfg.blowup:
            return x, UNBOUNDED, it, g_norm, history
        if g_norm < cfg.tol * scale:
            return x, CONVERGED, it, g_norm, history
        # restart momentum when the gradient step did not decrease the objective
        if f_z > f_x:
            t = 1.0
            y_pt = x.copy()
    return x, MAX_ITER, cfg.max_iter_smooth, g_norm, history


# over-relaxation factor and how often rho may be rebalanced
_RELAX = 1.6
_RHO_EVERY = 25
_FINISH_AFTER = 200
_FINISH_EVERY = 100
_FINISH_FROM = 1e-2
_SNAP = 1e-6


def _kink(loss):
    # piecewise-linear losses with a single kink at their minimiser
    if loss.kind.value in ("lad", "hinge") and loss.minimizer is not None:
        return float(loss.minimizer)
    return None


def subgradient_gap(B, loss, x, kink, *, atol=1e-10):
    """Distance from 0 to the subdifferential of ``(1/m) sum loss(B x)``.

    Rows with ``(B x)_i`` within ``atol`` of the kink may take any slope
    between the one-sided derivatives; the best choice is a bounded
    least-squares problem.
    """
    m = B.shape[0]
    t = B @ x
    at_kink = np.abs(t - kink) <= atol * (1.0 + abs(kink))
    g = np.asarray(loss.right_derivative(t), dtype=float)
    fixed = B[~at_kink].T @ g[~at_kink]
    if not np.any(at_kink):
        return float(np.linalg.norm(fixed)) / m
    lo = float(loss.right_derivative(np.array(kink - 1e-6)))
    hi = float(loss.right_derivative(np.array(kink)))
    res = optimize.lsq_linear(B[at_kink].T, -fixed, bounds=(lo, hi), tol=1e-14,
                              method="bvls")
    return float(np.linalg.norm(B[at_kink].T @ res.x + fixed)) / m


def _lp_finish(B, loss, kink, tol):
    """Exact minimiser of a polyhedral data term (r = 0) by linear programming.

    Works on the dual, which has only ``n`` equality rows: for LAD
    ``sum |b_i x - 1| = max_{|v| <= 1, B^T v = 0} -1^T v`` and for hinge
    ``sum (1 - b_i x)_+ = max_{0 <= v <= 1, B^T v = 0} 1^T v``.  The primal
    point is read off the equality multipliers.  Returns ``(x, gap)`` if the
    subgradient test passes, else None.
    """
    m, n = B.shape
    if loss.kind.value == "lad":
        c, bounds = np.full(m, kink), (-1.0, 1.0)
    else:
        c, bounds = np.full(m, -kink), (0.0, 1.0)
    res = optimize.linprog(c, A_eq=B.T, b_eq=np.zeros(n), bounds=bounds, method="highs")
    if res.status != 0:
        return None
    y = np.asarray(res.eqlin.marginals, dtype=float)
    # the multiplier sign convention differs between the two forms; keep the better
    x = min((y, -y), key=lambda v: objective(B, loss, v))
    # the LP meets its constraints to ~1e-9 only: snap the kink rows exactly
    near = np.abs(B @ x - kink) <= _SNAP * (1.0 + abs(kink))
    if np.count_nonzero(near) >= n:
        snapped, *_ = np.linalg.lstsq(B[near], np.full(np.count_nonzero(near), kink), rcond=None)
        if objective(B, loss, snapped) <= objective(B, loss, x) + 1e-12:
            x = snapped
    gap = subgradient_gap(B, loss, x, kink, atol=1e-9)
    if gap < tol * (1.0 + float(np.linalg.norm(x))):
        return x, gap
    return None


def _admm(B, loss, r, cfg, x_init):
    """ADMM for ``sum loss(z) + m r ||x||^2`` subject to ``z = B x``."""
    m, n = B.shape
    rho = cfg.rho
    BtB = B.T @ B
    ridge = 2.0 * m * r * np.eye(n)

    def factor(rho_):
        try:
            return linalg.cho_factor(ridge + rho_ * BtB)
        except linalg.LinAlgError as exc:
            raise NumericError(f"x-update factorisation failed: {exc}") from exc

    chol = factor(rho)
    kink = _kink(loss) if r == 0 else None
    x = x_init.copy()
    z = B @ x
    u = np.zeros(m)
    history = []
    measure = math.inf
    for it in range(1, cfg.max_iter + 1):
        x = linalg.cho_solve(chol, rho * (B.T @ (z - u)))
        Bx = B @ x
        z_old = z
        Bx_hat = _RELAX * Bx + (1.0 - _RELAX) * z_old
        z = np.asarray(prox(loss, Bx_hat + u, 1.0 / rho), dtype=float)
        u = u + Bx_hat - z
        primal = float(np.linalg.norm(Bx - z))
        dual = float(rho * np.linalg.norm(B.T @ (z - z_old)))
        p_scale = 1.0 + max(float(np.linalg.norm(Bx)), float(np.linalg.norm(z)))
        d_scale = 1.0 + float(rho * np.linalg.norm(B.T @ u))
        measure = max(primal / p_scale, dual / d_scale)
        if cfg.record_history:
            history.append(float(np.sum(loss.value(Bx)) / m + r * (x @ x)))
        if np.linalg.norm(x) > cfg.blowup:
            return x, UNBOUNDED, it, measure, history
        if primal < cfg.tol * p_scale and dual < cfg.tol * d_scale:
            return x, CONVERGED, it, measure, history
        # ADMM is slow to reach high accuracy on polyhedral problems; once it
        # has settled, finish exactly
        if (kink is not None and it >= _FINISH_AFTER and it % _FINISH_EVERY == 0
                and measure < _FINISH_FROM):
            done = _lp_finish(B, loss, kink, cfg.tol)
            if done is not None:
                return done[0], CONVERGED, it, done[1], history
        # keep the two residuals within a factor of rho_balance of each other
        rp, rd = primal / p_scale, dual / d_scale
        if it % _RHO_EVERY == 0 and (rp > cfg.rho_balance * rd or rd > cfg.rho_balance * rp):
            factor_ = 2.0 if rp > rd else 0.5
            rho *= factor_
            u /= factor_
            chol = factor(rho)
    return x, MAX_ITER, cfg.max_iter, measure, history


def fit(instance: Instance, loss, r: float = 0.0, cfg: Optional[FitConfig] = None) -> FitResult:
    """Minimise the regularised empirical risk on ``instance``.

    Returns status ``unbounded_separable`` with a witness ``x_s`` (``B x_s >= 1``)
    when the loss vanishes at infinity, ``r = 0`` and the data are
    separable, or when the iterates leave the ball of radius 1e6.
    """
    if isinstance(loss, str):
        loss = make_loss(loss)
    if r < 0:
        raise DomainError("r must be nonnegative")
    cfg = cfg or FitConfig()
    B = instance.B
    n = instance.n
    zero = np.zeros(n)
    solver = "agd" if (loss.smoothness >= Smoothness.C1 and loss.d1 is not None) else "admm"
    if cfg.separability_check and r == 0 and loss.vanishes_at_infinity:
        w = separating_direction(B)
        if w is not None:
            return FitResult(x_hat=w, status=UNBOUNDED, iterations=0,
                             objective=objective(B, loss, w, r), solver="lp", witness=w)
    run = _agd if solver == "agd" else _admm
    x, status, its, measure, history = run(B, loss, r, cfg, zero)
    witness = None
    if status == UNBOUNDED:
        witness = separating_direction(B)
    elif r == 0 and loss.vanishes_at_infinity and np.min(B @ x) > 0 and np.min(loss.value(B @ x)) > 0:
        # a strictly positive loss that vanishes at infinity has no minimiser once
        # x separates the rows: the relative gradient test was met on the way out
        status, witness = UNBOUNDED, x / float(np.min(B @ x))
    return FitResult(x_hat=x, status=status, iterations=its,
                     objective=objective(B, loss, x, r), solver=solver,
                     optimality=measure, witness=witness, history=history)


# ---------------------------------------------------------------------------
# metrics

def correlation(x_hat, x0, *, return_flag=False):
    """Absolute cosine similarity; a zero vector gives 0 with the flag set."""
    x_hat = np.asarray(x_hat, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    nh, n0 = np.linalg.norm(x_hat), np.linalg.norm(x0)
    if nh == 0 or n0 == 0:
        return (0.0, True) if return_flag else 0.0
    value = min(1.0, abs(float(x_hat @ x0)) / (nh * n0))
    return (value, False) if return_flag else value


def bias_norm(x_hat, x0, mu: float) -> float:
    """``||x_hat - mu x0/||x0|| ||^2``, the empirical counterpart of alpha^2."""
    x_hat = np.asarray(x_hat, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n0 = np.linalg.norm(x0)
    if n0 == 0:
        raise DomainError("x0 must be nonzero")
    d = x_hat - mu * x0 / n0
    return float(d @ d)


# ---------------------------------------------------------------------------
# replicates

@dataclass
class ReplicateSummary:
    loss: str
    n: int
    delta: float
    epsilon: float
    r: float
    trials: int
    base_seed: int
    corr_mean: float
    corr_std: float
    bias_mean: float
    bias_std: float
    std_available: bool
    bounded_count: int
    unbounded_count: int
    status_counts: dict
    correlations: list
    bias_norms: list
    statuses: list
    wall_time: float

    @property
    def seeds(self):
        return list(range(self.base_seed, self.base_seed + self.trials))


def _trial(args):
    loss_name, n, delta, epsilon, r, seed, mu, cfg = args
    try:
        inst = generate_instance(n, delta, epsilon, seed)
        res = fit(inst, make_loss(loss_name) if isinstance(loss_name, str) else loss_name, r, cfg)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return FAILED, math.nan, math.nan, type(exc).__name__
    if res.status == UNBOUNDED:
        return UNBOUNDED, math.nan, math.nan, None
    corr = correlation(res.x_hat, inst.x0)
    proj = float(res.x_hat @ inst.x0) if mu is None else mu
    return res.status, corr, bias_norm(res.x_hat, inst.x0, proj), None


def _stats(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(np.mean(arr)), float(np.std(arr, ddof=1))


def run_replicates(loss, n: int, delta: float, epsilon: float = 0.0, r: float = 0.0,
                   trials: int = 25, base_seed: int = 0, *, mu: Optional[float] = None,
                   cfg: Optional[FitConfig] = None, workers: int = 1) -> ReplicateSummary:
    """Run ``trials`` independent fits with seeds ``base_seed + k``.

    ``bias_norm`` uses ``mu`` when given (e.g. the theory value) and
    otherwise the fitted projection ``<x_hat, x0>``, in which case it
    estimates alpha^2.  Failed and unbounded trials are counted, not raised.
    Statistics are taken over bounded trials; with one such trial the
    standard deviation is 0 and ``std_available`` is False.
    """
    if int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be a positive integer, got {trials}")
    trials = int(trials)
    loss_name = loss if isinstance(loss, str) else loss
    label = loss if isinstance(loss, str) else loss.name
    jobs = [(loss_name, n, delta, epsilon, r, base_seed + k, mu, cfg) for k in range(trials)]
    start = time.perf_counter()
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial, jobs))
    else:
        outcomes = [_trial(j) for j in jobs]
    wall = time.perf_counter() - start
    statuses = [o[0] for o in outcomes]
    bounded = [o for o in outcomes if o[0] in (CONVERGED, MAX_ITER)]
    corr_mean, corr_std = _stats([o[1] for o in bounded])
    bias_mean, bias_std = _stats([o[2] for o in bounded])
    counts = Counter(statuses)
    return ReplicateSummary(
        loss=label, n=int(n), delta=float(delta), epsilon=float(epsilon), r=float(r),
        trials=trials, base_seed=int(base_seed), corr_mean=corr_mean, corr_std=corr_std,
        bias_mean=bias_mean, bias_std=bias_std, std_available=len(bounded) > 1,
        bounded_count=len(bounded), unbounded_count=counts.get(UNBOUNDED, 0),
        status_counts=dict(sorted(counts.items())),
        correlations=[o[1] for o in outcomes], bias_norms=[o[2] for o in outcomes],
        statuses=statuses, wall_time=wall)

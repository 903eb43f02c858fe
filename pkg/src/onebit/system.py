"""The three-equation saddle system for (mu, alpha, lambda) and its solvers.

With ``Z = S*Y``, ``x = alpha*G + mu*Z`` and ``M'`` the envelope derivative
in its first argument, the residuals are

    R1 = E[Z M'(x; lam)] + 2 r mu
    R2 = lam^2 delta E[M'(x; lam)^2] - alpha^2
    R3 = lam delta E[G M'(x; lam)] - alpha (1 - 2 r lam delta)

and all three vanish at the solution.  Two independent routes are offered:
:func:`solve_fixed_point` iterates explicit updates, while
:func:`solve_ao_saddle` optimises the scalar min-max problem whose first-order
conditions are the system above.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import __version__
from .errors import (DivergedError, DomainError, OracleError, UnboundedSaddleError,
                     UnboundedSolutionError)
from .expectation import Channel, ExpectationEngine, default_engine
from .losses import Loss, Smoothness, envelope_dx, prox, second_derivative

__all__ = [
    "SaddleSolution", "SolverConfig", "moments", "system_residuals",
    "solve_fixed_point", "solve_ao_saddle", "predicted_correlation",
    "ls_closed_form", "delta_identity",
]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass
class SolverConfig:
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 500
    # "envelope" uses E[G M'] for the lambda equation; "stein" uses the
    # integrated-by-parts form E[l''/(1 + lam l'')] and needs a C2 loss
    lambda_form: str = "envelope"
    blowup: float = 1e6
    collapse: float = 1e-12
    patience: int = 10
    multistart: int = 0
    record_trajectory: bool = True
    # fail fast when r = 0, the loss vanishes at +inf and delta < delta*_eps
    separability_check: bool = True

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]")
        if self.lambda_form not in ("envelope", "stein"):
            raise DomainError(f"unknown lambda_form {self.lambda_form!r}")


@dataclass
class SaddleSolution:
    mu: float
    alpha: float
    lam: float
    delta: float
    r: float = 0.0
    residual_norm: float = float("nan")
    residuals: tuple = (float("nan"),) * 3
    iterations: int = 0
    method: str = "fixed_point"
    loss: str = ""
    channel: str = ""
    engine: str = ""
    converged: bool = True
    multistart_spread: Optional[float] = None
    trajectory: list = field(default_factory=list, repr=False)

    @property
    def sigma_ell(self) -> float:
        return self.alpha / self.mu if self.mu != 0 else math.inf

    @property
    def degenerate(self) -> bool:
        return self.mu == 0

    @property
    def correlation(self) -> float:
        return predicted_correlation(self)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.pop("trajectory")
        rec["residuals"] = list(self.residuals)
        rec["sigma_ell"] = self.sigma_ell
        rec["correlation"] = self.correlation
        rec["version"] = __version__
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


# ---------------------------------------------------------------------------
# residuals

def _check_delta(delta):
    if not delta > 1.0:
        raise DomainError(f"delta must exceed 1 (got {delta}); bounded solutions need m > n")


def _envelope_grad(loss, alpha, mu, lam, g, z):
    x = alpha * g + mu * z
    return envelope_dx(loss, x, lam)


def moments(loss: Loss, channel: Channel, mu, alpha, lam, engine=None, *, stein=False):
    """Return ``(E[Z M'], E[M'^2], E[G M'])`` and optionally the Stein term.

    The optional fourth entry is ``E[l''(p)/(1 + lam l''(p))]`` at the
    proximal point ``p``.
    """
    engine = engine or default_engine()

    def integrand(g, z):
        x = alpha * g + mu * z
        p = np.asarray(prox(loss, x, lam), dtype=float)
        d = (x - p) / lam
        out = [z * d, d * d, g * d]
        if stein:
            l2 = second_derivative(loss, p)
            out.append(l2 / (1.0 + lam * l2))
        return tuple(out)

    return engine.expect_gz(channel, integrand)


def _residuals_from_moments(m, mu, alpha, lam, delta, r, lambda_form="envelope"):
    r1 = m[0] + 2.0 * r * mu
    r2 = lam * lam * delta * m[1] - alpha * alpha
    if lambda_form == "stein":
        r3 = alpha * (lam * delta * m[3] - (1.0 - 2.0 * r * lam * delta))
    else:
        r3 = lam * delta * m[2] - alpha * (1.0 - 2.0 * r * lam * delta)
    return np.array([r1, r2, r3])


def system_residuals(sol, loss: Loss, channel: Channel, engine=None, *,
                     delta=None, r=None, lambda_form="envelope"):
    """Residuals ``(R1, R2, R3)`` at ``sol`` (a SaddleSolution or a triple).

    With ``r = 0`` these are exactly the unregularised equations.
    """
    if isinstance(sol, SaddleSolution):
        mu, alpha, lam = sol.mu, sol.alpha, sol.lam
        delta = sol.delta if delta is None else delta
        r = sol.r if r is None else r
    else:
        mu, alpha, lam = sol
        if delta is None:
            raise DomainError("delta is required when sol is a plain triple")
        r = 0.0 if r is None else r
    if not lam > 0:
        raise DomainError("lambda must be positive")
    stein = lambda_form == "stein"
    m = moments(loss, channel, mu, alpha, lam, engine, stein=stein)
    return _residuals_from_moments(m, mu, alpha, lam, delta, r, lambda_form)


def delta_identity(sol: SaddleSolution, loss: Loss, channel: Channel, engine=None):
    """``E[M'^2] / E[G M']^2``, which equals delta at an r = 0 solution."""
    m = moments(loss, channel, sol.mu, sol.alpha, sol.lam, engine)
    return m[1] / (m[2] * m[2])


# ---------------------------------------------------------------------------
# fixed point

def _mu_root(loss, channel, engine, alpha, lam, r, mu0, xtol, blowup, step=None):
    """Root in mu of R1 with (alpha, lam) held fixed.

    R1 is nondecreasing in mu because the envelope is convex, so a bracket
    found by outward expansion contains the unique crossing.
    """
    def f(mu):
        return engine.expect_gz(channel, lambda g, z: z * _envelope_grad(loss, alpha, mu, lam, g, z)) + 2.0 * r * mu

    f0 = f(mu0)
    if f0 == 0.0:
        return mu0
    if step is None or not step > 0:
        step = 1e-3 * (1.0 + abs(mu0))
    direction = -1.0 if f0 > 0 else 1.0
    a, fa = mu0, f0
    while True:
        b = a + direction * step
        fb = f(b)
        if np.sign(fb) != np.sign(fa) or fb == 0.0:
            break
        a, fa = b, fb
        step *= 4.0
        if abs(b) > blowup:
            raise UnboundedSolutionError(
                f"no root of the mu-equation with |mu| <= {blowup:g}"
            )
    lo, hi = (a, b) if a < b else (b, a)
    return optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def _initial_point(loss, channel, delta, engine):
    mu0 = engine.expect(channel, lambda g, s, y: s * y)
    return mu0, 1.0, 1.0 / (2.0 * (delta - 1.0))


def _separable_guard(loss, channel, delta, r, engine):
    if r > 0 or not loss.vanishes_at_infinity or channel.mode != "bsc":
        return
    from .bounds import separability_threshold
    threshold = separability_threshold(channel.epsilon, engine)
    if delta < threshold:
        raise UnboundedSolutionError(
            f"delta={delta:g} is below the separability threshold {threshold:.6g};"
            f" the loss {loss.name!r} has no finite minimiser")


def solve_fixed_point(loss: Loss, channel: Channel, delta: float, r: float = 0.0,
                      engine: Optional[ExpectationEngine] = None,
                      cfg: Optional[SolverConfig] = None, *, start=None) -> SaddleSolution:
    """Solve the saddle system by damped fixed-point iteration.

    Each sweep sets ``lam <- alpha / (delta (E[G M'] + 2 r alpha))`` (or its
    Stein counterpart), ``alpha <- lam sqrt(delta E[M'^2])`` and then solves
    the mu-equation exactly with (alpha, lam) frozen; every update is damped
    as ``v <- (1 - beta) v + beta v_new``.
    """
    _check_delta(delta)
    if r < 0:
        raise DomainError("r must be nonnegative")
    cfg = cfg or SolverConfig()
    engine = engine or default_engine()
    if cfg.lambda_form == "stein" and loss.smoothness < Smoothness.C2:
        raise DomainError("the Stein form of the lambda equation needs a C2 loss")
    stein = cfg.lambda_form == "stein"
    beta = cfg.damping

    if cfg.separability_check:
        _separable_guard(loss, channel, delta, r, engine)
    mu, alpha, lam = start if start is not None else _initial_point(loss, channel, delta, engine)
    trajectory = []
    strikes = 0
    mu_step = None
    res = np.full(3, np.inf)
    for it in range(cfg.max_iter + 1):
        m = moments(loss, channel, mu, alpha, lam, engine, stein=stein)
        res = _residuals_from_moments(m, mu, alpha, lam, delta, r, cfg.lambda_form)
        if cfg.record_trajectory:
            trajectory.append((mu, alpha, lam))
        norm = float(np.max(np.abs(res)))
        if norm < cfg.tol:
            sol = SaddleSolution(mu=mu, alpha=alpha, lam=lam, delta=delta, r=r,
                                 residual_norm=norm, residuals=tuple(map(float, res)),
                                 iterations=it, method="fixed_point", loss=loss.name,
                                 channel=channel.describe(), engine=engine.fingerprint(),
                                 trajectory=trajectory)
            if cfg.multistart:
                sol.multistart_spread = _multistart_spread(loss, channel, delta, r, engine, cfg, sol)
            return sol
        if it == cfg.max_iter:
            break

        if stein:
            lam_new = 1.0 / (delta * (m[3] + 2.0 * r))
        else:
            denom = delta * (m[2] + 2.0 * r * alpha)
            lam_new = alpha / denom if denom > 0 else lam * 4.0
        lam_new = max(lam_new, 0.0)
        alpha_new = lam_new * math.sqrt(delta * m[1])
        lam = (1.0 - beta) * lam + beta * lam_new
        alpha = (1.0 - beta) * alpha + beta * alpha_new

        extreme = max(alpha, lam, abs(mu)) > cfg.blowup or min(alpha, lam) < cfg.collapse
        strikes = strikes + 1 if extreme else 0
        if strikes >= cfg.patience or not (math.isfinite(alpha) and math.isfinite(lam)):
            raise UnboundedSolutionError(
                f"iterates left [{cfg.collapse:g}, {cfg.blowup:g}] "
                f"(mu={mu:.3g}, alpha={alpha:.3g}, lambda={lam:.3g})",
                trajectory=trajectory,
            )
        if min(alpha, lam) <= 0:
            alpha = max(alpha, cfg.collapse)
            lam = max(lam, cfg.collapse)
        xtol = max(1e-14, 1e-3 * norm)
        try:
            mu_new = _mu_root(loss, channel, engine, alpha, lam, r, mu, xtol,
                              cfg.blowup, step=mu_step)
        except UnboundedSolutionError as exc:
            raise UnboundedSolutionError(str(exc), trajectory=trajectory) from None
        # the next root is usually within a couple of the last moves
        mu_step = max(2.0 * abs(mu_new - mu), 1e-12 * (1.0 + abs(mu)))
        mu = (1.0 - beta) * mu + beta * mu_new

    raise DivergedError(
        f"fixed-point iteration did not reach tol={cfg.tol:g} in {cfg.max_iter} "
        f"iterations (residual {float(np.max(np.abs(res))):.3g})",
        trajectory=trajectory,
    )


def _multistart_spread(loss, channel, delta, r, engine, cfg, sol):
    sub = SolverConfig(**{**asdict(cfg), "multistart": 0, "record_trajectory": False})
    rng = np.random.default_rng(0)
    points = [(sol.mu, sol.alpha, sol.lam)]
    for _ in range(cfg.multistart):
        scale = np.exp(rng.uniform(-1.0, 1.0, size=3))
        start = (sol.mu * scale[0], sol.alpha * scale[1], sol.lam * scale[2])
        try:
            other = solve_fixed_point(loss, channel, delta, r, engine, sub, start=start)
        except DivergedError:
            continue
        points.append((other.mu, other.alpha, other.lam))
    pts = np.array(points)
    return float(np.max(np.ptp(pts, axis=0) / np.maximum(np.abs(pts[0]), 1e-12)))


# ---------------------------------------------------------------------------
# scalar min-max oracle

_AO_BOX = 1e8
_AO_PATIENCE = 8


class _AOProblem:
    """Objective ``gamma tau/2 - alpha gamma/sqrt(delta) + r mu^2 + r alpha^2
    + E[M(alpha G + mu Z; tau/gamma)]``, maximised in gamma and minimised in
    (mu, alpha, tau)."""

    def __init__(self, loss, channel, delta, r, engine):
        self.loss = loss
        self.channel = channel
        self.sqd = math.sqrt(delta)
        self.r = r
        self.engine = engine
        self._last_log_gamma = 0.0
        self._escapes = 0

    def _env_terms(self, mu, alpha, lam):
        loss = self.loss

        def integrand(g, z):
            x = alpha * g + mu * z
            p = np.asarray(prox(loss, x, lam), dtype=float)
            d = x - p
            return (d * d / (2.0 * lam) + loss.value(p), (d / lam) ** 2,
                    z * d / lam, g * d / lam)

        return self.engine.expect_gz(self.channel, integrand)

    def gamma_slope(self, mu, alpha, tau, gamma):
        # d/dgamma of the objective; dM/dlam = -M'^2/2 and dlam/dgamma = -tau/gamma^2
        e = self._env_terms(mu, alpha, tau / gamma)
        return tau / 2.0 - alpha / self.sqd + tau * e[1] / (2.0 * gamma * gamma)

    def inner(self, mu, alpha, tau):
        """Maximise over gamma; the objective is concave in gamma.

        The slope is decreasing in log(gamma); the search starts from the
        previous maximiser and widens until the sign changes.
        """
        def slope(lg):
            return self.gamma_slope(mu, alpha, tau, math.exp(lg))

        centre = self._last_log_gamma
        width = 0.5
        lo, hi = centre - width, centre + width
        s_lo, s_hi = slope(lo), slope(hi)
        while s_lo < 0 and lo > -40.0:
            hi, s_hi = lo, s_lo
            width *= 2.0
            lo = hi - width
            s_lo = slope(lo)
        while s_hi > 0 and hi < 40.0:
            lo, s_lo = hi, s_hi
            width *= 2.0
            hi = lo + width
            s_hi = slope(hi)
        if s_hi > 0:
            return math.inf, None
        if s_lo < 0:
            return math.exp(lo), None
        lg = optimize.brentq(slope, lo, hi, xtol=1e-13, rtol=1e-14)
        self._last_log_gamma = lg
        return math.exp(lg), None

    def value_and_grad(self, params):
        mu, log_alpha, log_tau = params
        alpha, tau = math.exp(log_alpha), math.exp(log_tau)
        gamma, flag = self.inner(mu, alpha, tau)
        lam = tau / gamma
        # line searches may probe far-out points once; a run of them is a drift
        if max(abs(mu), alpha, lam) > _AO_BOX or min(alpha, lam) < 1.0 / _AO_BOX:
            self._escapes += 1
            if self._escapes >= _AO_PATIENCE:
                raise UnboundedSaddleError(
                    f"saddle search drifts to infinity (mu={mu:.3g}, alpha={alpha:.3g},"
                    f" lambda={lam:.3g})")
        else:
            self._escapes = 0
        if gamma == math.inf:
            # the inner sup is +inf here: push the outer search back
            return 1e10, np.array([0.0, -1e3 * alpha, 1e3 * tau])
        lam = tau / gamma
        e = self._env_terms(mu, alpha, lam)
        val = (gamma * tau / 2.0 - alpha * gamma / self.sqd
               + self.r * (mu * mu + alpha * alpha) + e[0])
        d_mu = 2.0 * self.r * mu + e[2]
        d_alpha = -gamma / self.sqd + 2.0 * self.r * alpha + e[3]
        d_tau = gamma / 2.0 - e[1] / (2.0 * gamma)
        return val, np.array([d_mu, d_alpha * alpha, d_tau * tau])


def solve_ao_saddle(loss: Loss, channel: Channel, delta: float, r: float = 0.0,
                    engine: Optional[ExpectationEngine] = None, cfg: Optional[SolverConfig] = None,
                    *, gtol=1e-10) -> SaddleSolution:
    """Solve the deterministic scalar min-max problem by nested optimisation.

    The inner maximisation over gamma is a bracketed root of its derivative;
    the outer minimisation runs BFGS over ``(mu, log alpha, log tau)`` with
    gradients from the envelope identities.  Returns ``lam = tau/gamma``.
    The point of this routine is independence from :func:`solve_fixed_point`:
    it never uses the fixed-point updates or the closed-form tau.
    """
    _check_delta(delta)
    engine = engine or default_engine()
    prob = _AOProblem(loss, channel, delta, r, engine)
    mu0 = engine.expect(channel, lambda g, s, y: s * y)
    x0 = np.array([mu0, 0.0, math.log(1.0 / math.sqrt(delta))])
    try:
        res = optimize.minimize(prob.value_and_grad, x0, jac=True, method="BFGS",
                                options={"gtol": gtol, "maxiter": 500})
    except (ArithmeticError, ValueError) as exc:
        raise OracleError(f"saddle optimisation failed: {exc}") from exc
    mu, log_alpha, log_tau = res.x
    alpha, tau = math.exp(log_alpha), math.exp(log_tau)
    gamma, _ = prob.inner(mu, alpha, tau)
    if not math.isfinite(gamma) or gamma <= 0:
        raise OracleError("inner maximisation is unbounded at the reported point")
    grad_norm = float(np.max(np.abs(res.jac)))
    if not res.success and grad_norm > 1e-6:
        raise OracleError(f"outer optimisation failed: {res.message} (|grad|={grad_norm:.2g})")
    lam = tau / gamma
    # a collapsing alpha or lambda is the scale-free signature of separable data
    if max(abs(mu), alpha, lam) > 1e6 or min(alpha, lam) < 1e-8:
        raise UnboundedSaddleError(
            f"saddle point is unbounded (mu={mu:.3g}, alpha={alpha:.3g}, lambda={lam:.3g})")
    residuals = system_residuals((mu, alpha, lam), loss, channel, engine, delta=delta, r=r)
    return SaddleSolution(mu=mu, alpha=alpha, lam=lam, delta=delta, r=r,
                          residual_norm=float(np.max(np.abs(residuals))),
                          residuals=tuple(map(float, residuals)), iterations=int(res.nit),
                          method="ao_saddle", loss=loss.name, channel=channel.describe(),
                          engine=engine.fingerprint())


# ---------------------------------------------------------------------------
# closed forms and the correlation map

def predicted_correlation(sol, *, return_flag=False):
    """``sqrt(1 / (1 + (alpha/mu)^2))``; zero, flagged degenerate, if mu = 0."""
    if isinstance(sol, SaddleSolution):
        mu, alpha = sol.mu, sol.alpha
    else:
        mu, alpha = sol
    if mu == 0:
        return (0.0, True) if return_flag else 0.0
    ratio = alpha / mu
    value = math.sqrt(1.0 / (1.0 + ratio * ratio))
    return (value, False) if return_flag else value


def ls_closed_form(delta: float, epsilon: float) -> SaddleSolution:
    """Exact solution for the loss ``(t - 1)^2`` under a BSC and r = 0."""
    _check_delta(delta)
    if not 0.0 <= epsilon <= 0.5:
        raise DomainError("epsilon must lie in [0, 0.5]")
    mu = (1.0 - 2.0 * epsilon) * SQRT_2_OVER_PI
    alpha2 = (1.0 - (1.0 - 2.0 * epsilon) ** 2 * 2.0 / math.pi) / (delta - 1.0)
    return SaddleSolution(mu=mu, alpha=math.sqrt(alpha2), lam=1.0 / (2.0 * (delta - 1.0)),
                          delta=delta, r=0.0, residual_norm=0.0, residuals=(0.0, 0.0, 0.0),
                          method="closed_form", loss="ls",
                          channel=Channel.bsc(epsilon).describe())

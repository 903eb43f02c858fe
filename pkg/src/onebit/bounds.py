"""Loss-independent limits: the Fisher-information bound and the separability threshold.

For any differentiable loss the performance ratio ``sigma = alpha/mu`` obeys

    sigma^2 * I(sigma*G + S*Y) >= 1/delta,

where ``I`` is the Fisher information of a location family.  Since the
left-hand side increases with ``sigma``, the smallest admissible ``sigma``
turns into an upper bound ``sqrt(1/(1 + sigma_min^2))`` on the correlation of
every such loss.

The density of ``W = sigma*G + Z`` with ``Z = S*Y`` is a two-piece skew
normal: with ``s^2 = 1 + sigma^2`` and ``k = 1/(sigma*s)``,

    p(w) = phi_s(w) * (2 eps + 2 (1 - 2 eps) Phi(k w)).

That closed form is the default route; :func:`fisher_info` also accepts
``method="quadrature"``, which convolves numerically and is used as the
independent check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import BracketError, DomainError, NumericError
from .expectation import Channel, ExpectationEngine, default_engine

__all__ = ["SYDensity", "density_sy", "DensityTable", "density_table", "fisher_info",
           "fisher_from_table", "BoundResult", "correlation_upper_bound",
           "analytic_noiseless_bound", "separability_threshold", "threshold_psi",
           "stam_gap", "GRID_POINTS", "P_FLOOR"]

GRID_POINTS = 8192
P_FLOOR = 1e-300
# finer grids are used for small sigma so the smoothed kink at 0 is resolved
_POINTS_PER_SIGMA = 64
_MAX_GRID_POINTS = 1 << 20
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_eps(epsilon):
    if not 0.0 <= epsilon <= 0.5:
        raise DomainError(f"epsilon must lie in [0, 0.5], got {epsilon}")


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


@dataclass(frozen=True)
class SYDensity:
    """Density of ``Z = S*Y``: ``2(1-eps) phi(z)`` for z > 0, ``2 eps phi(z)`` for z < 0."""

    epsilon: float

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        out = 2.0 * np.where(z > 0, 1.0 - self.epsilon, self.epsilon) * _phi(z)
        return out if out.ndim else float(out)

    __call__ = pdf

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        eps = self.epsilon
        neg = 2.0 * eps * special.ndtr(np.minimum(z, 0.0))
        pos = 2.0 * (1.0 - eps) * (special.ndtr(np.maximum(z, 0.0)) - 0.5)
        out = neg + pos
        return out if out.ndim else float(out)


def density_sy(epsilon: float) -> SYDensity:
    """Piecewise density of ``S*Y`` under a binary symmetric channel."""
    _check_eps(epsilon)
    return SYDensity(float(epsilon))


@dataclass
class DensityTable:
    """Density ``p`` and derivative ``dp`` of ``sigma*G + S*Y`` on a uniform grid."""

    grid: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    sigma: float
    epsilon: float

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def mass(self) -> float:
        return float(integrate.trapezoid(self.p, self.grid))

    def fisher(self) -> float:
        return fisher_from_table(self)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["w", "p", "dp"])
            for row in zip(self.grid, self.p, self.dp):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, sigma=float("nan"), epsilon=float("nan")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(grid=data[:, 0], p=data[:, 1], dp=data[:, 2], sigma=sigma, epsilon=epsilon)


def _grid(sigma, n_grid):
    half = 8.0 * (1.0 + sigma)
    if n_grid is None:
        n_grid = max(GRID_POINTS, int(math.ceil(2.0 * half * _POINTS_PER_SIGMA / sigma)))
        n_grid = min(n_grid, _MAX_GRID_POINTS)
    return np.linspace(-half, half, int(n_grid))


def _closed_form(w, sigma, epsilon):
    s2 = 1.0 + sigma * sigma
    s = math.sqrt(s2)
    k = 1.0 / (sigma * s)
    base = _phi(w / s) / s
    mix = 2.0 * epsilon + 2.0 * (1.0 - 2.0 * epsilon) * special.ndtr(k * w)
    p = base * mix
    dp = -w / s2 * p + base * 2.0 * (1.0 - 2.0 * epsilon) * k * _phi(k * w)
    return p, dp


def _convolved(w, sigma, epsilon):
    # p(w) = int phi_sigma(w - z) p_Z(z) dz and p'(w) uses the kernel's derivative
    dens = density_sy(epsilon)
    cut = 12.0

    def kernel(z):
        u = (w - z) / sigma
        base = _phi(u) / sigma * dens.pdf(z)
        return np.concatenate([base, -u / sigma * base])

    pieces = []
    for a, b in ((-cut, 0.0), (0.0, cut)):
        if (a < 0 and epsilon == 0.0):
            continue
        val, err = integrate.quad_vec(kernel, a, b, epsabs=1e-13, epsrel=1e-10,
                                      points=None, limit=400)
        pieces.append(val)
    total = np.sum(pieces, axis=0)
    if not np.all(np.isfinite(total)):
        raise NumericError("non-finite convolution integral")
    n = w.size
    return total[:n], total[n:]


def density_table(sigma: float, epsilon: float, *, n_grid: Optional[int] = None,
                  method: str = "closed_form", scale: float = 1.0) -> DensityTable:
    """Tabulate the density of ``scale * (sigma*G + S*Y)``.

    ``method="quadrature"`` computes each grid value by adaptive quadrature of
    the convolution integral; ``"closed_form"`` evaluates the skew-normal
    expression.  ``scale`` rescales the variable (used to audit
    ``I(cW) = I(W)/c^2``).
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    _check_eps(epsilon)
    if not scale > 0:
        raise DomainError("scale must be positive")
    w = _grid(sigma, n_grid) * scale
    u = w / scale
    if method == "closed_form":
        p, dp = _closed_form(u, sigma, epsilon)
    elif method == "quadrature":
        p, dp = _convolved(u, sigma, epsilon)
    else:
        raise DomainError(f"unknown density method {method!r}")
    p = np.maximum(p / scale, P_FLOOR)
    dp = dp / (scale * scale)
    return DensityTable(grid=w, p=p, dp=dp, sigma=float(sigma), epsilon=float(epsilon))


def fisher_from_table(table: DensityTable) -> float:
    """Trapezoid estimate of ``int dp^2 / p``."""
    integrand = np.square(table.dp) / table.p
    if not np.all(np.isfinite(integrand)):
        raise NumericError("non-finite Fisher integrand")
    return float(integrate.trapezoid(integrand, table.grid))


def fisher_info(sigma: float, epsilon: float, *, method: str = "closed_form",
                n_grid: Optional[int] = None) -> float:
    """Fisher information of ``sigma*G + S*Y`` (location parameter).

    Examples
    --------
    >>> round(fisher_info(1.0, 0.5), 6)
    0.5
    """
    return fisher_from_table(density_table(sigma, epsilon, n_grid=n_grid, method=method))


def stam_gap(sigma, *, method: str = "closed_form"):
    """``I(sigma*G + |S|) - 2/(1 + 2 sigma^2)``; nonpositive if the noiseless
    Stam-type inequality holds at ``sigma``."""
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    out = np.array([fisher_info(s, 0.0, method=method) - 2.0 / (1.0 + 2.0 * s * s) for s in sig])
    return out if np.ndim(sigma) else float(out[0])


@dataclass(frozen=True)
class BoundResult:
    """Smallest admissible ``sigma`` and the implied correlation ceiling."""

    delta: float
    epsilon: float
    sigma_min: float
    corr_upper: float
    method: str

    def to_record(self) -> dict:
        return asdict(self)


def _h(sigma, epsilon):
    return sigma * sigma * fisher_info(sigma, epsilon)


def correlation_upper_bound(delta: float, epsilon: float, *, lo: float = 1e-6,
                            hi: float = 1e3, xtol: float = 1e-12) -> BoundResult:
    """Upper bound on the correlation of every differentiable loss at ``(delta, eps)``.

    Solves ``sigma^2 I(sigma G + SY) = 1/delta`` for sigma; the left side is
    increasing, so the root is the smallest admissible ratio.

    Examples
    --------
    >>> round(correlation_upper_bound(2.0, 0.5).corr_upper, 5)
    0.70711
    """
    if not delta > 1:
        raise DomainError(f"delta must exceed 1, got {delta}")
    _check_eps(epsilon)
    target = 1.0 / delta

    def f(log_sigma):
        return _h(math.exp(log_sigma), epsilon) - target

    a, b = math.log(lo), math.log(hi)
    fa, fb = f(a), f(b)
    if fa > 0 or fb < 0:
        raise BracketError(f"h(sigma) - 1/delta does not change sign on [{lo}, {hi}]"
                           f" (values {fa:.3g}, {fb:.3g})")
    root = optimize.brentq(f, a, b, xtol=xtol, rtol=1e-13)
    sigma = math.exp(root)
    return BoundResult(delta=float(delta), epsilon=float(epsilon), sigma_min=sigma,
                       corr_upper=math.sqrt(1.0 / (1.0 + sigma * sigma)), method="numeric")


def analytic_noiseless_bound(delta: float) -> BoundResult:
    """Closed-form noiseless bound ``1/sqrt(1 + 1/(2(delta-1)))``."""
    if not delta > 1:
        raise DomainError(f"delta must exceed 1, got {delta}")
    s2 = 1.0 / (2.0 * (delta - 1.0))
    return BoundResult(delta=float(delta), epsilon=0.0, sigma_min=math.sqrt(s2),
                       corr_upper=1.0 / math.sqrt(1.0 + s2), method="analytic_noiseless")


def _neg_part_sq(a):
    # E_G[(G + a)_-^2] = (1 + a^2) Phi(-a) - a phi(a)
    return (1.0 + a * a) * special.ndtr(-a) - a * _phi(a)


def threshold_psi(c: float, epsilon: float, engine: Optional[ExpectationEngine] = None) -> float:
    """``psi(c) = E[(G + c*S*Y)_-^2]`` with the G-integral done exactly."""
    engine = engine or default_engine()
    return engine.expect_gz(Channel.bsc(epsilon), lambda g, z: _neg_part_sq(c * z))


def separability_threshold(epsilon: float, engine: Optional[ExpectationEngine] = None, *,
                           c_max: float = 100.0, xtol: float = 1e-6,
                           return_minimizer: bool = False):
    """Oversampling ratio below which noisy one-bit data are separable.

    ``delta*_eps = 1 / min_{c >= 0} psi(c)``.  ``psi`` is convex in ``c``
    because ``t -> (t)_-^2`` is convex and ``c -> g + c z`` is affine, so a
    bounded golden-section/Brent search on ``[0, c_max]`` finds the minimum.
    At ``eps = 0`` the infimum is 0 (attained only as c grows without
    bound) and ``inf`` is returned.
    """
    _check_eps(epsilon)
    if epsilon == 0.0:
        return (math.inf, math.inf) if return_minimizer else math.inf
    engine = engine or default_engine()
    res = optimize.minimize_scalar(lambda c: threshold_psi(c, epsilon, engine),
                                   bounds=(0.0, c_max), method="bounded",
                                   options={"xatol": xtol})
    if not res.success:
        raise NumericError(f"threshold search failed: {res.message}")
    value = 1.0 / float(res.fun)
    return (value, float(res.x)) if return_minimizer else value

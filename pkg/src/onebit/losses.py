"""Scalar convex losses, proximal operators and Moreau envelopes.

Every function here is vectorised: ``x`` and ``t`` may be scalars or numpy
arrays and results broadcast accordingly.  The envelope is

    M(x; lam) = min_v (x - v)^2 / (2 lam) + loss(v)

and its minimiser is the proximal point.  Derivatives of the envelope are
always obtained from the proximal point, never from finite differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import CapabilityError, DomainError, NumericError

__all__ = [
    "Kind", "Smoothness", "Loss", "EnvelopeEval",
    "least_squares", "least_abs_dev", "hinge", "logistic", "exponential",
    "custom", "scaled", "make_loss", "loss_from_config", "LOSS_NAMES",
    "prox", "numeric_prox", "moreau_env", "loss_derivatives", "soft_threshold",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]


class Kind(str, enum.Enum):
    LEAST_SQUARES = "ls"
    LEAST_ABS_DEV = "lad"
    HINGE = "hinge"
    LOGISTIC = "logistic"
    EXPONENTIAL = "exponential"
    CUSTOM = "custom"


class Smoothness(enum.IntEnum):
    NONSMOOTH = 0
    C1 = 1
    C2 = 2


@dataclass(frozen=True)
class Loss:
    """An immutable convex scalar loss.

    ``subgrad`` returns the right derivative and is what the generic prox
    solver falls back on for nonsmooth losses.  ``closed_prox`` is used by
    :func:`prox` whenever present unless the numeric path is forced.
    """

    kind: Kind
    name: str
    value: ArrayFn
    smoothness: Smoothness
    d1: Optional[ArrayFn] = None
    d2: Optional[ArrayFn] = None
    subgrad: Optional[ArrayFn] = None
    closed_prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    minimizer: Optional[float] = None
    # nonnegative with loss(t) -> 0 as t -> +inf; such losses have unbounded
    # minimisers on linearly separable data
    vanishes_at_infinity: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, t):
        return self.value(np.asarray(t, dtype=float))

    def right_derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.subgrad is not None:
            return self.subgrad(t)
        if self.d1 is not None:
            return self.d1(t)
        h = 1e-7 * (1.0 + np.abs(t))
        return (self.value(t + h) - self.value(t)) / h


@dataclass(frozen=True)
class EnvelopeEval:
    x: float
    lam: float
    prox_point: float
    env_value: float
    env_dx: float
    env_dlambda: float


def soft_threshold(x, tau):
    """Standard soft-thresholding ``sign(x) * max(|x| - tau, 0)``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


# ---------------------------------------------------------------------------
# builtin losses

def least_squares() -> Loss:
    """``(t - 1)^2``; note the absence of a 1/2 factor."""
    return Loss(
        kind=Kind.LEAST_SQUARES,
        name="ls",
        value=lambda t: (t - 1.0) ** 2,
        smoothness=Smoothness.C2,
        d1=lambda t: 2.0 * (t - 1.0),
        d2=lambda t: np.full_like(t, 2.0, dtype=float),
        closed_prox=lambda x, lam: (x + 2.0 * lam) / (1.0 + 2.0 * lam),
        minimizer=1.0,
    )


def least_abs_dev() -> Loss:
    return Loss(
        kind=Kind.LEAST_ABS_DEV,
        name="lad",
        value=lambda t: np.abs(t - 1.0),
        smoothness=Smoothness.NONSMOOTH,
        subgrad=lambda t: np.where(t >= 1.0, 1.0, -1.0),
        closed_prox=lambda x, lam: 1.0 + soft_threshold(x - 1.0, lam),
        minimizer=1.0,
    )


def hinge() -> Loss:
    return Loss(
        kind=Kind.HINGE,
        name="hinge",
        value=lambda t: np.maximum(1.0 - t, 0.0),
        smoothness=Smoothness.NONSMOOTH,
        subgrad=lambda t: np.where(t >= 1.0, 0.0, -1.0),
        closed_prox=lambda x, lam: 1.0 + soft_threshold(x + 0.5 * lam - 1.0, 0.5 * lam),
        minimizer=1.0,
        vanishes_at_infinity=True,
    )


def _logistic_d2(t):
    return expit(t) * expit(-t)


def logistic() -> Loss:
    return Loss(
        kind=Kind.LOGISTIC,
        name="logistic",
        value=lambda t: np.logaddexp(0.0, -t),
        smoothness=Smoothness.C2,
        d1=lambda t: -expit(-t),
        d2=_logistic_d2,
        vanishes_at_infinity=True,
    )


def _exp_neg(t):
    # overflow to inf is fine for the values, the prox bracket guards itself
    with np.errstate(over="ignore"):
        return np.exp(-t)


def exponential() -> Loss:
    return Loss(
        kind=Kind.EXPONENTIAL,
        name="exponential",
        value=_exp_neg,
        smoothness=Smoothness.C2,
        d1=lambda t: -_exp_neg(t),
        d2=_exp_neg,
        vanishes_at_infinity=True,
    )


def custom(value, *, name="custom", smoothness=Smoothness.NONSMOOTH, d1=None,
           d2=None, subgrad=None, prox_fn=None, minimizer=None,
           vanishes_at_infinity=False, params=None) -> Loss:
    """Build a user-defined loss.

    Without ``prox_fn`` the generic numeric prox solver is used.
    """
    smoothness = Smoothness(smoothness)
    if smoothness >= Smoothness.C1 and d1 is None:
        raise DomainError("a C1 loss needs its derivative d1")
    if smoothness >= Smoothness.C2 and d2 is None:
        raise DomainError("a C2 loss needs its second derivative d2")
    return Loss(kind=Kind.CUSTOM, name=name, value=value, smoothness=smoothness,
                d1=d1, d2=d2, subgrad=subgrad, closed_prox=prox_fn,
                minimizer=minimizer, vanishes_at_infinity=vanishes_at_infinity,
                params=dict(params or {}))


def scaled(base: Loss, scale: float, *, numeric_prox: bool = False) -> Loss:
    """Return ``scale * base`` as a custom loss.

    ``prox_{c l}(x; lam) = prox_l(x; c lam)`` keeps the closed form unless
    ``numeric_prox`` asks for the generic solver.
    """
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    c = float(scale)

    def _mul(fn):
        return None if fn is None else (lambda t: c * fn(t))

    closed = None
    if not numeric_prox:
        closed = lambda x, lam: prox(base, x, c * lam)  # noqa: E731
    return custom(
        lambda t: c * base.value(t),
        name=f"{c:g}*{base.name}",
        smoothness=base.smoothness,
        d1=_mul(base.d1), d2=_mul(base.d2), subgrad=_mul(base.subgrad),
        prox_fn=closed,
        minimizer=base.minimizer,
        vanishes_at_infinity=base.vanishes_at_infinity,
        params={"builtin": base.name, "scale": c, "numeric_prox": numeric_prox},
    )


_BUILTINS = {
    "ls": least_squares,
    "lad": least_abs_dev,
    "hinge": hinge,
    "logistic": logistic,
    "exponential": exponential,
}
_ALIASES = {
    "least_squares": "ls", "leastsquares": "ls",
    "least_abs_dev": "lad", "leastabsdev": "lad",
    "exp": "exponential", "adaboost": "exponential",
    "logit": "logistic",
}
LOSS_NAMES = tuple(_BUILTINS)


def make_loss(name: str) -> Loss:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return _BUILTINS[key]()
    except KeyError:
        raise DomainError(
            f"unknown loss {name!r}; expected one of {', '.join(LOSS_NAMES)}"
        ) from None


def loss_from_config(cfg) -> Loss:
    """Resolve a loss from a name or a ``{"builtin": ..., "scale": ...}`` map.

    ``{"builtin": "ls", "scale": 0.5}`` gives the half-scaled least squares.
    """
    if isinstance(cfg, str):
        return make_loss(cfg)
    cfg = dict(cfg)
    base = make_loss(cfg.pop("builtin", cfg.pop("name", "")))
    scale = float(cfg.pop("scale", 1.0))
    numeric = bool(cfg.pop("numeric_prox", False))
    if cfg:
        raise DomainError(f"unknown loss parameters: {sorted(cfg)}")
    if scale == 1.0 and not numeric:
        return base
    return scaled(base, scale, numeric_prox=numeric)


# ---------------------------------------------------------------------------
# proximal operator

def _check_lam(lam):
    lam_arr = np.asarray(lam, dtype=float)
    if not np.all(lam_arr > 0):
        raise DomainError(f"lambda must be positive, got {lam}")
    return lam_arr


def _bracket(loss, x, lam):
    # the prox p solves p = x - lam * g(p) with g nondecreasing, so it lies
    # between x and x - lam * g(x)
    with np.errstate(over="ignore", invalid="ignore"):
        other = x - lam * loss.right_derivative(x)
    lo = np.minimum(x, other)
    hi = np.maximum(x, other)
    # very wide brackets (steep losses far from their minimum) are replaced
    # by a doubling search so bisection stays within max_iter
    with np.errstate(invalid="ignore"):
        bad = ~np.isfinite(lo) | ~np.isfinite(hi) | (hi - lo > 1e3 * (1.0 + np.abs(x)))
    if np.any(bad):
        lo, hi = _expand_bracket(loss, x, lam, lo, hi, bad)
    return lo, hi


def _phi(loss, v, x, lam):
    with np.errstate(over="ignore", invalid="ignore"):
        return v - x + lam * loss.right_derivative(v)


def _expand_bracket(loss, x, lam, lo, hi, bad):
    lo = np.where(bad, x, lo)
    hi = np.where(bad, x, hi)
    lam_b = np.broadcast_to(lam, x.shape)
    step = np.ones_like(x)
    for _ in range(200):
        f_lo = _phi(loss, lo, x, lam_b)
        f_hi = _phi(loss, hi, x, lam_b)
        need_lo = bad & ~(f_lo <= 0)
        need_hi = bad & ~(f_hi >= 0)
        if not (need_lo.any() or need_hi.any()):
            return lo, hi
        lo = np.where(need_lo, lo - step, lo)
        hi = np.where(need_hi, hi + step, hi)
        step = step * 2.0
    raise NumericError("could not bracket the proximal point")


def numeric_prox(loss: Loss, x, lam, *, tol=1e-12, max_iter=200):
    """Generic prox: safeguarded Newton on ``v + lam*l'(v) = x``.

    Losses without a second derivative are solved by plain bisection on the
    right derivative, which is exact at kinks because the optimality map is
    monotone and right-continuous.
    """
    x = np.asarray(x, dtype=float)
    lam = _check_lam(lam)
    x, lam = np.broadcast_arrays(x, lam)
    x = np.array(x, dtype=float)
    lam = np.array(lam, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("prox argument must be finite")
    shape = x.shape
    x = x.ravel()
    lam = lam.ravel()
    lo, hi = _bracket(loss, x, lam)
    use_newton = loss.d2 is not None and loss.d1 is not None
    v = np.clip(x, lo, hi)
    last_step = np.full_like(v, np.inf)
    # iterate only on entries that have not converged yet
    active = np.flatnonzero(hi - lo > tol * (1.0 + np.abs(v)))
    for _ in range(max_iter):
        if active.size == 0:
            break
        va, xa, la = v[active], x[active], lam[active]
        lo_a, hi_a = lo[active], hi[active]
        f = _phi(loss, va, xa, la)
        lo_a = np.where(f < 0, va, lo_a)
        hi_a = np.where(f >= 0, va, hi_a)
        mid = 0.5 * (lo_a + hi_a)
        scale = tol * (1.0 + np.abs(va))
        if use_newton:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                step = f / (1.0 + la * loss.d2(va))
                cand = va - step
            # bisect whenever Newton leaves the bracket or stalls
            ok = (np.isfinite(cand) & (cand >= lo_a) & (cand <= hi_a)
                  & (np.abs(step) <= 0.5 * last_step[active]))
            new_v = np.where(ok, cand, mid)
            last_step[active] = np.where(ok, np.abs(step), np.abs(mid - va))
            small = np.abs(new_v - va) <= scale
        else:
            new_v = mid
            small = np.zeros(active.size, dtype=bool)
        hit = f == 0
        v[active] = np.where(hit, va, new_v)
        lo[active], hi[active] = lo_a, hi_a
        finished = hit | small | (hi_a - lo_a <= scale)
        active = active[~finished]
    else:
        if active.size:
            raise NumericError(
                f"prox did not converge in {max_iter} iterations",
                node=float(x[active[0]]),
            )
    v = v.reshape(shape)
    return v if v.ndim else float(v)


def prox(loss: Loss, x, lam, *, numeric: bool = False, **kwargs):
    """Proximal point ``argmin_v (x - v)^2/(2 lam) + loss(v)``.

    Closed forms are used for least squares, LAD and hinge; pass
    ``numeric=True`` to force the generic solver instead.
    """
    lam_arr = _check_lam(lam)
    x_arr = np.asarray(x, dtype=float)
    if loss.closed_prox is not None and not numeric:
        out = loss.closed_prox(x_arr, lam_arr)
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)
    return numeric_prox(loss, x_arr, lam_arr, **kwargs)


def moreau_env(loss: Loss, x, lam, *, numeric: bool = False) -> EnvelopeEval:
    """Envelope value and both partial derivatives at ``(x, lam)``."""
    lam_arr = _check_lam(lam)
    x_arr = np.asarray(x, dtype=float)
    p = np.asarray(prox(loss, x_arr, lam_arr, numeric=numeric), dtype=float)
    r = x_arr - p
    value = r * r / (2.0 * lam_arr) + loss.value(p)
    dx = r / lam_arr
    dlam = -(r * r) / (2.0 * lam_arr * lam_arr)

    def _out(a):
        a = np.asarray(a, dtype=float)
        return a if a.ndim else float(a)

    return EnvelopeEval(x=_out(x_arr), lam=_out(lam_arr), prox_point=_out(p),
                        env_value=_out(value), env_dx=_out(dx),
                        env_dlambda=_out(dlam))


def envelope_dx(loss: Loss, x, lam):
    """``dM/dx = (x - prox)/lam``, the quantity the saddle system averages."""
    x = np.asarray(x, dtype=float)
    return (x - np.asarray(prox(loss, x, lam), dtype=float)) / lam


def loss_derivatives(loss: Loss, t, *, second: bool = True):
    """Return ``(l'(t), l''(t))``; the second entry is None if unavailable."""
    if loss.smoothness < Smoothness.C1 or loss.d1 is None:
        raise CapabilityError(f"loss {loss.name!r} is not differentiable")
    t_arr = np.asarray(t, dtype=float)
    d1 = np.asarray(loss.d1(t_arr), dtype=float)
    d2 = None
    if second and loss.smoothness >= Smoothness.C2 and loss.d2 is not None:
        d2 = np.asarray(loss.d2(t_arr), dtype=float)
        d2 = d2 if d2.ndim else float(d2)
    return (d1 if d1.ndim else float(d1)), d2


def second_derivative(loss: Loss, t):
    if loss.smoothness < Smoothness.C2 or loss.d2 is None:
        raise CapabilityError(f"loss {loss.name!r} has no second derivative")
    return loss.d2(np.asarray(t, dtype=float))


def with_numeric_prox(loss: Loss) -> Loss:
    """Copy of ``loss`` that always goes through the generic solver."""
    return replace(loss, closed_prox=None)

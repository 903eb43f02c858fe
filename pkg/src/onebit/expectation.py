"""Expectations over the triple (G, S, Y).

G and S are independent standard normals and Y in {-1, +1} is drawn given S
from a :class:`Channel`.  The label is always averaged out exactly,

    E[h(G, S, Y)] = E_{G,S}[ P(Y=1|S) h(G, S, 1) + P(Y=-1|S) h(G, S, -1) ],

so only the Gaussian pair is integrated numerically, either by a tensor
quadrature rule or by plain Monte Carlo with a fixed seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_hermitenorm, roots_legendre

from .errors import DomainError, NumericError

__all__ = ["Channel", "ExpectationEngine", "expect", "quadrature_engine",
           "monte_carlo_engine", "default_engine"]

# half-line cut-off for the S rule; phi(10) ~ 8e-23
_S_CUTOFF = 10.0


@dataclass(frozen=True)
class Channel:
    """Label model: a binary symmetric channel or a general link ``f``.

    For ``mode == "bsc"``, ``Y = sign(S)`` flipped with probability
    ``epsilon``.  For ``mode == "link"``, ``P(Y = 1 | S = s) = link(s)``.
    """

    epsilon: float = 0.0
    link: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    mode: str = "bsc"

    def __post_init__(self):
        if self.mode == "bsc":
            if not 0.0 <= self.epsilon <= 0.5:
                raise DomainError(f"epsilon must lie in [0, 0.5], got {self.epsilon}")
        elif self.mode == "link":
            if self.link is None:
                raise DomainError("link mode needs a link function")
            grid = np.linspace(-8.0, 8.0, 161)
            vals = np.asarray(self.link(grid), dtype=float)
            if np.any(vals < 0.0) or np.any(vals > 1.0) or not np.all(np.isfinite(vals)):
                raise DomainError("link must map into [0, 1]")
        else:
            raise DomainError(f"unknown channel mode {self.mode!r}")

    @classmethod
    def bsc(cls, epsilon: float) -> "Channel":
        return cls(epsilon=float(epsilon))

    @classmethod
    def from_link(cls, link) -> "Channel":
        return cls(epsilon=float("nan"), link=link, mode="link")

    def prob_plus(self, s):
        """P(Y = +1 | S = s)."""
        s = np.asarray(s, dtype=float)
        if self.mode == "bsc":
            return np.where(s > 0, 1.0 - self.epsilon, self.epsilon)
        return np.asarray(self.link(s), dtype=float)

    def as_link(self):
        """The equivalent link ``1/2 + (1 - 2 eps)/2 * sign(t)``."""
        if self.mode == "link":
            return self.link
        eps = self.epsilon
        return lambda t: 0.5 + 0.5 * (1.0 - 2.0 * eps) * np.sign(t)

    def sample(self, s, rng):
        """Draw labels for latent values ``s``."""
        u = rng.random(np.shape(s))
        return np.where(u < self.prob_plus(s), 1.0, -1.0)

    def describe(self) -> str:
        return f"bsc(eps={self.epsilon:g})" if self.mode == "bsc" else "link"


class ExpectationEngine:
    """Fixed nodes (quadrature) or fixed draws (Monte Carlo) for (G, S).

    Nodes and draws are created once and reused by every call, so the
    fixed-point solver sees a deterministic, smooth-in-parameters system.

    Parameters
    ----------
    method : {"quadrature", "montecarlo"}
        ``"gh"`` and ``"mc"`` are accepted aliases.
    nodes : int
        Points per axis for quadrature.  G uses Gauss-Hermite; S is folded at
        zero and each half-line uses Gauss-Legendre on ``[0, 10]`` so the
        sign discontinuity of the channel never falls inside a rule.
    samples : int
        Monte-Carlo draws of (G, S).
    seed : int
        Monte-Carlo seed.
    """

    def __init__(self, method="quadrature", nodes=128, samples=100_000, seed=0):
        method = {"gh": "quadrature", "mc": "montecarlo"}.get(method, method)
        if method not in ("quadrature", "montecarlo"):
            raise DomainError(f"unknown engine method {method!r}")
        self.method = method
        self.nodes = int(nodes)
        self.samples = int(samples)
        self.seed = int(seed)
        self._z_cache = {}
        if method == "quadrature":
            if self.nodes < 2:
                raise DomainError("need at least 2 quadrature nodes")
            g, w_g = roots_hermitenorm(self.nodes)
            w_g = w_g / np.sqrt(2.0 * np.pi)
            xl, wl = roots_legendre(self.nodes)
            t = 0.5 * _S_CUTOFF * (xl + 1.0)
            w_t = 0.5 * _S_CUTOFF * wl * np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)
            s = np.concatenate([t, -t])
            w_s = np.concatenate([w_t, w_t])
            self.g = g[:, None]
            self.s = s[None, :]
            self.weights = w_g[:, None] * w_s[None, :]
        else:
            if self.samples < 2:
                raise DomainError("need at least 2 Monte-Carlo samples")
            rng = np.random.default_rng(self.seed)
            z = rng.standard_normal((2, self.samples))
            self.g = z[0]
            self.s = z[1]
            self.weights = np.full(self.samples, 1.0 / self.samples)

    def __repr__(self):
        return f"ExpectationEngine({self.fingerprint()})"

    def fingerprint(self) -> str:
        if self.method == "quadrature":
            return f"quadrature:{self.nodes}"
        return f"montecarlo:{self.samples}:seed={self.seed}"

    def digest(self) -> str:
        return hashlib.sha1(self.fingerprint().encode()).hexdigest()[:12]

    def config(self) -> dict:
        return {"method": self.method, "nodes": self.nodes,
                "samples": self.samples, "seed": self.seed}

    def label_weights(self, channel: Channel):
        p = channel.prob_plus(self.s)
        return p, 1.0 - p

    def expect(self, channel: Channel, integrand, *, return_se=False):
        """Estimate ``E[h(G, S, Y)]``.

        ``integrand(g, s, y)`` receives broadcastable arrays and a scalar
        label.  It may return a single array or a tuple of arrays, in which
        case a vector of expectations is returned.  With ``return_se`` the
        Monte-Carlo standard error is returned alongside (zero for
        quadrature).
        """
        p_plus, p_minus = self.label_weights(channel)
        h_plus = integrand(self.g, self.s, 1.0)
        h_minus = integrand(self.g, self.s, -1.0)
        multi = isinstance(h_plus, (tuple, list))
        if not multi:
            h_plus, h_minus = (h_plus,), (h_minus,)
        means, ses = [], []
        shape = np.broadcast_shapes(np.shape(self.g), np.shape(self.s))
        for hp, hm in zip(h_plus, h_minus):
            vals = (p_plus * np.broadcast_to(hp, shape)
                    + p_minus * np.broadcast_to(hm, shape))
            if not np.all(np.isfinite(vals)):
                self._raise_bad(vals)
            # numpy's sum is pairwise, so the reduction order is fixed
            means.append(float(np.sum(self.weights * vals)))
            if return_se:
                ses.append(self._standard_error(vals))
        out = np.array(means) if multi else means[0]
        if return_se:
            return out, (np.array(ses) if multi else ses[0])
        return out

    def z_nodes(self, channel: Channel):
        """Nodes and weights for the pair (G, Z) with ``Z = S * Y``.

        Integrands of the saddle system depend on (S, Y) only through Z, so
        folding the label into Z halves the work.  Returns ``(g, z, w)``
        broadcastable arrays; nodes with zero weight are dropped.
        """
        key = (channel.mode, channel.epsilon, id(channel.link))
        cached = self._z_cache.get(key)
        if cached is not None:
            return cached
        s = np.asarray(self.s)
        p_plus, p_minus = self.label_weights(channel)
        p_plus = np.broadcast_to(p_plus, s.shape)
        p_minus = np.broadcast_to(p_minus, s.shape)
        if self.method == "quadrature":
            # the S rule is symmetric (columns t then -t): Z = s collects node s
            # with Y = +1 and node -s with Y = -1
            k = self.nodes
            mirror = np.concatenate([np.arange(k, 2 * k), np.arange(k)])
            w = self.weights * p_plus + (self.weights * p_minus)[:, mirror]
            keep = np.any(w > 0, axis=0)
            out = (self.g, s[:, keep], w[:, keep])
        else:
            z = np.concatenate([s, -s])
            w = np.concatenate([self.weights * p_plus, self.weights * p_minus])
            g = np.concatenate([self.g, self.g])
            keep = w > 0
            out = (g[keep], z[keep], w[keep])
        self._z_cache[key] = out
        return out

    def expect_gz(self, channel: Channel, integrand):
        """``E[h(G, Z)]`` for integrands of ``G`` and ``Z = S*Y`` only.

        ``integrand(g, z)`` may return an array or a tuple of arrays.
        """
        g, z, w = self.z_nodes(channel)
        h = integrand(g, z)
        multi = isinstance(h, (tuple, list))
        hs = h if multi else (h,)
        shape = np.broadcast_shapes(np.shape(g), np.shape(z))
        out = []
        for vals in hs:
            vals = np.broadcast_to(vals, shape)
            if not np.all(np.isfinite(vals)):
                self._raise_bad(vals, g, z)
            out.append(float(np.sum(w * vals)))
        return np.array(out) if multi else out[0]

    def _standard_error(self, vals):
        if self.method == "quadrature":
            return 0.0
        return float(np.std(vals, ddof=1) / np.sqrt(vals.size))

    def _raise_bad(self, vals, g_nodes=None, s_nodes=None):
        g_nodes = self.g if g_nodes is None else g_nodes
        s_nodes = self.s if s_nodes is None else s_nodes
        idx = np.unravel_index(np.argmax(~np.isfinite(vals)), vals.shape)
        g = np.broadcast_to(g_nodes, vals.shape)[idx]
        s = np.broadcast_to(s_nodes, vals.shape)[idx]
        raise NumericError(f"non-finite integrand at g={g:.6g}, s={s:.6g}",
                           node=(float(g), float(s)))


def expect(engine: ExpectationEngine, channel: Channel, integrand, **kwargs):
    return engine.expect(channel, integrand, **kwargs)


def quadrature_engine(nodes=128) -> ExpectationEngine:
    return ExpectationEngine("quadrature", nodes=nodes)


def monte_carlo_engine(samples=100_000, seed=0) -> ExpectationEngine:
    return ExpectationEngine("montecarlo", samples=samples, seed=seed)


def default_engine() -> ExpectationEngine:
    return quadrature_engine(128)

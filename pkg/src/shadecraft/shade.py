"""Shading strategies: how a strategic bidder maps values to bids.

Every strategy knows its bid function, the bid function's derivative, the
induced bid distribution, and the virtualized bid psi_B(beta(x)) computed
through the transform identity beta(x) + beta'(x) (psi_X(x) - x). Strategies
built from a target virtualized bid h carry h in closed form; the grid route
through the induced bid distribution is kept for cross-checking.
"""

import numpy as np

from . import _quad
from .dist import (GRID_N, DistributionModel, GPDistribution, GPParams, GridDistribution,
                   GridFunction, make_gp, transform_distribution)
from .errors import InvalidParams, NonMonotone, NonRegular

DEFAULT_EPS = 1e-6  # the "0+" convention for one_vs_uniform_shading


class ShadingStrategy:
    """Base class; subclasses define bid() and bid_derivative()."""

    base: DistributionModel
    kinks: tuple = ()  # value-space locations where the virtualized bid has kinks

    def bid(self, x):
        raise NotImplementedError

    def bid_derivative(self, x):
        raise NotImplementedError

    def virtualized_bid(self, x):
        """psi_B(bid(x)) via the transform identity."""
        x = np.asarray(x, dtype=float)
        return self.bid(x) + self.bid_derivative(x) * (self._base_virtual(x) - x)

    def _base_virtual(self, x):
        if isinstance(self.base, GridDistribution):
            return self.base.virtual_value_clamped(x)
        return self.base.virtual_value(x)

    def bid_distribution(self) -> DistributionModel:
        """Distribution of B = bid(X); cached after first construction."""
        cached = getattr(self, "_bid_dist", None)
        if cached is None:
            cached = self._make_bid_distribution()
            self._bid_dist = cached
        return cached

    def _make_bid_distribution(self) -> DistributionModel:
        return transform_distribution(self.base, self.as_grid_function())

    def as_grid_function(self, n=GRID_N) -> GridFunction:
        xs = self.base.default_grid(n)
        if self.kinks:
            xs = np.unique(np.concatenate([xs, np.asarray(self.kinks, dtype=float)]))
            xs = xs[(xs >= xs[0]) & (xs <= self.base.grid_upper())]
        return GridFunction(xs, self.bid(xs))


class LinearShading(ShadingStrategy):
    """bid(x) = alpha * x with 0 < alpha <= 1."""

    def __init__(self, base: DistributionModel, alpha: float):
        alpha = float(alpha)
        if not 0 < alpha <= 1:
            raise InvalidParams(f"alpha must lie in (0, 1], got {alpha}")
        self.base = base
        self.alpha = alpha

    def bid(self, x):
        return self.alpha * np.asarray(x, dtype=float)

    def bid_derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.alpha)

    def virtualized_bid(self, x):
        return self.alpha * self._base_virtual(np.asarray(x, dtype=float))

    def _make_bid_distribution(self):
        if isinstance(self.base, GPDistribution):
            p = self.base.params
            return make_gp(self.alpha * p.mu, self.alpha * p.sigma, p.xi)
        return super()._make_bid_distribution()


class GridShading(ShadingStrategy):
    """bid(x) tabulated on a grid, optionally with a known target virtualized bid."""

    def __init__(self, base, bid_function: GridFunction, target=None,
                 target_derivative=None, kinks=()):
        self.base = base
        self._bid_fn = bid_function
        self._target = target
        self._target_deriv = target_derivative
        self.kinks = tuple(kinks)

    def bid(self, x):
        return self._bid_fn(x)

    def bid_derivative(self, x):
        # with a known target the shading ODE gives the exact derivative:
        # gamma'(x) = (h(x) - gamma(x)) / (psi(x) - x); fall back to the
        # interpolant where psi(x) - x ~ 0 (the upper support endpoint)
        if self._target is None:
            return self._bid_fn.derivative(x)
        x = np.asarray(x, dtype=float)
        gap = self._base_virtual(x) - x
        safe = np.abs(gap) > 1e-9
        ode = (np.asarray(self._target(x)) - self.bid(x)) / np.where(safe, gap, 1.0)
        return np.where(safe, ode, self._bid_fn.derivative(x))

    def virtualized_bid(self, x):
        if self._target is not None:
            return np.asarray(self._target(np.asarray(x, dtype=float)))
        return super().virtualized_bid(x)

    def _make_bid_distribution(self):
        if self._target is None:
            return super()._make_bid_distribution()
        xs = self.base.default_grid()
        ks = np.asarray(self.kinks, dtype=float)
        if ks.size:
            xs = np.unique(np.concatenate([xs, ks[(ks > xs[0]) & (ks < xs[-1])]]))
        slope = np.clip(self.bid_derivative(xs), 1e-300, None)
        return GridDistribution(self.bid(xs), self.base.cdf(xs), self.base.pdf(xs) / slope)

    def as_grid_function(self, n=GRID_N):
        return self._bid_fn


class GPReparamShading(ShadingStrategy):
    """Bid so that the bid distribution is exactly GP(params).

    bid(x) = (sigma/xi) [(1 - F1(x))^{-xi} - 1] + mu, increasing in x.
    """

    def __init__(self, base: DistributionModel, params: GPParams):
        self.base = base
        self.params = params

    def bid(self, x):
        p = self.params
        u = self.base.sf(np.asarray(x, dtype=float))
        if p.xi == 0:
            return p.mu - p.sigma * np.log(np.clip(u, 1e-300, None))
        return p.mu + (p.sigma / p.xi) * (u ** (-p.xi) - 1.0)

    def bid_derivative(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        u = self.base.sf(x)
        return p.sigma * self.base.pdf(x) * np.clip(u, 1e-300, None) ** (-p.xi - 1.0)

    def virtualized_bid(self, x):
        p = self.params
        return (1.0 - p.xi) * self.bid(x) - p.sigma + p.xi * p.mu

    def _make_bid_distribution(self):
        return GPDistribution(self.params)


def truthful(base: DistributionModel) -> ShadingStrategy:
    return LinearShading(base, 1.0)


def linear_shading(base: DistributionModel, alpha: float) -> ShadingStrategy:
    """Linear shading bid = alpha * value; induces psi_B(alpha x) = alpha psi_X(x)."""
    return LinearShading(base, alpha)


def gamma_from_target(model: DistributionModel, h, kinks=(), n=GRID_N) -> GridFunction:
    """Solve the shading ODE so the virtualized bid equals h: gamma(x) = E[h(X) | X >= x].

    h must be increasing on the support. Tail integrals are computed with
    per-interval Gauss-Legendre panels accumulated from the upper endpoint;
    the upper endpoint itself takes the analytic limit gamma(u) = h(u).
    """
    xs = model.default_grid(n)
    ks = [k for k in kinks if xs[0] < k < xs[-1]]
    if ks:
        xs = np.unique(np.concatenate([xs, np.asarray(ks, dtype=float)]))
    hx = np.asarray(h(xs), dtype=float)
    if np.any(np.diff(hx) < 0):
        raise NonMonotone("target h must be increasing on the support")
    panels = _quad.panel_integrals(lambda t: np.asarray(h(t)) * model.pdf(t), xs)
    tail = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
    sf = np.clip(model.sf(xs), 1e-300, None)
    values = tail / sf
    values[-1] = hx[-1]
    return GridFunction(xs, values)


def first_price_bid(model: DistributionModel, k: int) -> GridFunction:
    """Symmetric first-price equilibrium bid against k-1 i.i.d. rivals.

    beta_I(x) = E[Y1 | Y1 < x] where Y1 is the max of k-1 draws from the
    model; computed as a prefix integral of y dG(y) over G(x) = F^{k-1}(x).
    """
    if k < 2:
        raise InvalidParams("k must be >= 2")
    xs = model.default_grid()
    big_g = model.cdf(xs) ** (k - 1)
    if np.any(big_g[1:] <= 0):
        raise InvalidParams("cdf must be positive beyond the lower support endpoint")
    panels = _quad.panel_integrals(
        lambda t: t * (k - 1) * model.cdf(t) ** (k - 2) * model.pdf(t), xs)
    prefix = np.concatenate([[0.0], np.cumsum(panels)])
    values = np.empty_like(xs)
    values[0] = xs[0]
    values[1:] = prefix[1:] / big_g[1:]
    return GridFunction(xs, values)


def equilibrium_shading(model: DistributionModel, k: int) -> ShadingStrategy:
    """Symmetric Myerson equilibrium: shade so the virtualized bid equals the
    first-price bid, i.e. bid(x) = E[beta_I(X) | X >= x]."""
    if k < 2:
        raise InvalidParams("k must be >= 2")
    if not model.is_regular:
        raise NonRegular("equilibrium shading requires a regular value distribution")
    beta_i = first_price_bid(model, k)
    gamma = gamma_from_target(model, beta_i)
    return GridShading(model, gamma, target=beta_i, target_derivative=beta_i.derivative)


def one_vs_uniform_shading(model: DistributionModel, k: int,
                           eps: float = DEFAULT_EPS) -> ShadingStrategy:
    """Near-optimal shading for one strategic bidder against k-1 truthful
    Unif[0,1] bidders (k bidders in total).

    The target virtualized bid is the piecewise function h_k^eps: a slope
    (k-1)/k * eps/(1+eps) ramp below (1+eps)/(k-1) and the affine
    (k-1)/k (x - 1/(k-1)) branch above. eps > 0 keeps the virtualized bid
    strictly positive, so the bidder always clears her (vanishing) reserve.
    """
    if k < 2:
        raise InvalidParams("k must be >= 2")
    if eps < 0:
        raise InvalidParams("eps must be >= 0")
    lo, hi = model.support
    bound = (k + 1) / (k - 1)
    if lo < -1e-12 or hi > bound + 1e-12:
        raise InvalidParams(f"support must lie within [0, {bound}] for k={k}")
    x_eps = (1.0 + eps) / (k - 1)
    if eps == 0 and lo < x_eps - 1e-12:
        raise InvalidParams("eps=0 only allowed when h stays strictly increasing "
                            "on the support; use eps > 0")
    slope_hi = (k - 1) / k
    slope_lo = slope_hi * eps / (1.0 + eps)

    def h(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < x_eps, slope_lo * x, slope_hi * (x - 1.0 / (k - 1)))

    def h_deriv(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < x_eps, slope_lo, slope_hi)

    kinks = (x_eps,) if lo < x_eps < hi else ()
    gamma = gamma_from_target(model, h, kinks=kinks)
    return GridShading(model, gamma, target=h, target_derivative=h_deriv, kinks=kinks)


def gp_reparam_shading(model: DistributionModel, params: GPParams) -> ShadingStrategy:
    """Shade so the bid distribution is exactly GP(params)."""
    if not isinstance(params, GPParams):
        params = GPParams(*params)
    return GPReparamShading(model, params)


def gp_simple_vs_uniform(sigma1: float, xi1: float, k: int) -> ShadingStrategy:
    """Closed-form linear shading for a GP(0, sigma1, xi1) bidder with mean 1/k
    against k truthful Unif[0,1] adversaries: slope k / ((k+1)(1-xi1))."""
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if abs(sigma1 / (1.0 - xi1) - 1.0 / k) >= 1e-9:
        raise InvalidParams("requires sigma1/(1-xi1) == 1/k")
    base = make_gp(0.0, sigma1, xi1)
    slope = k / ((k + 1) * (1.0 - xi1))
    return LinearShading(base, slope)


def strategy_from_config(cfg: dict, base: DistributionModel) -> ShadingStrategy:
    """Parse strategy JSON config against a given value distribution."""
    kind = cfg.get("kind")
    if kind == "truthful":
        return truthful(base)
    if kind == "linear":
        return linear_shading(base, cfg["alpha"])
    if kind == "equilibrium":
        return equilibrium_shading(base, int(cfg["k"]))
    if kind == "one-vs-uniform":
        return one_vs_uniform_shading(base, int(cfg["k"]), float(cfg.get("eps", DEFAULT_EPS)))
    if kind == "gp-reparam":
        return gp_reparam_shading(base, GPParams(cfg["mu"], cfg["sigma"], cfg["xi"]))
    raise InvalidParams(f"unknown strategy kind: {kind!r}")

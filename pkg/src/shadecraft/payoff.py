"""Expected payoff and revenue engines, plus all derivative machinery.

The strategic bidder's expected payoff in a Myerson auction is
E[(X - psi_B(B)) F_Z(psi_B(B))], where F_Z is the distribution of the
competition Z = max(0, competitors' virtualized bids). F_Z carries a point
mass at 0 (the probability that every competitor misses her reserve); the
quadrature, the functional directional derivative and the boosted-second-
price parameter gradient all account for it explicitly.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _quad
from .dist import (DistributionModel, GPDistribution, GPParams, GridDistribution,
                   GridFunction, make_gp)
from .errors import InvalidParams, NonMonotone, NonRegular, OutOfSupport
from .mech import MechanismConfig
from .shade import ShadingStrategy

_CHUNK = 1 << 16  # Monte Carlo rounds per counter-keyed chunk


def _vv(model, b):
    """Vectorized virtualized value of bids, clamped for grid-backed models."""
    if isinstance(model, GridDistribution):
        return model.virtual_value_clamped(b)
    p = model.params
    return (1.0 - p.xi) * (np.asarray(b, dtype=float) - model.monopoly_price())


def _ivv(model, t):
    if isinstance(model, GridDistribution):
        return model._inverse_virtual_clamped(t)
    p = model.params
    return np.asarray(t, dtype=float) / (1.0 - p.xi) + model.monopoly_price()


class CompetitionDistribution:
    """Law of Z = max(0, psi_i(B_i)) over competitors' bid models.

    cdf(t) is 0 for t < 0 and the product of per-competitor virtualized-bid
    cdfs for t >= 0; the jump at 0 has mass atom0 = prod F_{B_i}(r*_i).
    atom0 can be overridden (see with_atom0) as a regression guard on the
    point-mass code paths; the continuous part above the jump is unchanged.
    """

    def __init__(self, bid_models, atom0=None):
        for m in bid_models:
            if not m.is_regular:
                raise NonRegular("competition requires regular bid distributions")
        self.models = tuple(bid_models)
        self._jump = float(np.prod([m._cdf_of_virtual(np.zeros(1))[0] for m in self.models])) \
            if self.models else 1.0
        self.atom0 = self._jump if atom0 is None else float(atom0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        gamma = np.ones_like(t)
        tc = np.clip(t, 0.0, None)
        for m in self.models:
            gamma = gamma * m._cdf_of_virtual(tc)
        return np.where(t > 0, gamma, np.where(t < 0, 0.0, self.atom0))

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        cdfs = [m._cdf_of_virtual(t) for m in self.models]
        pdfs = [m._pdf_of_virtual(t) for m in self.models]
        out = np.zeros_like(t)
        for i in range(len(self.models)):
            prod = pdfs[i]
            for j in range(len(self.models)):
                if j != i:
                    prod = prod * cdfs[j]
            out = out + prod
        return np.where(t <= 0, 0.0, out)

    def with_atom0(self, value):
        return CompetitionDistribution(self.models, atom0=value)


def competition_distribution(bid_models) -> CompetitionDistribution:
    return CompetitionDistribution(bid_models)


def gp_competition_ratio(params: GPParams, k: int):
    """Closed-form t -> F_Z(t)/f_Z(t) for k-1 i.i.d. GP competitors:
    (c_psi/(k-1)) F_Y(t/c_psi + r*) / f_Y(t/c_psi + r*)."""
    if k < 2:
        raise InvalidParams("k must be >= 2")
    model = GPDistribution(params)
    c = 1.0 - params.xi
    r_star = model.monopoly_price()
    lo, hi = model.support

    def ratio(t):
        t = np.asarray(t, dtype=float)
        x = t / c + r_star
        span = (hi - lo) if np.isfinite(hi) else 1.0
        if np.any(x < lo - 1e-12 * span) or np.any(x > hi + 1e-12 * span):
            raise OutOfSupport("t maps outside the competitor support")
        dens = model.pdf(np.clip(x, lo, hi if np.isfinite(hi) else None))
        if np.any(dens <= 0):
            raise OutOfSupport("competitor density vanishes at the mapped point")
        return (c / (k - 1)) * model.cdf(x) / dens

    return ratio


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    std_error: float = 0.0
    rounds: int = 0
    per_bidder: tuple = ()
    per_bidder_se: tuple = ()
    seller_revenue: float | None = None
    seller_revenue_se: float | None = None

    def to_json(self):
        return {
            "mean": self.mean,
            "se": self.std_error,
            "rounds": self.rounds,
            "per_bidder": list(self.per_bidder),
            "seller_revenue": self.seller_revenue,
        }


def _find_zero(fn, lo, hi, iters=80):
    """Bisection root of an increasing scalar function with fn(lo)<0<fn(hi)."""
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def _clearing_point(h, lo, hi):
    """Smallest x with h(x) >= 0 for increasing h; None if h < 0 throughout."""
    hlo = float(h(np.asarray(lo, dtype=float)))
    hhi = float(h(np.asarray(hi, dtype=float)))
    if hlo >= 0:
        return lo
    if hhi <= 0:
        return None
    return _find_zero(lambda x: float(h(np.asarray(x, dtype=float))), lo, hi)


def payoff_quadrature(d1: DistributionModel, strategy: ShadingStrategy,
                      z: CompetitionDistribution) -> PayoffEstimate:
    """Expected payoff of a bidder with values from d1 shading via strategy
    against competition z, by adaptive quadrature.

    Integrates (x - h(x)) F_Z(h(x)) f1(x) over {h >= 0}, h the virtualized
    bid; F_Z(0+) carries the atom, so a strategy whose virtualized bid stays
    (barely) positive wins whenever every competitor misses her reserve.
    """
    lo, hi = d1.support[0], d1.grid_upper()
    h = strategy.virtualized_bid
    probe = np.linspace(lo, hi, 257)
    if np.any(np.diff(h(probe)) < -1e-9):
        raise NonRegular("induced virtualized bid must be increasing")
    x0 = _clearing_point(h, lo, hi)
    if x0 is None:
        return PayoffEstimate(mean=0.0, per_bidder=(0.0,))

    def integrand(x):
        hx = np.clip(h(x), 0.0, None)
        return (x - hx) * z.cdf(hx) * d1.pdf(x)

    val = _quad.integrate(integrand, x0, hi, breakpoints=strategy.kinks)
    return PayoffEstimate(mean=val, per_bidder=(val,))


# ----------------------------------------------------------------------
# Monte Carlo engine
# ----------------------------------------------------------------------

def _resolve_workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("SHADECRAFT_WORKERS")
    return max(1, int(env)) if env else 1


def _second_highest(w):
    if w.shape[1] == 1:
        return np.full(w.shape[0], -np.inf)
    return np.partition(w, -2, axis=1)[:, -2]


def _outcomes(bids, cfg: MechanismConfig):
    """Vectorized per-round winner (-1 for no sale) and payment."""
    n, k = bids.shape
    rows = np.arange(n)
    kind = cfg.kind

    if kind == "myerson":
        w = np.column_stack([_vv(m, bids[:, i]) for i, m in enumerate(cfg.bid_models)])
        winner = np.argmax(w, axis=1)
        sale = w[rows, winner] >= 0
        threshold = np.maximum(0.0, _second_highest(w))
        payment = np.zeros(n)
        for i, m in enumerate(cfg.bid_models):
            sel = sale & (winner == i)
            if np.any(sel):
                payment[sel] = _ivv(m, threshold[sel])
    elif kind == "boosted-second-price":
        s = np.asarray(cfg.boosts)
        r = np.asarray(cfg.reserves)
        w = s[None, :] * (bids - r[None, :])
        winner = np.argmax(w, axis=1)
        sale = w[rows, winner] >= 0
        payment = r[winner] + np.maximum(0.0, _second_highest(w)) / s[winner]
    elif kind == "vcg-lazy":
        r = np.asarray(cfg.reserves)
        winner = np.argmax(bids, axis=1)
        sale = bids[rows, winner] >= r[winner]
        payment = np.maximum(r[winner], _second_highest(bids))
    elif kind == "vcg-eager":
        r = np.asarray(cfg.reserves)
        clears = bids >= r[None, :]
        masked = np.where(clears, bids, -np.inf)
        winner = np.argmax(masked, axis=1)
        sale = clears.any(axis=1)
        payment = np.maximum(r[winner], _second_highest(masked))
    elif kind == "first-price":
        winner = np.argmax(bids, axis=1)
        sale = np.ones(n, dtype=bool)
        payment = bids[rows, winner]
    elif kind == "second-price":
        reserve = cfg.reserves[0] if cfg.reserves else 0.0
        winner = np.argmax(bids, axis=1)
        sale = bids[rows, winner] >= reserve
        payment = np.maximum(reserve, _second_highest(bids))
    else:
        raise InvalidParams(f"unsupported mechanism kind: {kind!r}")

    payment = np.where(sale, np.maximum(payment, 0.0), 0.0)
    return np.where(sale, winner, -1), payment


def _check_config(cfg: MechanismConfig, k: int):
    if cfg.kind == "myerson" and len(cfg.bid_models) != k:
        raise InvalidParams("myerson config needs one bid model per bidder")
    if cfg.kind in ("vcg-lazy", "vcg-eager") and len(cfg.reserves) != k:
        raise InvalidParams("vcg config needs one reserve per bidder")
    if cfg.kind == "boosted-second-price" and not (len(cfg.boosts) == len(cfg.reserves) == k):
        raise InvalidParams("bsp config needs one (boost, reserve) pair per bidder")


def _chunk_stats(value_models, strategies, cfg, seed, chunk_index, size):
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(chunk_index)],
                   dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    u = rng.random((size, len(value_models)))
    values = np.column_stack([m.quantile(u[:, i]) for i, m in enumerate(value_models)])
    bids = np.column_stack([s.bid(values[:, i]) for i, s in enumerate(strategies)])
    winner, payment = _outcomes(bids, cfg)
    util = np.zeros_like(bids)
    sale = winner >= 0
    util[sale, winner[sale]] = values[sale, winner[sale]] - payment[sale]
    return util.sum(axis=0), (util ** 2).sum(axis=0), payment.sum(), (payment ** 2).sum()


def payoff_monte_carlo(value_models, strategies, cfg: MechanismConfig, rounds: int,
                       seed: int, workers=None) -> PayoffEstimate:
    """Per-bidder mean utility and seller revenue over repeated rounds.

    Rounds are split into fixed-size chunks, each driven by a counter-based
    generator keyed by (seed, chunk index), and partial sums are merged in
    chunk order; results are therefore identical for any worker count.
    """
    k = len(value_models)
    if k == 0 or len(strategies) != k:
        raise InvalidParams("value models and strategies must have matching lengths")
    _check_config(cfg, k)
    rounds = int(rounds)
    if rounds < 1:
        raise InvalidParams("rounds must be >= 1")
    nworkers = _resolve_workers(workers)
    jobs = [(ci, min(_CHUNK, rounds - ci * _CHUNK))
            for ci in range((rounds + _CHUNK - 1) // _CHUNK)]

    def run(job):
        ci, size = job
        return _chunk_stats(value_models, strategies, cfg, seed, ci, size)

    if nworkers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    usum = np.zeros(k)
    usq = np.zeros(k)
    rsum = 0.0
    rsq = 0.0
    for pu, pu2, pr, pr2 in parts:
        usum += pu
        usq += pu2
        rsum += pr
        rsq += pr2
    per = usum / rounds
    per_se = np.sqrt(np.maximum(usq / rounds - per ** 2, 0.0) / rounds)
    rev = rsum / rounds
    rev_se = float(np.sqrt(max(rsq / rounds - rev ** 2, 0.0) / rounds))
    return PayoffEstimate(mean=float(per[0]), std_error=float(per_se[0]), rounds=rounds,
                          per_bidder=tuple(float(v) for v in per),
                          per_bidder_se=tuple(float(v) for v in per_se),
                          seller_revenue=float(rev), seller_revenue_se=rev_se)


def first_price_payoff(d1, beta_i: GridFunction, k: int) -> float:
    """Expected payoff in a first-price auction with no reserve:
    E[(X - beta_I(X)) F(X)^{k-1}]."""
    lo, hi = d1.support[0], d1.grid_upper()
    return _quad.integrate(
        lambda x: (x - beta_i(x)) * d1.cdf(x) ** (k - 1) * d1.pdf(x), lo, hi)


# ----------------------------------------------------------------------
# Linear shading curves and derivatives
# ----------------------------------------------------------------------

def _myerson_linear_payoff(d1, z, alpha):
    r_star = d1.monopoly_price()
    hi = d1.grid_upper()

    def integrand(x):
        h = np.clip(alpha * _vv(d1, x), 0.0, None)
        return (x - h) * z.cdf(h) * d1.pdf(x)

    return _quad.integrate(integrand, r_star, hi)


def _vcg_competition_cdf(competitor_models, kind):
    models = tuple(competitor_models)
    reserves = [m.monopoly_price() for m in models]

    def big_g(t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        for m, r in zip(models, reserves):
            if kind == "vcg-lazy":
                out = out * m.cdf(t)
            else:
                out = out * np.maximum(m.cdf(r), m.cdf(t))
        return out

    return big_g


def _vcg_linear_payoff(d1, big_g, alpha):
    r_star = d1.monopoly_price()
    hi = d1.grid_upper()

    def integrand(x):
        return (x - alpha * _vv(d1, x)) * big_g(alpha * x) * d1.pdf(x)

    return _quad.integrate(integrand, r_star, hi)


def linear_payoff_curve(d1, competitor_models, cfg_kind, alphas):
    """(alpha, payoff) pairs for a linearly shading bidder; the seller refits
    reserves (Myerson virtualization or monopoly VCG reserves) to the bids."""
    if cfg_kind == "myerson":
        z = competition_distribution(competitor_models)
        evaluate = lambda a: _myerson_linear_payoff(d1, z, a)
    elif cfg_kind in ("vcg-lazy", "vcg-eager"):
        big_g = _vcg_competition_cdf(competitor_models, cfg_kind)
        evaluate = lambda a: _vcg_linear_payoff(d1, big_g, a)
    else:
        raise InvalidParams(f"unsupported mechanism kind for linear curves: {cfg_kind!r}")
    return [(float(a), evaluate(float(a))) for a in alphas]


def payoff_derivative_alpha(d1, competitor_models, at_alpha, kind="myerson", step=1e-4):
    """Central finite difference of the linear-shading payoff in alpha."""
    if not 0 < at_alpha <= 1:
        raise InvalidParams("at_alpha must lie in (0, 1]")
    lo, hi = at_alpha - step, at_alpha + step
    (_, p_lo), (_, p_hi) = linear_payoff_curve(d1, competitor_models, kind, [lo, hi])
    return (p_hi - p_lo) / (2 * step)


# ----------------------------------------------------------------------
# Functional directional derivative
# ----------------------------------------------------------------------

def _as_fn_pair(rho):
    if isinstance(rho, GridFunction):
        return rho.__call__, rho.derivative
    if isinstance(rho, tuple) and len(rho) == 2:
        return rho
    raise InvalidParams("rho must be a GridFunction or a (fn, derivative) pair")


def directional_derivative(d1, beta: GridFunction, rho, z: CompetitionDistribution):
    """Directional derivative of the Myerson payoff at shading beta along rho.

    Expectation term: E[D(x) {(x - h) f_Z(h) - F_Z(h)} 1{h > 0}] with
    h(x) = beta(x) + beta'(x)(psi(x) - x) and D(x) = rho(x) + rho'(x)(psi(x) - x).
    Point-mass term: D(x_b) atom0 f1(x_b) x_b / h'(x_b) at the reserve-clearing
    point h(x_b) = 0; it vanishes when h > 0 throughout or x_b is at a zero
    lower support endpoint.
    """
    rho_fn, rho_deriv = _as_fn_pair(rho)
    lo, hi = d1.support[0], d1.grid_upper()
    span = hi - lo
    probe = np.linspace(lo, hi, 512)
    slope = beta.derivative(probe)
    wiggle = rho_deriv(probe)
    if np.any(slope <= 0) or np.any(slope + 1e-6 * wiggle <= 0) \
            or np.any(slope - 1e-6 * wiggle <= 0):
        raise NonMonotone("perturbation breaks monotonicity of the bid function")

    def h(x):
        x = np.asarray(x, dtype=float)
        return beta(x) + beta.derivative(x) * (_vv(d1, x) - x)

    def direction(x):
        x = np.asarray(x, dtype=float)
        return rho_fn(x) + rho_deriv(x) * (_vv(d1, x) - x)

    x0 = _clearing_point(h, lo, hi)
    if x0 is None:
        return 0.0

    def integrand(x):
        hx = np.clip(h(x), 0.0, None)
        return direction(x) * ((x - hx) * z.pdf(hx) - z.cdf(hx)) * d1.pdf(x)

    total = _quad.integrate(integrand, x0, hi)

    h_lo = float(h(np.asarray(lo, dtype=float)))
    crossing = x0 if (h_lo <= 1e-12 * max(1.0, span)) else None
    if crossing is not None:
        dx = 1e-6 * span
        a, b = max(lo, crossing - dx), min(hi, crossing + dx)
        h_slope = float((h(np.asarray(b)) - h(np.asarray(a))) / (b - a))
        d_val = float(direction(np.asarray(crossing, dtype=float)))
        total += d_val * z.atom0 * float(d1.pdf(np.asarray(crossing))) * crossing / h_slope
    return total


# ----------------------------------------------------------------------
# Boosted second price: payoff and parameter gradient over (mu, sigma, xi)
# ----------------------------------------------------------------------

def _gp_virtual_of_u(p: GPParams, u):
    """psi_p(x_p) as a function of u = 1 - F1(x1); stable as xi -> 0-."""
    u = np.asarray(u, dtype=float)
    if p.xi == 0:
        return p.mu - p.sigma * np.log(u) - p.sigma
    w = -p.xi * np.log(np.clip(u, 1e-300, None))
    return p.sigma * (np.expm1(w) / p.xi - np.exp(w)) + p.mu


def _gp_virtual_u_threshold(p: GPParams):
    """u value where psi_p(x_p) = 0; None if psi never reaches 0 from above."""
    if p.xi == 0:
        return float(np.exp(p.mu / p.sigma - 1.0))
    if 1.0 - p.mu * p.xi / p.sigma <= 0:
        return None
    expo = (np.log1p(-p.xi * p.mu / p.sigma) - np.log1p(-p.xi)) / (-p.xi)
    return float(np.exp(expo))


def _one_minus_exp_with_slope(w):
    """1 - e^w (1 - w), evaluated stably: ~ w^2/2 for small w."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-3
    ws = np.where(small, w, 0.0)
    series = ws ** 2 / 2 + ws ** 3 / 3 + ws ** 4 / 8 + ws ** 5 / 30 + ws ** 6 / 144
    direct = 1.0 - np.exp(np.where(small, 0.0, w)) * (1.0 - np.where(small, 0.0, w))
    return np.where(small, series, direct)


def _grad_psi_of_u(p: GPParams, u):
    """Rows [d/dmu, d/dsigma, d/dxi] of psi_p(x_p) at u = 1 - F1(x1)."""
    if p.xi == 0:
        raise InvalidParams("gradient requires xi < 0")
    u = np.asarray(u, dtype=float)
    w = -p.xi * np.log(np.clip(u, 1e-300, None))
    g_mu = np.ones_like(u)
    g_sigma = np.expm1(w) / p.xi - np.exp(w)
    # sigma/xi^2 [1 - e^w + (1 - xi) w e^w] = sigma/xi^2 [(1 - e^w(1-w)) - xi w e^w]
    g_xi = (p.sigma / p.xi ** 2) * (_one_minus_exp_with_slope(w)
                                    - p.xi * w * np.exp(w))
    return np.stack([g_mu, g_sigma, g_xi])


def bsp_payoff(d1, p: GPParams, z: CompetitionDistribution) -> float:
    """Payoff of the GP-reparametrized shading, integrated over u = 1 - F1(x)."""
    u1 = _gp_virtual_u_threshold(p)
    if u1 is not None and u1 <= 0:
        return 0.0
    cap = 1.0 if u1 is None else min(u1, 1.0)

    def integrand(u):
        psi = np.clip(_gp_virtual_of_u(p, u), 0.0, None)
        x1 = d1.quantile(1.0 - u)
        return (x1 - psi) * z.cdf(psi)

    return _quad.integrate(integrand, 0.0, cap)


def bsp_payoff_gradient(d1, p: GPParams, z: CompetitionDistribution,
                        include_point_mass=True):
    """Analytic gradient of bsp_payoff over (mu, sigma, xi).

    The expectation term integrates grad psi times the stationarity bracket
    over the clearing region; the point-mass term moves the clearing boundary
    and is weighted by atom0 and the boundary Jacobian. Toggling
    include_point_mass exposes the first-order variant that neglects it.
    """
    if p.xi >= 0:
        raise InvalidParams("gradient requires xi < 0")
    u1 = _gp_virtual_u_threshold(p)
    if u1 is not None and u1 <= 0:
        return np.zeros(3)
    cap = 1.0 if u1 is None else min(u1, 1.0)

    out = np.zeros(3)
    for comp in range(3):
        def integrand(u, comp=comp):
            psi = np.clip(_gp_virtual_of_u(p, u), 0.0, None)
            x1 = d1.quantile(1.0 - u)
            g = _grad_psi_of_u(p, u)[comp]
            return g * ((x1 - psi) * z.pdf(psi) - z.cdf(psi))

        out[comp] = _quad.integrate(integrand, 0.0, cap)

    if include_point_mass and u1 is not None and u1 < 1.0:
        # boundary term: grad psi at the clearing point, times atom0 x1 f1(x1),
        # divided by the clearing boundary's slope d psi/dx = (1-xi) sigma u^{-xi-1} f1;
        # the density cancels
        x1c = float(d1.quantile(1.0 - u1))
        g_at = _grad_psi_of_u(p, np.asarray([u1]))[:, 0]
        out += g_at * z.atom0 * x1c * u1 ** (1.0 + p.xi) / ((1.0 - p.xi) * p.sigma)
    return out

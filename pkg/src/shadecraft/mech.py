"""Single-round auction mechanisms and the seller's revenue-maximizing fit.

All run_* operations are pure functions of their inputs. Ties in (virtualized)
bids go to the lowest bidder index; a bid equal to its reserve counts as
clearing.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .dist import DistributionModel, GPParams, make_gp
from .errors import FitFailure, InvalidParams, NonRegular

_FIT_NODES = (np.arange(64) + 0.5) / 64  # probability nodes for quantile least squares


@dataclass(frozen=True)
class MechanismConfig:
    kind: str
    reserves: tuple = ()
    boosts: tuple = ()
    bid_models: tuple = ()

    _KINDS = ("myerson", "vcg-lazy", "vcg-eager", "boosted-second-price",
              "first-price", "second-price")

    def __post_init__(self):
        object.__setattr__(self, "reserves", tuple(float(r) for r in self.reserves))
        object.__setattr__(self, "boosts", tuple(float(s) for s in self.boosts))
        object.__setattr__(self, "bid_models", tuple(self.bid_models))
        if self.kind not in self._KINDS:
            raise InvalidParams(f"unknown mechanism kind: {self.kind!r}")
        if any(r < 0 for r in self.reserves):
            raise InvalidParams("reserves must be >= 0")
        if self.kind == "boosted-second-price" and any(s <= 0 for s in self.boosts):
            raise InvalidParams("boosts must be positive")
        if self.kind == "myerson":
            for m in self.bid_models:
                if not m.is_regular:
                    raise NonRegular("myerson requires regular bid distributions")


@dataclass(frozen=True)
class AuctionOutcome:
    winner: int | None
    payment: float
    virtualized_bids: tuple | None = None

    def __post_init__(self):
        if self.winner is None and self.payment != 0.0:
            raise InvalidParams("payment must be zero when there is no sale")

    def to_json(self):
        return {"winner": self.winner, "payment": self.payment}


def _highest_other(values, idx):
    others = [v for j, v in enumerate(values) if j != idx]
    return max(others) if others else 0.0


def run_myerson(bids, cfg: MechanismConfig) -> AuctionOutcome:
    """Allocate to the highest non-negative virtualized bid; the winner pays
    the smallest bid that still wins: psi_w^{-1}(max(0, max_j!=w psi_j(b_j)))."""
    models = cfg.bid_models
    if len(bids) != len(models):
        raise InvalidParams("bids and bid models must have matching lengths")
    vv = [float(m.virtual_value(np.asarray(b, dtype=float))) for b, m in zip(bids, models)]
    winner = int(np.argmax(vv))
    if vv[winner] < 0:
        return AuctionOutcome(None, 0.0, tuple(vv))
    threshold = max(0.0, _highest_other(vv, winner))
    payment = float(models[winner].inverse_virtual_value(threshold))
    return AuctionOutcome(winner, payment, tuple(vv))


def run_vcg_lazy(bids, reserves) -> AuctionOutcome:
    """Highest bidder wins iff she clears her own reserve."""
    if len(bids) != len(reserves):
        raise InvalidParams("bids and reserves must have matching lengths")
    winner = int(np.argmax(bids))
    if bids[winner] < reserves[winner]:
        return AuctionOutcome(None, 0.0)
    return AuctionOutcome(winner, float(max(reserves[winner], _highest_other(bids, winner))))


def run_vcg_eager(bids, reserves) -> AuctionOutcome:
    """Highest bidder among those clearing their reserves wins."""
    if len(bids) != len(reserves):
        raise InvalidParams("bids and reserves must have matching lengths")
    clearing = [i for i, (b, r) in enumerate(zip(bids, reserves)) if b >= r]
    if not clearing:
        return AuctionOutcome(None, 0.0)
    winner = max(clearing, key=lambda i: (bids[i], -i))
    competing = [bids[i] for i in clearing if i != winner]
    payment = max(reserves[winner], max(competing) if competing else 0.0)
    return AuctionOutcome(int(winner), float(payment))


def run_bsp(bids, boosts, reserves) -> AuctionOutcome:
    """Boosted second price: bids are virtualized via w_i = s_i (b_i - r_i)."""
    if any(s <= 0 for s in boosts):
        raise InvalidParams("boosts must be positive")
    if not len(bids) == len(boosts) == len(reserves):
        raise InvalidParams("bids, boosts and reserves must have matching lengths")
    w = [s * (b - r) for b, s, r in zip(bids, boosts, reserves)]
    winner = int(np.argmax(w))
    if w[winner] < 0:
        return AuctionOutcome(None, 0.0, tuple(w))
    payment = reserves[winner] + max(0.0, _highest_other(w, winner)) / boosts[winner]
    return AuctionOutcome(winner, float(payment), tuple(w))


def run_first_price(bids) -> AuctionOutcome:
    if len(bids) == 0:
        raise InvalidParams("bids must be nonempty")
    winner = int(np.argmax(bids))
    return AuctionOutcome(winner, float(bids[winner]))


def run_second_price(bids, reserve: float = 0.0) -> AuctionOutcome:
    if len(bids) == 0:
        raise InvalidParams("bids must be nonempty")
    winner = int(np.argmax(bids))
    if bids[winner] < reserve:
        return AuctionOutcome(None, 0.0)
    return AuctionOutcome(winner, float(max(reserve, _highest_other(bids, winner))))


def fit_monopoly_reserves(bid_models) -> tuple:
    """Per-bidder monopoly price psi_i^{-1}(0)."""
    out = []
    for m in bid_models:
        if not m.is_regular:
            raise NonRegular("monopoly reserve requires a regular bid distribution")
        out.append(float(m.monopoly_price()))
    return tuple(out)


def fit_gp_quantile(model: DistributionModel, xi_bounds=(-20.0, 0.0)):
    """Least-squares fit of a GP(0, sigma, xi) quantile function to the model's.

    sigma enters linearly, so it is profiled out and the search runs over xi
    alone. Returns (GPParams, rmse); exact for in-family inputs.
    """
    q = np.asarray(model.quantile(_FIT_NODES), dtype=float)
    if not np.all(np.isfinite(q)):
        raise FitFailure("model quantiles are not finite at the fit nodes")

    def basis(xi):
        if xi == 0:
            return -np.log(1.0 - _FIT_NODES)
        return ((1.0 - _FIT_NODES) ** (-xi) - 1.0) / xi

    def sse(xi):
        g = basis(xi)
        denom = float(g @ g)
        if denom <= 0:
            return np.inf
        sigma = float(q @ g) / denom
        r = q - sigma * g
        return float(r @ r)

    res = minimize_scalar(sse, bounds=xi_bounds, method="bounded",
                          options={"xatol": 1e-12})
    xi = float(res.x)
    # one parabolic vertex step sharpens flat minima to near machine precision
    h = 1e-6
    if xi_bounds[0] + h < xi < xi_bounds[1] - h:
        s_lo, s_mid, s_hi = sse(xi - h), sse(xi), sse(xi + h)
        curv = s_hi - 2 * s_mid + s_lo
        if curv > 0:
            cand = xi - 0.5 * h * (s_hi - s_lo) / curv
            if xi_bounds[0] < cand < xi_bounds[1] and sse(cand) <= s_mid:
                xi = float(cand)
    # the boundary xi -> 0 is a legitimate fit (exponential branch)
    if sse(0.0) <= sse(xi):
        xi = 0.0
    g = basis(xi)
    sigma = float(q @ g) / float(g @ g)
    if not np.isfinite(sigma) or sigma <= 0:
        raise FitFailure("degenerate quantile fit")
    rmse = float(np.sqrt(sse(xi) / _FIT_NODES.size))
    return GPParams(0.0, sigma, xi), rmse


def fit_bsp(bid_models):
    """Per-bidder GP quantile fit; returns (boosts, reserves) with
    s_i = 1 - xi_i and r_i = sigma_i / (1 - xi_i)."""
    boosts, reserves = [], []
    for m in bid_models:
        params, _ = fit_gp_quantile(m)
        boosts.append(1.0 - params.xi)
        reserves.append(params.sigma / (1.0 - params.xi))
    return tuple(boosts), tuple(reserves)


def fit_mechanism(kind: str, bid_models, reserve: float | None = None) -> MechanismConfig:
    """Seller's revenue-maximizing configuration, computed from exact bid models."""
    if kind == "myerson":
        return MechanismConfig("myerson", bid_models=tuple(bid_models))
    if kind in ("vcg-lazy", "vcg-eager"):
        return MechanismConfig(kind, reserves=fit_monopoly_reserves(bid_models))
    if kind == "boosted-second-price":
        boosts, reserves = fit_bsp(bid_models)
        return MechanismConfig(kind, reserves=reserves, boosts=boosts)
    if kind == "first-price":
        return MechanismConfig(kind)
    if kind == "second-price":
        r = 0.0 if reserve is None else float(reserve)
        return MechanismConfig(kind, reserves=(r,))
    raise InvalidParams(f"unknown mechanism kind: {kind!r}")

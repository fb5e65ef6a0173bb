"""
This module defines the synthetic auction generator that stands in for the proprietary B2B data.

Latent model:
    * dealer tastes are u = shared_taste * e_1 + sqrt(k) * d with d a random unit direction, so
      every dealer has the same pull in the auctions and purchase volume is spread evenly
    * returned vehicles arrive in lots of similar cars: each lot has a centre c ~ N(0, I_k) and a
      vehicle in it has v = sqrt(lot_similarity) * c + sqrt(1 - lot_similarity) * e, e ~ N(0, I_k)
    * observed features are fixed random linear maps of the latents plus N(0, noise_scale^2)
    * a lot is offered to one random subset of dealers over a short window; every vehicle is
      auctioned exactly once and the purchaser is drawn from softmax(affinity_scale * u^T v) over
      that subset
    * bidders are drawn from the same distribution among the remaining candidates, with bid
      timestamps inside the window before the purchase. The expected number of bidders grows
      with the vehicle's appeal to its candidates and with the platform's age (`bid_growth`)

Vehicle ids follow auction order, so a larger id always means a later auction.
"""

# stdlib imports
from dataclasses import dataclass
import logging
import math
from typing import List

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset, Interaction, SyntheticLatents
from defs import Relation
from exceptions import ConfigError


logger = logging.getLogger(__name__)

DAY_SECONDS = 86400


@dataclass
class SyntheticConfig:
    n_dealers: int = 500
    n_vehicles: int = 20000
    latent_dim: int = 8
    user_features: int = 16
    item_features: int = 32
    bids_per_purchase_mean: float = 1.395  # 375,349 bids over 269,104 purchases
    noise_scale: float = 0.1
    seed: int = 0
    candidates_per_auction: int = 40
    affinity_scale: float = 1.0
    shared_taste: float = 1.0
    bid_growth: float = 2.5
    lot_size_mean: float = 6.0
    lot_similarity: float = 0.8
    start_timestamp: int = 1420070400  # 2015-01-01
    horizon_seconds: int = 4 * 365 * DAY_SECONDS
    bid_window_seconds: int = 3 * DAY_SECONDS
    lot_window_seconds: int = 7 * DAY_SECONDS

    def __post_init__(self) -> None:
        for name in ('n_dealers', 'n_vehicles', 'latent_dim', 'user_features', 'item_features',
                     'candidates_per_auction', 'horizon_seconds', 'bid_window_seconds', 'lot_window_seconds'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.noise_scale < 0:
            raise ConfigError(f'noise_scale must be >= 0, got {self.noise_scale}')
        if self.bids_per_purchase_mean < 0:
            raise ConfigError(f'bids_per_purchase_mean must be >= 0, got {self.bids_per_purchase_mean}')
        if self.affinity_scale < 0:
            raise ConfigError(f'affinity_scale must be >= 0, got {self.affinity_scale}')
        if self.bid_growth < 0:
            raise ConfigError(f'bid_growth must be >= 0, got {self.bid_growth}')
        if self.lot_size_mean < 1:
            raise ConfigError(f'lot_size_mean must be >= 1, got {self.lot_size_mean}')
        if not 0 <= self.lot_similarity < 1:
            raise ConfigError(f'lot_similarity must be in [0, 1), got {self.lot_similarity}')
        if self.start_timestamp < self.bid_window_seconds:
            raise ConfigError('start_timestamp must leave room for the first bid window')


def growth_weight(elapsed: np.ndarray, horizon: float, growth: float) -> np.ndarray:
    """
    Relative bid volume at time `elapsed` into the horizon. Integrates to 1 over a uniform
    auction calendar, so the overall bids-per-purchase mean is unchanged by `growth`.
    """
    elapsed = np.asarray(elapsed, dtype=np.float64)
    if growth == 0:
        return np.ones_like(elapsed)
    return growth * np.exp(growth * elapsed / horizon) / math.expm1(growth)


def auction_win_probabilities(
    dealer_latents: np.ndarray,
    vehicle_latent: np.ndarray,
    candidates: np.ndarray,
    affinity_scale: float = 1.0,
) -> np.ndarray:
    """softmax(affinity_scale * u_c^T v) over the candidate dealers, computed in 64-bit"""
    logits = affinity_scale * (np.asarray(dealer_latents, dtype=np.float64)[candidates] @ np.asarray(vehicle_latent, dtype=np.float64))
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def sample_auction(rng: np.random.Generator, probabilities: np.ndarray) -> int:
    """Index of the winning candidate"""
    return int(rng.choice(len(probabilities), p=probabilities))


def _feature_map(rng: np.random.Generator, latents: np.ndarray, width: int, noise_scale: float) -> np.ndarray:
    k = latents.shape[1]
    projection = rng.standard_normal((k, width)) / math.sqrt(k)
    noise = rng.standard_normal((latents.shape[0], width)) * noise_scale
    return (latents @ projection + noise).astype(np.float32)


def assign_lots(rng: np.random.Generator, n_vehicles: int, lot_size_mean: float) -> np.ndarray:
    """Lot index of every vehicle; lot sizes are 1 + Poisson(lot_size_mean - 1), the last one cut short"""
    sizes = 1 + rng.poisson(lot_size_mean - 1, size=n_vehicles)
    n_lots = int(np.searchsorted(np.cumsum(sizes), n_vehicles)) + 1
    return np.repeat(np.arange(n_lots), sizes[:n_lots])[:n_vehicles]


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    k = config.latent_dim

    taste_offset = np.zeros(k)
    taste_offset[0] = config.shared_taste
    directions = rng.standard_normal((config.n_dealers, k))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    dealer_latents = math.sqrt(k) * directions + taste_offset

    lot_of = assign_lots(rng, config.n_vehicles, config.lot_size_mean)
    n_lots = int(lot_of[-1]) + 1
    lot_centres = rng.standard_normal((n_lots, k))
    vehicle_latents = (
        math.sqrt(config.lot_similarity) * lot_centres[lot_of]
        + math.sqrt(1.0 - config.lot_similarity) * rng.standard_normal((config.n_vehicles, k))
    )

    lot_opens = rng.integers(0, max(config.horizon_seconds - config.lot_window_seconds, 1), size=n_lots)
    elapsed = lot_opens[lot_of] + rng.integers(0, config.lot_window_seconds, size=config.n_vehicles)
    auction_order = np.argsort(elapsed, kind='stable')
    elapsed, lot_of, vehicle_latents = elapsed[auction_order], lot_of[auction_order], vehicle_latents[auction_order]
    purchase_times = config.start_timestamp + elapsed

    dealer_features = _feature_map(rng, dealer_latents, config.user_features, config.noise_scale)
    vehicle_features = _feature_map(rng, vehicle_latents, config.item_features, config.noise_scale)

    pool = min(config.candidates_per_auction, config.n_dealers)
    lot_pools = np.stack([rng.choice(config.n_dealers, size=pool, replace=False) for _ in range(n_lots)])
    candidate_sets = lot_pools[lot_of]
    affinities = config.affinity_scale * np.einsum('vck,vk->vc', dealer_latents[candidate_sets], vehicle_latents)

    # Appeal of each vehicle to its candidate pool, normalized to mean 1 across vehicles
    demand = np.mean(stable_sigmoid(affinities), axis=1)
    appeal = demand / demand.mean() if demand.mean() > 0 else np.ones_like(demand)
    bidder_means = config.bids_per_purchase_mean * appeal * growth_weight(elapsed, config.horizon_seconds, config.bid_growth)

    interactions: List[Interaction] = []
    for vehicle_id in range(config.n_vehicles):
        candidates = candidate_sets[vehicle_id]
        probabilities = auction_win_probabilities(dealer_latents, vehicle_latents[vehicle_id], candidates, config.affinity_scale)
        winner = sample_auction(rng, probabilities)
        purchase_time = int(purchase_times[vehicle_id])

        others = np.delete(np.arange(pool), winner)
        weights = probabilities[others]
        # a sharp softmax leaves some candidates with zero weight
        n_bidders = min(int(rng.poisson(bidder_means[vehicle_id])), int(np.count_nonzero(weights)))
        if n_bidders > 0:
            bidders = rng.choice(others, size=n_bidders, replace=False, p=weights / weights.sum())
            offsets = rng.integers(1, config.bid_window_seconds + 1, size=n_bidders)
            for bidder, offset in zip(bidders, offsets):
                interactions.append(Interaction(int(candidates[bidder]), vehicle_id, purchase_time - int(offset), Relation.BID))

        interactions.append(Interaction(int(candidates[winner]), vehicle_id, purchase_time, Relation.PURCHASE))

    # Chronological file order; the sort is stable so same-second rows keep generation order
    interactions.sort(key=lambda i: i.timestamp)

    dataset = Dataset(
        dealer_ids=np.arange(config.n_dealers),
        dealer_features=dealer_features,
        vehicle_ids=np.arange(config.n_vehicles),
        vehicle_features=vehicle_features,
        interactions=interactions,
        latents=SyntheticLatents(dealer_latents, vehicle_latents, config.affinity_scale),
    )
    logger.info('Generated %r from %d lots (seed %d)', dataset, n_lots, config.seed)
    return dataset

"""Synthetic interaction corpora with known generative structure.

Users and items get unit-normalized Gaussian latent vectors. Each user draws
items without replacement from a softmax over cosine(z_u, z_i) divided by a
generation temperature (sequential renormalization). Observed item features
are a seeded orthonormal-column linear map of the latents plus Gaussian noise;
an optional cubic distortion (z + 0.5 z^3, before the map) makes the
feature-to-preference link nonlinear. Domain pairs share the map but draw
fresh latents, so representations learned on one domain transfer to the other.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .corpus import RawInteractions
from .embed import EmbeddingMatrix
from .seeding import rng_for


@dataclass
class SynthConfig:
    n_users: int = 500
    n_items: int = 300
    d_latent: int = 8
    d_lang: int = 64
    interactions_per_user: int = 30
    noise_sigma: float = 0.1
    gen_temperature: float = 0.2
    nonlinear: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 2:
            raise ValueError("need at least 1 user and 2 items")
        if self.d_lang < self.d_latent:
            raise ValueError("d_lang must be >= d_latent for an orthonormal-column map")
        if not 1 <= self.interactions_per_user < self.n_items:
            raise ValueError("interactions_per_user must lie in [1, n_items)")
        if self.noise_sigma < 0 or self.gen_temperature <= 0:
            raise ValueError("bad noise_sigma or gen_temperature")


@dataclass
class SynthTruth:
    """Ground truth behind one generated domain."""

    config: SynthConfig
    user_latents: np.ndarray
    item_latents: np.ndarray
    mixing: np.ndarray  # d_lang x d_latent, orthonormal columns


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    z = rng.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    while (norms == 0).any():  # essentially impossible, but keep the contract
        redo = norms[:, 0] == 0
        z[redo] = rng.standard_normal((int(redo.sum()), d))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms


def mixing_map(seed: int, d_lang: int, d_latent: int) -> np.ndarray:
    """Seeded orthonormal-column map, sign-fixed for stability."""
    raw = rng_for(seed, "synth", "mixing").standard_normal((d_lang, d_latent))
    q, r = np.linalg.qr(raw)
    q = q[:, :d_latent] * np.sign(np.diag(r))[None, :]
    return q


def _draw_without_replacement(
    logits: np.ndarray, count: int, rng: np.random.Generator
) -> list[int]:
    """Sequential softmax draws without replacement.

    Re-stabilized against the remaining pool's max before each draw, so very
    small temperatures degrade to greedy argmax instead of underflowing.
    """
    l = logits.astype(np.float64).copy()
    if count > l.shape[0]:
        raise ValueError("sampling pool exhausted")
    picks: list[int] = []
    for _ in range(count):
        m = l.max()
        if not np.isfinite(m):
            raise ValueError("sampling pool exhausted")
        p = np.exp(l - m)
        picks.append(int(rng.choice(l.shape[0], p=p / p.sum())))
        l[picks[-1]] = -np.inf
    return picks


def generate(
    cfg: SynthConfig,
    latent_seed: int | None = None,
    id_prefix: str = "",
) -> tuple[RawInteractions, EmbeddingMatrix, SynthTruth]:
    """One synthetic domain: interactions, item features, and ground truth.

    The mixing map depends only on cfg.seed; latents and draws depend on
    latent_seed (default cfg.seed), which is how domain pairs share structure.
    """
    lseed = cfg.seed if latent_seed is None else latent_seed
    z_users = _unit_rows(rng_for(lseed, "synth", "user-latents"), cfg.n_users, cfg.d_latent)
    z_items = _unit_rows(rng_for(lseed, "synth", "item-latents"), cfg.n_items, cfg.d_latent)
    mixing = mixing_map(cfg.seed, cfg.d_lang, cfg.d_latent)

    base = z_items + 0.5 * z_items**3 if cfg.nonlinear else z_items
    noise = rng_for(lseed, "synth", "feature-noise").standard_normal((cfg.n_items, cfg.d_lang))
    features = base @ mixing.T + cfg.noise_sigma * noise

    draw_rng = rng_for(lseed, "synth", "interactions")
    records: list[tuple[str, str, int | None]] = []
    affinity = z_users @ z_items.T  # rows are cos(z_u, z_i): all latents unit-norm
    for u in range(cfg.n_users):
        logits = affinity[u] / cfg.gen_temperature
        for i in _draw_without_replacement(logits, cfg.interactions_per_user, draw_rng):
            records.append((f"{id_prefix}u{u}", f"{id_prefix}i{i}", None))

    row_ids = [f"{id_prefix}i{i}" for i in range(cfg.n_items)]
    matrix = EmbeddingMatrix(features.astype(np.float32), row_ids)
    return RawInteractions(records), matrix, SynthTruth(cfg, z_users, z_items, mixing)


def make_domain_pair(
    cfg: SynthConfig, seed_a: int, seed_b: int
) -> tuple[
    tuple[RawInteractions, EmbeddingMatrix, SynthTruth],
    tuple[RawInteractions, EmbeddingMatrix, SynthTruth],
]:
    """Two domains with the same mixing map and noise level, fresh latents,
    and disjoint external ids."""
    if seed_a == seed_b:
        raise ValueError("domain seeds must differ")
    domain_a = generate(cfg, latent_seed=seed_a, id_prefix="a_")
    domain_b = generate(cfg, latent_seed=seed_b, id_prefix="b_")
    return domain_a, domain_b


def config_echo(cfg: SynthConfig, latent_seed: int | None = None) -> dict:
    """JSON-ready record of how a domain was generated."""
    out = asdict(cfg)
    out["latent_seed"] = cfg.seed if latent_seed is None else latent_seed
    return out

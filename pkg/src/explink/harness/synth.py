"""Synthetic dataset generators.

The two illustrative generators are reconstructions: their geometry is chosen
so that the qualitative behaviour holds on the seeds pinned in the test suite.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from ..core import PairDataset, PointDataset

__all__ = ["gen_two_cluster_synth", "gen_path_synth", "gen_blobs", "gen_pair_blocks"]


def gen_two_cluster_synth(seed: int, n_per_cluster: int = 40, *, length: float = 10.0,
                          gap: float = 1.5, slope: float = 1.0, jitter: float = 0.05,
                          noise: float = 0.05) -> PointDataset:
    """Two parallel, evenly sampled strands along the direction ``(1, slope)``.

    The strands are offset vertically by ``gap``.  Neighbouring points on a
    strand are much closer than the strands are to each other, yet long
    within-strand pairs look like across-strand pairs under ``|x - x'|``, so
    no linear function of the absolute difference separates all pairs.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, length, n_per_cluster)[None, :] + rng.uniform(-jitter, jitter, (2, n_per_cluster))
    a = np.column_stack([t[0], slope * t[0]])
    b = np.column_stack([t[1], slope * t[1] + gap])
    x = np.vstack([a, b]) + rng.normal(0.0, noise, (2 * n_per_cluster, 2))
    labels = np.repeat([0, 1], n_per_cluster)
    return PointDataset(x, labels)


def gen_path_synth(seed: int, *, n_blob: int = 60, n_path: int = 150, separation: float = 5.0,
                   blob_sd: float = 1.0, radius: float = 9.0, path_jitter: float = 0.15) -> PointDataset:
    """Two noisy Gaussian blobs above a dense circular arc.

    Blob centres sit at ``(0, 0)`` and ``(separation, 0)``; the arc spans
    200 to 340 degrees on a circle of ``radius`` centred between them.
    Labels: 0 and 1 for the blobs, 2 for the arc.
    """
    rng = np.random.default_rng(seed)
    a = rng.normal([0.0, 0.0], blob_sd, (n_blob, 2))
    b = rng.normal([separation, 0.0], blob_sd, (n_blob, 2))
    theta = np.linspace(np.deg2rad(200.0), np.deg2rad(340.0), n_path)
    arc = np.column_stack([separation / 2 + radius * np.cos(theta), radius * np.sin(theta)])
    arc += rng.normal(0.0, path_jitter, (n_path, 2))
    labels = np.concatenate([np.zeros(n_blob), np.ones(n_blob), np.full(n_path, 2)]).astype(np.int64)
    return PointDataset(np.vstack([a, b, arc]), labels)


def gen_blobs(seed: int, n_clusters: int = 9, n_per_cluster: int = 8, dim: int = 2, *,
              spread: float = 6.0, sd: float = 1.0, noise_dims: int = 0,
              noise_sd: float = 3.0) -> PointDataset:
    """Isotropic Gaussian clusters, optionally padded with uninformative noise dimensions."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-spread, spread, (n_clusters, dim))
    labels = np.repeat(np.arange(n_clusters), n_per_cluster)
    x = centres[labels] + rng.normal(0.0, sd, (labels.size, dim))
    if noise_dims:
        x = np.hstack([x, rng.normal(0.0, noise_sd, (labels.size, noise_dims))])
    return PointDataset(x, labels)


def gen_pair_blocks(seed: int, n_blocks: int = 6, entities_per_block: int = 3,
                    mentions_per_entity: int = 4, dim: int = 4, *, sd: float = 0.6) -> PairDataset:
    """Blocked records whose pair features are noisy absolute differences of latent points."""
    rng = np.random.default_rng(seed)
    ids, labels, blocks, latent = [], [], [], []
    label = 0
    for block in range(n_blocks):
        for _ in range(entities_per_block):
            centre = rng.uniform(-4.0, 4.0, dim)
            for _ in range(mentions_per_entity):
                ids.append(f"b{block}e{label}m{len(ids)}")
                labels.append(label)
                blocks.append(block)
                latent.append(centre + rng.normal(0.0, sd, dim))
            label += 1
    latent = np.asarray(latent)
    blocks = np.asarray(blocks)
    features = {}
    for block in range(n_blocks):
        members = np.flatnonzero(blocks == block)
        for i, j in combinations(members.tolist(), 2):
            features[(i, j)] = np.abs(latent[i] - latent[j]) + rng.normal(0.0, 0.05, dim)
    return PairDataset(tuple(ids), np.asarray(labels), blocks, features)

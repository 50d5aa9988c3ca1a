"""Alignment, classification, and regularization objectives.

The alignment term pulls the video embedding toward the sensor-derived
embedding; the sensor branch is the teacher, so by default no gradient
flows into it through this term (it learns from its own classification
probe instead). A flag enables bidirectional gradients for
experimentation.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .numerics import Tensor, cross_entropy, mse


def align_loss(z_v, z_p, bidirectional=False):
    """Mean over the batch of squared L2 distances between paired embeddings."""
    target = z_p if bidirectional else z_p.detach()
    return mse(z_v, target)


def total_loss(logits, labels, x_c, x_cr, beta, bidirectional=False):
    """Cross-entropy plus beta times the embedding-consistency penalty.

    ``x_c`` is the video-side embedding and ``x_cr`` the sensor-side
    reference; the penalty coincides with align_loss under the shared
    batch-mean reduction. beta = 0 returns the cross-entropy unchanged.
    """
    if beta < 0:
        raise ConfigError(f"regularization weight beta must be >= 0, got {beta}")
    ce = cross_entropy(logits, labels)
    if beta == 0:
        return ce
    return ce + beta * align_loss(x_c, x_cr, bidirectional=bidirectional)


def sensor_branch_loss(z_p, labels, probe):
    """Cross-entropy of the lightweight sensor-only classification probe."""
    return cross_entropy(probe(z_p), labels)

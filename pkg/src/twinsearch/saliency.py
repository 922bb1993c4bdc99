"""Region attributions for retrieval: class-activation maps over the final
convolutional features, scored by similarity to a reference patch.

The scalar being explained is s = -||f(query) - f(reference)||^2, so hot
regions are those pushing the pair closer together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .images import bilinear_resize, to_grayscale
from .layers import GlobalMaxPool
from .network import Network


@dataclass
class SaliencyMap:
    map: np.ndarray
    normalized: np.ndarray
    query_id: str = ""
    neighbor_id: str = ""


def cam_from_activations(acts: np.ndarray, grad_acts: np.ndarray):
    """Channel weights = spatial mean of gradients; map = relu of weighted sum.

    Returns (raw, normalized); normalized peaks at 1 unless raw is all zero.
    """
    acts = np.asarray(acts, dtype=np.float64)
    grad_acts = np.asarray(grad_acts, dtype=np.float64)
    if acts.shape != grad_acts.shape or acts.ndim != 3:
        raise ConfigError(
            f"activations {acts.shape} and gradients {grad_acts.shape} must be "
            "matching HxWxC arrays"
        )
    alphas = grad_acts.mean(axis=(0, 1))
    raw = np.maximum((acts * alphas).sum(axis=2), 0.0)
    peak = raw.max()
    normalized = raw / peak if peak > 0 else np.zeros_like(raw)
    return raw, normalized


def grad_cam(network: Network, query: np.ndarray, reference: np.ndarray,
             query_id: str = "", neighbor_id: str = "") -> SaliencyMap:
    """Saliency of the query's regions for its similarity to the reference."""
    v_q, trace = network.forward_trace(query)
    v_r = network.embed(reference)

    gmp_layer, _, gmp_ctx = trace[-1]
    if not isinstance(gmp_layer, GlobalMaxPool):
        raise ConfigError("network must end in a global max pool to attribute regions")
    acts = trace[-2][1]

    grad_v = -2.0 * (v_q - v_r)
    grad_acts = gmp_layer.backward(gmp_ctx, grad_v).grad_input
    if not np.all(np.isfinite(grad_acts)):
        raise NumericError("non-finite gradients while attributing regions")

    raw, normalized = cam_from_activations(acts, grad_acts)
    return SaliencyMap(map=raw, normalized=normalized,
                       query_id=query_id, neighbor_id=neighbor_id)


def heat_color(t: np.ndarray) -> np.ndarray:
    """Blue-to-red ramp: t=0 -> (0,0,1), t=1 -> (1,0,0)."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([t, np.zeros_like(t), 1.0 - t], axis=-1)


OVERLAY_ALPHA = 0.4


def overlay(smap: SaliencyMap, image: np.ndarray) -> np.ndarray:
    """Heat ramp alpha-blended over the grayscale image at the image's size."""
    image = np.asarray(image, dtype=np.float64)
    up = bilinear_resize(smap.normalized[:, :, None], image.shape[0], image.shape[1])[:, :, 0]
    gray = to_grayscale(image)[:, :, None]
    return (1.0 - OVERLAY_ALPHA) * gray + OVERLAY_ALPHA * heat_color(up)


def saliency_csv(smap: SaliencyMap) -> str:
    """Raw map values, one row per line."""
    lines = [",".join(repr(float(v)) for v in row) for row in smap.map]
    return "\n".join(lines) + "\n"

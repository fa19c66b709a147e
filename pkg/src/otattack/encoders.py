"""Toy differentiable dual encoders.

Images: zero-pad to a multiple of the pooling grid, mean-pool into a fixed
8x8 grid, affine-project, then normalize onto the unit sphere. Texts: mean
of token embeddings, normalized. Both sides have closed-form Jacobians so
pixel gradients are exact and checkable against finite differences.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatchError, NonFiniteValueError, SeededRng

POOL_GRID = 8  # pooled grid side; every image maps to 64 tile means
DEFAULT_EMBED_DIM = 64
DEFAULT_VOCAB_SIZE = 2048

_ZERO_NORM_FLOOR = 1e-12


class ZeroFeatureError(FloatingPointError):
    """Pre-normalization embedding has (numerically) no direction."""


@dataclass(frozen=True)
class ImageEncoderParams:
    patch_size: int          # pooled grid side (patch_size**2 tiles)
    proj: np.ndarray         # (patch_size**2, d_embed)
    bias: np.ndarray         # (d_embed,)
    seed: int


@dataclass(frozen=True)
class TextEncoderParams:
    vocab_size: int
    embed_table: np.ndarray  # (vocab_size, d_embed)
    seed: int


@dataclass(frozen=True)
class ImageEncodeCache:
    """Intermediates retained by encode_image for the backward pass."""

    height: int
    width: int
    tile_h: int
    tile_w: int
    pooled: np.ndarray       # (patch_size**2,)
    pre_norm: np.ndarray     # (d_embed,), z before unit projection
    feature: np.ndarray      # (d_embed,), z / ||z||


def init_image_encoder(seed: int, d_embed: int = DEFAULT_EMBED_DIM) -> ImageEncoderParams:
    """Gaussian parameters (mean 0, stdev 1/sqrt(d_embed)); each seed is an
    independent 'model' for the black-box transfer study."""
    if d_embed < 2:
        raise ValueError("d_embed must be >= 2")
    rng = SeededRng(seed)
    std = 1.0 / np.sqrt(d_embed)
    proj = rng.normal(0.0, std, (POOL_GRID * POOL_GRID, d_embed))
    bias = rng.normal(0.0, std, (d_embed,))
    return ImageEncoderParams(patch_size=POOL_GRID, proj=proj, bias=bias, seed=int(seed))


def init_text_encoder(seed: int, vocab_size: int = DEFAULT_VOCAB_SIZE,
                      d_embed: int = DEFAULT_EMBED_DIM) -> TextEncoderParams:
    if d_embed < 2:
        raise ValueError("d_embed must be >= 2")
    rng = SeededRng(seed)
    std = 1.0 / np.sqrt(d_embed)
    table = rng.normal(0.0, std, (vocab_size, d_embed))
    return TextEncoderParams(vocab_size=vocab_size, embed_table=table, seed=int(seed))


def _normalize(z: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(z))
    if norm < _ZERO_NORM_FLOOR:
        raise ZeroFeatureError("embedding norm below 1e-12; direction undefined")
    return z / norm


def _pool_dims(height: int, width: int) -> tuple[int, int]:
    g = POOL_GRID
    return (height + g - 1) // g, (width + g - 1) // g


def encode_image(params: ImageEncoderParams, img: np.ndarray):
    """Embed one grayscale image; returns (unit feature, cache)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    if not np.all(np.isfinite(img)):
        raise NonFiniteValueError("image contains NaN/Inf")
    h, w = img.shape
    g = params.patch_size
    th, tw = _pool_dims(h, w)
    padded = np.zeros((g * th, g * tw))
    padded[:h, :w] = img
    pooled = padded.reshape(g, th, g, tw).mean(axis=(1, 3)).reshape(-1)
    z = pooled @ params.proj + params.bias
    f = _normalize(z)
    cache = ImageEncodeCache(height=h, width=w, tile_h=th, tile_w=tw,
                             pooled=pooled, pre_norm=z, feature=f)
    return f, cache


def encode_image_grad(params: ImageEncoderParams, cache: ImageEncodeCache,
                      grad_wrt_feature: np.ndarray) -> np.ndarray:
    """Exact pixel gradient of a scalar loss given its gradient at the unit
    feature: chains the sphere-projection Jacobian (I - f f^T)/||z||, the
    affine map, and the mean-pool adjoint. Padded pixels get no gradient."""
    g = np.asarray(grad_wrt_feature, dtype=np.float64)
    if g.shape != cache.feature.shape:
        raise DimensionMismatchError("gradient does not match feature dimension")
    norm = float(np.linalg.norm(cache.pre_norm))
    f = cache.feature
    grad_z = (g - f * float(f @ g)) / norm
    grad_pooled = params.proj @ grad_z
    gg = params.patch_size
    th, tw = cache.tile_h, cache.tile_w
    scatter = np.repeat(np.repeat(grad_pooled.reshape(gg, gg), th, axis=0), tw, axis=1)
    scatter /= th * tw
    return scatter[:cache.height, :cache.width].copy()


def encode_texts(params: TextEncoderParams, token_lists) -> np.ndarray:
    """Bag-of-tokens features: mean embedding per sequence, unit-normalized,
    stacked in input order."""
    rows = []
    for tokens in token_lists:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("empty token sequence")
        if np.any(ids < 0) or np.any(ids >= params.vocab_size):
            raise ValueError("token id out of vocabulary range")
        rows.append(_normalize(params.embed_table[ids].mean(axis=0)))
    return np.stack(rows)


def similarity(f_img: np.ndarray, x_txt: np.ndarray) -> np.ndarray:
    """Cosine similarity matrix F_img @ X_txt^T for unit-norm rows."""
    f_img = np.atleast_2d(np.asarray(f_img, dtype=np.float64))
    x_txt = np.atleast_2d(np.asarray(x_txt, dtype=np.float64))
    if f_img.shape[1] != x_txt.shape[1]:
        raise DimensionMismatchError("embedding dimensions differ")
    return f_img @ x_txt.T

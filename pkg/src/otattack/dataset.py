"""Synthetic image-caption datasets.

Images are smooth low-frequency random fields. Captions are token-id bags
sampled so that a fixed pair of generation-reference encoders retrieves
each image's own captions at rank 1 for at least 90% of pairs (enforced by
rejection sampling, then re-measured). The reference seed is reserved and
never used as a source or target model in experiments, so no attack-model
structure leaks into the data.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import encoders, pgm
from .evaluate import retrieval_r1
from .numerics import SeededRng

REFERENCE_SEED = 987654321

CAPTION_LENGTH = 12
CLEAN_R1_TARGET = 0.90
_REJECTION_ROUNDS = 80


class DatasetError(RuntimeError):
    """Dataset generation or loading failed."""


@dataclass(frozen=True)
class CaptionEntry:
    image_id: int
    tokens: tuple


@dataclass(frozen=True)
class Dataset:
    images: list            # list of (H, W) float arrays in [0, 1]
    captions: list          # list of CaptionEntry, grouped by image
    seed: int

    def captions_for(self, image_id: int):
        return [c.tokens for c in self.captions if c.image_id == image_id]

    @property
    def n_images(self) -> int:
        return len(self.images)


def smooth_field(height: int, width: int, rng: SeededRng, n_waves: int = 4) -> np.ndarray:
    """Mixture of low-frequency cosines, min-max scaled into [0.05, 0.95]."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    field = np.zeros((height, width))
    for _ in range(n_waves):
        amp = rng.uniform(0.5, 1.0, ())
        fy = rng.uniform(-2.0, 2.0, ()) / height
        fx = rng.uniform(-2.0, 2.0, ()) / width
        phase = rng.uniform(0.0, 2.0 * np.pi, ())
        field += amp * np.cos(2.0 * np.pi * (fy * ys + fx * xs) + phase)
    lo, hi = field.min(), field.max()
    if hi - lo < 1e-12:
        return np.full((height, width), 0.5)
    return 0.05 + 0.9 * (field - lo) / (hi - lo)


def _sample_caption(target_direction: np.ndarray, table: np.ndarray,
                    rng: SeededRng) -> tuple:
    """Greedy matching-pursuit token bag aligned with a target direction.

    Each step picks the token whose embedding best matches the remaining
    residual; a random offset among the top few at the first step keeps an
    image's captions distinct."""
    toks = []
    resid = target_direction.copy()
    first_offset = int(rng.integers(0, 4, ()))
    for step in range(CAPTION_LENGTH):
        scores = table @ resid
        order = np.argsort(scores)[::-1]
        pick = int(order[first_offset if step == 0 else 0])
        toks.append(pick)
        cur = table[toks].mean(axis=0)
        norm = float(np.linalg.norm(cur))
        resid = target_direction - cur / max(norm, 1e-9)
    return tuple(toks)


def _target_directions(img_feats: np.ndarray) -> np.ndarray:
    """Per-image caption targets: the feature's component away from the
    dataset mean, which is what discriminates smooth fields that share a
    large common component."""
    resid = img_feats - img_feats.mean(axis=0)
    return resid / np.linalg.norm(resid, axis=1, keepdims=True)


def _clean_tr_hits(img_feats, captions, txt_params):
    text_feats = encoders.encode_texts(txt_params, [c.tokens for c in captions])
    owners = np.array([c.image_id for c in captions])
    return [bool(owners[retrieval_r1(img_feats[i], text_feats)] == i)
            for i in range(img_feats.shape[0])]


def generate_dataset(n_images: int, captions_per_image: int, dims, seed: int) -> Dataset:
    """Build a correlated synthetic dataset in memory."""
    if n_images < 2:
        raise ValueError("need at least 2 images")
    if captions_per_image < 1:
        raise ValueError("need at least 1 caption per image")
    height, width = dims
    rng = SeededRng(seed)
    ref_img = encoders.init_image_encoder(REFERENCE_SEED)
    ref_txt = encoders.init_text_encoder(REFERENCE_SEED)

    images = [smooth_field(height, width, rng) for _ in range(n_images)]
    img_feats = np.stack([encoders.encode_image(ref_img, im)[0] for im in images])
    targets = _target_directions(img_feats)

    captions = [
        CaptionEntry(image_id=i,
                     tokens=_sample_caption(targets[i], ref_txt.embed_table, rng))
        for i in range(n_images)
        for _ in range(captions_per_image)
    ]
    for _ in range(_REJECTION_ROUNDS):
        hits = _clean_tr_hits(img_feats, captions, ref_txt)
        if np.mean(hits) >= CLEAN_R1_TARGET:
            break
        # Resample only the captions of currently-failing images.
        captions = [
            c if hits[c.image_id]
            else CaptionEntry(image_id=c.image_id,
                              tokens=_sample_caption(targets[c.image_id],
                                                     ref_txt.embed_table, rng))
            for c in captions
        ]
    else:
        raise DatasetError("rejection budget exhausted before reaching clean R@1 target")
    return Dataset(images=images, captions=captions, seed=int(seed))


def clean_tr_accuracy(dataset: Dataset) -> float:
    """Re-measured clean TR R@1 under the generation-reference encoders."""
    ref_img = encoders.init_image_encoder(REFERENCE_SEED)
    ref_txt = encoders.init_text_encoder(REFERENCE_SEED)
    img_feats = np.stack([encoders.encode_image(ref_img, im)[0] for im in dataset.images])
    return float(np.mean(_clean_tr_hits(img_feats, dataset.captions, ref_txt)))


def write_dataset(dataset: Dataset, out_dir) -> str:
    """Write images as 16-bit PGM plus a JSON manifest; returns the manifest
    path. Identical datasets serialize to identical bytes."""
    os.makedirs(out_dir, exist_ok=True)
    image_entries = []
    for i, img in enumerate(dataset.images):
        name = f"img_{i:04d}.pgm"
        pgm.write_image(os.path.join(out_dir, name), img)
        image_entries.append({"id": i, "path": name,
                              "height": int(img.shape[0]), "width": int(img.shape[1])})
    manifest = {
        "seed": dataset.seed,
        "images": image_entries,
        "captions": [{"image_id": c.image_id, "tokens": list(c.tokens)}
                     for c in dataset.captions],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest_path


def load_dataset(manifest_path) -> Dataset:
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read manifest: {exc}") from exc
    base = os.path.dirname(os.path.abspath(manifest_path))
    try:
        entries = sorted(manifest["images"], key=lambda e: e["id"])
        images = [pgm.read_image(os.path.join(base, e["path"])) for e in entries]
        captions = [CaptionEntry(image_id=int(c["image_id"]), tokens=tuple(c["tokens"]))
                    for c in manifest["captions"]]
        seed = int(manifest.get("seed", 0))
    except (KeyError, TypeError, pgm.PgmFormatError) as exc:
        raise DatasetError(f"malformed dataset: {exc}") from exc
    n = len(images)
    if any(c.image_id < 0 or c.image_id >= n for c in captions):
        raise DatasetError("caption references a missing image")
    if len({c.image_id for c in captions}) != n:
        raise DatasetError("every image needs at least one caption")
    return Dataset(images=images, captions=captions, seed=seed)

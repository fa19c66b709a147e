"""Retrieval evaluation: attack success rates, feature deviation, transfer
matrices over independently seeded encoder pairs, and the augmentation-count
sweep.

Black-box separation is enforced by interface: adversarial images are
generated with the source parameters only and the target encoders are used
solely for forward evaluation.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import attack as atk
from . import encoders

# Scale list whose prefixes realize the sweep sizes {1, 3, 6, 9, 12}; the
# first entry is the identity so size 1 is the no-augmentation attack.
SWEEP_SCALES = (1.0, 0.5, 0.75, 1.25, 1.5, 2.0, 0.6, 0.9, 1.1, 1.4, 1.75, 0.8)


@dataclass(frozen=True)
class RetrievalOutcome:
    image_id: int
    clean_top1: int
    adv_top1: int
    clean_correct: bool
    attack_success: bool


@dataclass(frozen=True)
class EvalReport:
    source_model_seed: int
    target_model_seed: int
    asr_tr: float | None          # None when no attackable TR outcomes
    asr_ir: float | None
    n_attackable_tr: int
    n_attackable_ir: int
    mean_feature_deviation: float
    per_image: list
    config: dict
    per_image_deviation: list = None
    any_diverged: bool = False


def feature_deviation(target_encoder: encoders.ImageEncoderParams,
                      adv: np.ndarray, orig: np.ndarray) -> float:
    """Euclidean distance between target-model unit features of the
    adversarial and original image; lies in [0, 2]."""
    f_adv, _ = encoders.encode_image(target_encoder, adv)
    f_orig, _ = encoders.encode_image(target_encoder, orig)
    return float(np.linalg.norm(f_adv - f_orig))


def retrieval_r1(image_feature: np.ndarray, text_gallery: np.ndarray) -> int:
    """Index of the most similar gallery row; ties go to the lowest index."""
    gallery = np.atleast_2d(np.asarray(text_gallery, dtype=np.float64))
    if gallery.size == 0:
        raise ValueError("empty text gallery")
    q = np.asarray(image_feature, dtype=np.float64)
    q = q / np.linalg.norm(q)
    return int(np.argmax(gallery @ q))


def asr(outcomes) -> float:
    """Attack success rate in percent over the clean-correct outcomes."""
    attackable = [o for o in outcomes if o.clean_correct]
    if not attackable:
        raise ValueError("no attackable outcomes (zero clean-correct retrievals)")
    successes = sum(1 for o in attackable if o.attack_success)
    return 100.0 * successes / len(attackable)


def _safe_asr(outcomes) -> tuple[float | None, int]:
    attackable = [o for o in outcomes if o.clean_correct]
    if not attackable:
        return None, 0
    return asr(outcomes), len(attackable)


def tr_attack_eval(caption_image_ids, text_features, clean_image_features,
                   adv_image_features):
    """Image-to-text outcomes: clean retrieval must hit one of the image's
    own captions; success means the adversarial retrieval no longer does."""
    caption_image_ids = np.asarray(caption_image_ids)
    outcomes = []
    for i in range(clean_image_features.shape[0]):
        clean_top1 = retrieval_r1(clean_image_features[i], text_features)
        adv_top1 = retrieval_r1(adv_image_features[i], text_features)
        clean_correct = caption_image_ids[clean_top1] == i
        success = bool(clean_correct and caption_image_ids[adv_top1] != i)
        outcomes.append(RetrievalOutcome(
            image_id=i, clean_top1=clean_top1, adv_top1=adv_top1,
            clean_correct=bool(clean_correct), attack_success=success))
    return outcomes


def ir_attack_eval(caption_image_ids, text_features, clean_image_features,
                   adv_image_features):
    """Text-to-image outcomes: for each caption, retrieve over the clean
    gallery with the caption's own image replaced by its adversarial
    version; success when the previously-correct image loses top-1."""
    caption_image_ids = np.asarray(caption_image_ids)
    n_images = clean_image_features.shape[0]
    if adv_image_features.shape != clean_image_features.shape:
        raise ValueError("adversarial gallery does not match clean gallery")
    outcomes = []
    for j, owner in enumerate(caption_image_ids):
        owner = int(owner)
        if owner < 0 or owner >= n_images:
            raise ValueError("caption references a missing image")
        clean_top1 = retrieval_r1(text_features[j], clean_image_features)
        swapped = clean_image_features.copy()
        swapped[owner] = adv_image_features[owner]
        adv_top1 = retrieval_r1(text_features[j], swapped)
        clean_correct = clean_top1 == owner
        success = bool(clean_correct and adv_top1 != owner)
        outcomes.append(RetrievalOutcome(
            image_id=owner, clean_top1=clean_top1, adv_top1=adv_top1,
            clean_correct=bool(clean_correct), attack_success=success))
    return outcomes


def _per_image_seed(base_seed: int, image_index: int) -> int:
    # Deterministic, collision-free per-image attack seeds.
    return (base_seed * 1_000_003 + image_index) & 0x7FFFFFFFFFFFFFFF


def attack_dataset(dataset, source_seed: int, cfg: atk.AttackConfig):
    """Attack every image with the source-model encoder pair; returns
    (adversarial images, loss traces, any_diverged)."""
    img_enc = encoders.init_image_encoder(source_seed)
    txt_enc = encoders.init_text_encoder(source_seed)
    adv_images = []
    traces = []
    any_diverged = False
    for i, img in enumerate(dataset.images):
        own = encoders.encode_texts(txt_enc, dataset.captions_for(i))
        res = atk.generate_adversarial(
            img, own, img_enc, replace(cfg, seed=_per_image_seed(cfg.seed, i)))
        adv_images.append(res.adversarial)
        traces.append(res.loss_trace)
        any_diverged = any_diverged or res.diverged
    return adv_images, traces, any_diverged


def evaluate_on_target(dataset, adv_images, target_seed: int, source_seed: int,
                       cfg: atk.AttackConfig, any_diverged: bool = False) -> EvalReport:
    """Forward-only evaluation of precomputed adversarial images on the
    target-seed encoder pair."""
    img_enc = encoders.init_image_encoder(target_seed)
    txt_enc = encoders.init_text_encoder(target_seed)
    text_feats = encoders.encode_texts(txt_enc, [c.tokens for c in dataset.captions])
    caption_owner = [c.image_id for c in dataset.captions]
    clean_feats = np.stack([encoders.encode_image(img_enc, im)[0] for im in dataset.images])
    adv_feats = np.stack([encoders.encode_image(img_enc, im)[0] for im in adv_images])

    tr = tr_attack_eval(caption_owner, text_feats, clean_feats, adv_feats)
    ir = ir_attack_eval(caption_owner, text_feats, clean_feats, adv_feats)
    asr_tr, n_tr = _safe_asr(tr)
    asr_ir, n_ir = _safe_asr(ir)
    deviations = [feature_deviation(img_enc, a, o)
                  for a, o in zip(adv_images, dataset.images)]
    return EvalReport(
        source_model_seed=int(source_seed),
        target_model_seed=int(target_seed),
        asr_tr=asr_tr,
        asr_ir=asr_ir,
        n_attackable_tr=n_tr,
        n_attackable_ir=n_ir,
        mean_feature_deviation=float(np.mean(deviations)),
        per_image=tr,
        config=config_snapshot(cfg),
        per_image_deviation=deviations,
        any_diverged=any_diverged,
    )


def config_snapshot(cfg: atk.AttackConfig) -> dict:
    return {
        "epsilon": cfg.epsilon,
        "alpha": cfg.alpha,
        "iters": cfg.iters,
        "objective": cfg.objective,
        "lambda": cfg.lam,
        "scales": list(cfg.scales),
        "flip": cfg.flip,
        "sinkhorn_thresh": cfg.sinkhorn.thresh,
        "sinkhorn_max_iters": cfg.sinkhorn.max_iters,
        "seed": cfg.seed,
    }


def transfer_matrix(dataset, source_seeds, target_seeds, cfg: atk.AttackConfig):
    """One EvalReport per (source, target) pair; adversarial images are
    generated once per source and reused across targets."""
    reports = []
    for src in source_seeds:
        adv_images, _, diverged = attack_dataset(dataset, src, cfg)
        for tgt in target_seeds:
            reports.append(evaluate_on_target(dataset, adv_images, tgt, src,
                                              cfg, any_diverged=diverged))
    return reports


def augmentation_sweep(dataset, sizes, cfg: atk.AttackConfig, target_seed: int,
                       sweep_scales=SWEEP_SCALES):
    """Transfer ASR as a function of augmented-set size; sizes are prefix
    lengths of sweep_scales and flipping is disabled so counts are exact."""
    curve = []
    for size in sizes:
        if size < 1 or size > len(sweep_scales):
            raise ValueError(f"sweep size {size} not achievable from the scale list")
        sub_cfg = replace(cfg, scales=tuple(sweep_scales[:size]), flip="off")
        adv_images, _, diverged = attack_dataset(dataset, cfg.seed, sub_cfg)
        report = evaluate_on_target(dataset, adv_images, target_seed, cfg.seed,
                                    sub_cfg, any_diverged=diverged)
        curve.append((int(size), report.asr_tr))
    return curve

"""Sign-gradient adversarial image generation.

Each iteration: augment the current iterate, encode every copy, form the
image-text similarity matrix, evaluate the chosen objective (transport cost
via Sinkhorn, or the mean-similarity baseline), backpropagate to pixels
through encoder and augmentation adjoints, take a sign step, and project
back into the L-inf ball intersected with [0, 1].

Both objectives are maximized: the baseline -mean(row sums of S) and the
transport cost sum T(1-S) both grow as image-text alignment degrades.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import augment as aug
from . import encoders, ot
from .numerics import SeededRng


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 2.0 / 255.0
    alpha: float = 0.5 / 255.0
    iters: int = 10
    objective: str = "ot"          # "ot" | "mean_similarity"
    lam: float = 0.05
    scales: tuple = aug.PAPER_SCALES
    flip: str = "variant"
    sinkhorn: ot.SinkhornConfig = field(default_factory=ot.SinkhornConfig)
    seed: int = 0
    top_k: int | None = None       # optional cap on the caption set

    def __post_init__(self):
        if not (0.0 < self.alpha <= self.epsilon <= 1.0):
            raise ValueError("require 0 < alpha <= epsilon <= 1")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.objective not in ("ot", "mean_similarity"):
            raise ValueError("objective must be 'ot' or 'mean_similarity'")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.flip not in aug.FLIP_POLICIES:
            raise ValueError(f"flip policy must be one of {sorted(aug.FLIP_POLICIES)}")
        if not self.scales:
            raise ValueError("need at least one rescale factor")

    def sinkhorn_config(self) -> ot.SinkhornConfig:
        return replace(self.sinkhorn, lam=self.lam)


@dataclass(frozen=True)
class AttackResult:
    adversarial: np.ndarray
    delta_inf_norm: float
    loss_trace: list
    diverged: bool = False


def mean_similarity_loss(s: np.ndarray) -> float:
    """Baseline objective: negated mean over image rows of the row-sums of
    the similarity matrix."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty similarity matrix")
    return float(-s.sum(axis=1).mean())


def objective_grad_wrt_similarity(objective: str, s: np.ndarray,
                                  plan: ot.TransportPlan | None = None) -> np.ndarray:
    """dL/dS for the maximized objective: a constant -1/n_rows matrix for
    the baseline, -T (detached plan) for the transport objective."""
    s = np.asarray(s, dtype=np.float64)
    if objective == "mean_similarity":
        return np.full_like(s, -1.0 / s.shape[0])
    if objective == "ot":
        if plan is None:
            raise ValueError("transport plan required for the ot objective")
        return ot.ot_loss_grad_wrt_similarity(plan)
    raise ValueError(f"unknown objective {objective!r}")


def sign_step_project(current: np.ndarray, base: np.ndarray, grad: np.ndarray,
                      alpha: float, epsilon: float) -> np.ndarray:
    """One ascent step followed by L-inf ball and [0,1] range projection.
    np.sign maps exact zeros to zero, so zero-gradient pixels stay put."""
    stepped = current + alpha * np.sign(grad)
    delta = np.clip(stepped - base, -epsilon, epsilon)
    return np.clip(base + delta, 0.0, 1.0)


def _objective_and_grad(s: np.ndarray, cfg: AttackConfig):
    """Returns (loss value, dL/dS); raises SinkhornDivergenceError on a
    diverging plan."""
    if cfg.objective == "mean_similarity":
        return mean_similarity_loss(s), objective_grad_wrt_similarity("mean_similarity", s)
    c = ot.cost_from_similarity(s)
    kern = ot.gibbs_kernel(c, cfg.lam)
    u, v = ot.uniform_marginals(*s.shape)
    plan = ot.sinkhorn(kern, u, v, cfg.sinkhorn_config())
    return ot.ot_loss(plan, c), objective_grad_wrt_similarity("ot", s, plan)


def generate_adversarial(img: np.ndarray, text_features: np.ndarray,
                         encoder_params: encoders.ImageEncoderParams,
                         cfg: AttackConfig) -> AttackResult:
    """Run the full attack loop on one image against a fixed caption set."""
    img = aug.validate_image(img)
    x_txt = np.atleast_2d(np.asarray(text_features, dtype=np.float64))
    if x_txt.size == 0:
        raise ValueError("text feature set must be non-empty")
    if cfg.top_k is not None:
        x_txt = x_txt[: cfg.top_k]

    rng = SeededRng(cfg.seed)
    adv = np.clip(img + rng.uniform(-cfg.epsilon, cfg.epsilon, img.shape), 0.0, 1.0)
    trace = []
    diverged = False
    for _ in range(cfg.iters):
        aug_set = aug.build_augmented_set(adv, cfg.scales, cfg.flip)
        feats = []
        caches = []
        for copy in aug_set.images:
            f, cache = encoders.encode_image(encoder_params, copy)
            feats.append(f)
            caches.append(cache)
        s = encoders.similarity(np.stack(feats), x_txt)
        try:
            loss, g_s = _objective_and_grad(s, cfg)
        except ot.SinkhornDivergenceError:
            diverged = True
            break
        g_feats = g_s @ x_txt  # (n_aug, d_embed)
        pixel_grads = [
            encoders.encode_image_grad(encoder_params, caches[i], g_feats[i])
            for i in range(len(caches))
        ]
        total_grad = aug.accumulate_pixel_grads(pixel_grads, aug_set.provenance, img.shape)
        adv = sign_step_project(adv, img, total_grad, cfg.alpha, cfg.epsilon)
        trace.append(loss)
    return AttackResult(
        adversarial=adv,
        delta_inf_norm=float(np.max(np.abs(adv - img))),
        loss_trace=trace,
        diverged=diverged,
    )

import numpy as np
import pytest

from otattack import attack as atk
from otattack import encoders as enc
from otattack import evaluate as ev


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def test_retrieval_r1_picks_most_similar():
    gallery = np.stack([unit([1, 0, 0]), unit([0, 1, 0]), unit([1, 1, 0])])
    assert ev.retrieval_r1(unit([0.9, 0.1, 0]), gallery) == 0
    assert ev.retrieval_r1(unit([0.1, 0.9, 0]), gallery) == 1


def test_retrieval_r1_tie_goes_low():
    gallery = np.stack([unit([1, 0]), unit([1, 0]), unit([0, 1])])
    assert ev.retrieval_r1(unit([1, 0]), gallery) == 0


def test_asr_percent():
    outs = [
        ev.RetrievalOutcome(0, 0, 1, clean_correct=True, attack_success=True),
        ev.RetrievalOutcome(1, 2, 2, clean_correct=True, attack_success=False),
        ev.RetrievalOutcome(2, 5, 5, clean_correct=False, attack_success=False),
    ]
    assert ev.asr(outs) == pytest.approx(50.0)  # 1 of 2 attackable
    with pytest.raises(ValueError):
        ev.asr([outs[2]])
    assert ev._safe_asr([outs[2]]) == (None, 0)


def test_tr_eval_success_definition():
    # 2 images, 2 captions each; features arranged so image 0 retrieves its
    # own caption cleanly and loses it adversarially
    txt = np.stack([unit([1, 0]), unit([0.9, 0.1]), unit([0, 1]), unit([0.1, 0.9])])
    owner = [0, 0, 1, 1]
    clean = np.stack([unit([1, 0.05]), unit([0.05, 1])])
    adv = np.stack([unit([0.05, 1]), unit([0.05, 1])])
    outs = ev.tr_attack_eval(owner, txt, clean, adv)
    assert outs[0].clean_correct and outs[0].attack_success
    assert outs[1].clean_correct and not outs[1].attack_success


def test_ir_eval_swaps_only_owner():
    txt = np.stack([unit([1, 0]), unit([0, 1])])
    owner = [0, 1]
    clean = np.stack([unit([1, 0.1]), unit([0.1, 1])])
    adv = np.stack([unit([0.0, 1]), unit([0.1, 1])])  # image 0 moved away
    outs = ev.ir_attack_eval(owner, txt, clean, adv)
    assert outs[0].clean_correct and outs[0].attack_success
    assert outs[1].clean_correct and not outs[1].attack_success


def test_feature_deviation_zero_for_identity():
    params = enc.init_image_encoder(0)
    img = np.full((16, 16), 0.5)
    assert ev.feature_deviation(params, img, img) == 0.0


def test_per_image_seed_unique_and_stable():
    seeds = [ev._per_image_seed(3, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [ev._per_image_seed(3, i) for i in range(100)]
    assert all(s >= 0 for s in seeds)


def test_attack_dataset_and_evaluate(small_dataset):
    cfg = atk.AttackConfig(seed=1)
    adv, traces, diverged = ev.attack_dataset(small_dataset, source_seed=1, cfg=cfg)
    assert len(adv) == small_dataset.n_images
    assert not diverged
    for a, o in zip(adv, small_dataset.images):
        assert np.max(np.abs(a - o)) <= cfg.epsilon + 1e-12
    rep = ev.evaluate_on_target(small_dataset, adv, 1, 1, cfg)
    assert rep.source_model_seed == 1 and rep.target_model_seed == 1
    assert len(rep.per_image) == small_dataset.n_images
    assert rep.mean_feature_deviation >= 0.0
    assert rep.config["epsilon"] == cfg.epsilon


def test_evaluate_is_deterministic(small_dataset):
    cfg = atk.AttackConfig(seed=2)
    a1 = ev.attack_dataset(small_dataset, 1, cfg)
    a2 = ev.attack_dataset(small_dataset, 1, cfg)
    for x, y in zip(a1[0], a2[0]):
        assert np.array_equal(x, y)
    r1 = ev.evaluate_on_target(small_dataset, a1[0], 2, 1, cfg)
    r2 = ev.evaluate_on_target(small_dataset, a2[0], 2, 1, cfg)
    assert r1 == r2


def test_transfer_matrix_shape(small_dataset):
    cfg = atk.AttackConfig(seed=0)
    reps = ev.transfer_matrix(small_dataset, [1, 2], [3, 4, 5], cfg)
    assert len(reps) == 6
    assert [(r.source_model_seed, r.target_model_seed) for r in reps] == [
        (1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)]


def test_sweep_sizes_and_range(small_dataset):
    cfg = atk.AttackConfig(seed=0)
    curve = ev.augmentation_sweep(small_dataset, [1, 3], cfg, target_seed=3)
    assert [size for size, _ in curve] == [1, 3]
    for _, value in curve:
        assert value is None or 0.0 <= value <= 100.0
    with pytest.raises(ValueError):
        ev.augmentation_sweep(small_dataset, [13], cfg, target_seed=3)


def test_sweep_scale_prefixes_hit_required_sizes():
    # the fixed sweep ordering must realize every size the spec curve needs
    assert len(ev.SWEEP_SCALES) == 12
    for size in (1, 3, 6, 9, 12):
        assert len(ev.SWEEP_SCALES[:size]) == size
    assert ev.SWEEP_SCALES[0] == 1.0

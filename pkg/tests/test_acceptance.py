"""Acceptance suite: ten property-based checks, one per criterion.

Each test prints a single PASS/FAIL line (written to the real stdout so it
survives pytest's capture) and then asserts. Tolerances and budgets are
stated inline next to each check.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from otattack import attack as atk
from otattack import augment as aug
from otattack import dataset as ds
from otattack import encoders as enc
from otattack import evaluate as ev
from otattack import ot, pgm, reports
from otattack.numerics import SeededRng, finite_diff_grad


_verdicts = []


@pytest.fixture(scope="session", autouse=True)
def _verdict_summary(request):
    # dump one line per criterion after the run, past pytest's capture
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None and _verdicts:
        reporter.write_sep("-", "acceptance criteria")
        for line in _verdicts:
            reporter.write_line(line)


def criterion(number, name, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    line = f"criterion {number:02d} {name}: {'PASS' if ok else 'FAIL'}{tail}"
    _verdicts.append(line)
    print(line)  # also visible live under pytest -s
    assert ok, line


# ------------------------------------------------------------------ 1
def test_criterion_01_sinkhorn_vs_exact_oracle():
    # 100 random square cost matrices, entries U[0,2], uniform marginals,
    # lambda = 0.01; the scaled-and-rounded plan's cost must land in
    # [exact - 1e-9, exact + 0.05 * cost range]; budget 10 s
    rng = SeededRng(20240915)
    cfg = ot.SinkhornConfig(lam=0.01)
    t0 = time.perf_counter()
    failures = 0
    for i in range(100):
        n = 4 if i % 2 == 0 else 6
        c = rng.uniform(0.0, 2.0, (n, n))
        u, v = ot.uniform_marginals(n, n)
        plan = ot.sinkhorn(ot.gibbs_kernel(c, cfg.lam), u, v, cfg)
        loss = ot.ot_loss(plan, c)
        _, exact = ot.exact_ot_square(c)
        slack = 0.05 * float(c.max() - c.min())
        if not (exact - 1e-9 <= loss <= exact + slack):
            failures += 1
    elapsed = time.perf_counter() - t0
    criterion(1, "sinkhorn vs exact oracle",
              failures == 0 and elapsed < 10.0,
              f"{failures} out-of-bracket, {elapsed:.2f}s")


# ------------------------------------------------------------------ 2
def test_criterion_02_marginal_feasibility():
    # 200 random instances across lambda values; mean absolute marginal
    # deviation < 1e-2 and all plan entries >= 0; budget 5 s
    rng = SeededRng(77)
    t0 = time.perf_counter()
    worst = 0.0
    nonneg = True
    for i in range(200):
        n = int(rng.integers(2, 9))
        lam = (0.01, 0.05, 0.2)[i % 3]
        c = rng.uniform(0.0, 2.0, (n, n))
        u, v = ot.uniform_marginals(n, n)
        plan = ot.sinkhorn(ot.gibbs_kernel(c, lam), u, v, ot.SinkhornConfig(lam=lam))
        worst = max(worst, plan.marginal_error)
        nonneg = nonneg and bool(plan.t.min() >= 0.0)
    elapsed = time.perf_counter() - t0
    criterion(2, "marginal feasibility",
              worst < 1e-2 and nonneg and elapsed < 5.0,
              f"worst deviation {worst:.2e}, {elapsed:.2f}s")


# ------------------------------------------------------------------ 3
def _pipeline_similarity(img, params, x_txt, scales):
    s = aug.build_augmented_set(img, scales, "variant")
    feats = []
    caches = []
    for copy in s.images:
        f, cache = enc.encode_image(params, copy)
        feats.append(f)
        caches.append(cache)
    return np.stack(feats), caches, s


def _pipeline_grad(g_s, caches, aug_set, params, x_txt, shape):
    g_feats = g_s @ x_txt
    per_copy = [enc.encode_image_grad(params, caches[i], g_feats[i])
                for i in range(len(caches))]
    return aug.accumulate_pixel_grads(per_copy, aug_set.provenance, shape)


def test_criterion_03_end_to_end_gradient():
    # analytic pixel gradient of both objectives vs central differences,
    # norm-relative error <= 1e-4, 20 random 16x16 images; budget 60 s
    scales = (0.5, 1.25)
    params = enc.init_image_encoder(42)
    txt = enc.init_text_encoder(42)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(20):
        rng = SeededRng(1000 + trial)
        img = rng.uniform(0.0, 1.0, (16, 16))
        x_txt = enc.encode_texts(
            txt, [list(rng.integers(0, txt.vocab_size, 6)) for _ in range(4)])

        # baseline objective: fully differentiable end to end
        s0, caches, aug_set = _pipeline_similarity(img, params, x_txt, scales)
        sim0 = enc.similarity(s0, x_txt)
        g_s = atk.objective_grad_wrt_similarity("mean_similarity", sim0)
        analytic = _pipeline_grad(g_s, caches, aug_set, params, x_txt, img.shape)

        def mean_loss(x):
            f, _, _ = _pipeline_similarity(x, params, x_txt, scales)
            return atk.mean_similarity_loss(enc.similarity(f, x_txt))

        numeric = finite_diff_grad(mean_loss, img)
        worst = max(worst, np.linalg.norm(analytic - numeric)
                    / np.linalg.norm(numeric))

        # transport objective with the plan detached (held at its value
        # from the unperturbed image)
        c = ot.cost_from_similarity(sim0)
        u, v = ot.uniform_marginals(*sim0.shape)
        plan = ot.sinkhorn(ot.gibbs_kernel(c, 0.05), u, v)
        g_s = atk.objective_grad_wrt_similarity("ot", sim0, plan)
        analytic = _pipeline_grad(g_s, caches, aug_set, params, x_txt, img.shape)

        def ot_loss_frozen_plan(x):
            f, _, _ = _pipeline_similarity(x, params, x_txt, scales)
            sim = enc.similarity(f, x_txt)
            return float(np.sum(plan.t * (1.0 - sim)))

        numeric = finite_diff_grad(ot_loss_frozen_plan, img)
        worst = max(worst, np.linalg.norm(analytic - numeric)
                    / np.linalg.norm(numeric))
    elapsed = time.perf_counter() - t0
    criterion(3, "end-to-end gradient fidelity",
              worst <= 1e-4 and elapsed < 60.0,
              f"worst relative error {worst:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 4
def test_criterion_04_feasibility_invariants(monkeypatch):
    # 40 seeded attacks at the published configuration (eps = 2/255,
    # alpha = 0.5/255, N = 10); every iterate inside the eps-ball and [0,1]
    violations = []
    bases = {}
    real_step = atk.sign_step_project

    def checked_step(current, base, grad, alpha, epsilon):
        out = real_step(current, base, grad, alpha, epsilon)
        if np.max(np.abs(out - bases["img"])) > epsilon + 1e-12:
            violations.append("ball")
        if out.min() < 0.0 or out.max() > 1.0:
            violations.append("range")
        return out

    monkeypatch.setattr(atk, "sign_step_project", checked_step)
    txt = enc.init_text_encoder(0)
    n_traces = 0
    for run in range(40):
        rng = SeededRng(5000 + run)
        img = rng.uniform(0.0, 1.0, (16, 16))
        bases["img"] = img
        x_txt = enc.encode_texts(
            txt, [list(rng.integers(0, txt.vocab_size, 6)) for _ in range(3)])
        params = enc.init_image_encoder(run % 5)
        cfg = atk.AttackConfig(epsilon=2.0 / 255.0, alpha=0.5 / 255.0,
                               iters=10, seed=run)
        res = atk.generate_adversarial(img, x_txt, params, cfg)
        n_traces += len(res.loss_trace)
        if res.delta_inf_norm > cfg.epsilon + 1e-12:
            violations.append("final ball")
        if res.adversarial.min() < 0.0 or res.adversarial.max() > 1.0:
            violations.append("final range")
    criterion(4, "attack feasibility invariants",
              not violations and n_traces == 400,
              f"{len(violations)} violations over {n_traces} iterates")


# ------------------------------------------------------------------ 5
def test_criterion_05_white_box_effectiveness(toy_dataset):
    # white-box TR ASR vs noise-only ASR on the 64x5 corpus, aggregated
    # over 20 seeds; plus final loss > initial loss in >= 95% of runs;
    # budget 5 min. The attacked model is the reference encoder pair that
    # the corpus was built against (clean R@1 >= 90% by construction).
    assert ds.clean_tr_accuracy(toy_dataset) >= 0.90
    ref = ds.REFERENCE_SEED
    t0 = time.perf_counter()
    atk_succ = atk_n = noise_succ = noise_n = 0
    increased = runs = 0
    for seed in range(20):
        cfg = atk.AttackConfig(epsilon=8.0 / 255.0, alpha=2.0 / 255.0,
                               iters=10, objective="ot", seed=seed)
        adv, traces, diverged = ev.attack_dataset(toy_dataset, ref, cfg)
        assert not diverged
        rep = ev.evaluate_on_target(toy_dataset, adv, ref, ref, cfg)
        atk_succ += sum(1 for o in rep.per_image if o.attack_success)
        atk_n += rep.n_attackable_tr
        # zero-iteration counterpart: the attack's own random init
        noise = []
        for i, img in enumerate(toy_dataset.images):
            rng = SeededRng(ev._per_image_seed(cfg.seed, i))
            noise.append(np.clip(
                img + rng.uniform(-cfg.epsilon, cfg.epsilon, img.shape), 0.0, 1.0))
        rep0 = ev.evaluate_on_target(toy_dataset, noise, ref, ref, cfg)
        noise_succ += sum(1 for o in rep0.per_image if o.attack_success)
        noise_n += rep0.n_attackable_tr
        for trace in traces:
            runs += 1
            increased += 1 if (len(trace) >= 2 and trace[-1] > trace[0]) else 0
    elapsed = time.perf_counter() - t0
    attack_rate = 100.0 * atk_succ / atk_n
    noise_rate = 100.0 * noise_succ / noise_n
    frac_increased = increased / runs
    criterion(5, "white-box beats noise-only",
              attack_rate > noise_rate and frac_increased >= 0.95
              and elapsed < 300.0,
              f"attack {attack_rate:.1f}% vs noise {noise_rate:.1f}%, "
              f"loss rose in {100.0 * frac_increased:.1f}% of {runs} runs, "
              f"{elapsed:.0f}s")


# ------------------------------------------------------------------ 6
def test_criterion_06_reduction_equivalence():
    # one augmented copy + one caption collapses the plan to [[1]]; both
    # objectives must then produce bit-identical adversarial images
    txt = enc.init_text_encoder(3)
    identical = True
    for seed in range(5):
        rng = SeededRng(900 + seed)
        img = rng.uniform(0.0, 1.0, (16, 16))
        x_txt = enc.encode_texts(txt, [list(rng.integers(0, txt.vocab_size, 6))])
        params = enc.init_image_encoder(seed)
        results = {}
        for objective in ("ot", "mean_similarity"):
            cfg = atk.AttackConfig(objective=objective, scales=(1.0,),
                                   flip="off", seed=seed)
            results[objective] = atk.generate_adversarial(img, x_txt, params, cfg)
        identical = identical and np.array_equal(
            results["ot"].adversarial, results["mean_similarity"].adversarial)
    criterion(6, "single-pair reduction equivalence", identical)


# ------------------------------------------------------------------ 7
def test_criterion_07_determinism_and_pgm_round_trip(small_dataset, tmp_path):
    cfg = atk.AttackConfig(seed=4)
    adv1, _, d1 = ev.attack_dataset(small_dataset, 1, cfg)
    adv2, _, d2 = ev.attack_dataset(small_dataset, 1, cfg)
    rep1 = ev.evaluate_on_target(small_dataset, adv1, 2, 1, cfg, d1)
    rep2 = ev.evaluate_on_target(small_dataset, adv2, 2, 1, cfg, d2)
    j1, c1 = reports.write_report(rep1, tmp_path / "r1")
    j2, c2 = reports.write_report(rep2, tmp_path / "r2")
    byte_identical = (open(j1, "rb").read() == open(j2, "rb").read()
                      and open(c1, "rb").read() == open(c2, "rb").read())

    # P5 round trip: quantize to 16-bit, read back, re-evaluate
    restored = []
    for i, a in enumerate(adv1):
        path = tmp_path / f"adv_{i}.pgm"
        pgm.write_image(path, a)
        restored.append(pgm.read_image(path))
    rep3 = ev.evaluate_on_target(small_dataset, restored, 2, 1, cfg, d1)
    asr_unchanged = (rep1.asr_tr == rep3.asr_tr and rep1.asr_ir == rep3.asr_ir)
    criterion(7, "determinism and P5 round trip",
              byte_identical and asr_unchanged,
              f"asr_tr {rep1.asr_tr} -> {rep3.asr_tr}")


# ------------------------------------------------------------------ 8
def test_criterion_08_sweep_emission(toy_dataset, tmp_path):
    # curve completeness, value range and determinism only; the shape is
    # reported for humans, not asserted
    sizes = (1, 3, 6, 9, 12)
    cfg = atk.AttackConfig(seed=1, iters=5)
    curves = []
    for tag in ("a", "b"):
        curve = ev.augmentation_sweep(toy_dataset, sizes, cfg,
                                      target_seed=ds.REFERENCE_SEED)
        path = tmp_path / f"curve_{tag}.csv"
        reports.write_curve(curve, path)
        curves.append(path.read_bytes())
        if tag == "a":
            got_sizes = [s for s, _ in curve]
            values = [v for _, v in curve]
    complete = got_sizes == list(sizes)
    in_range = all(v is not None and 0.0 <= v <= 100.0 for v in values)
    deterministic = curves[0] == curves[1]
    _verdicts.append("  sweep curve (size, transfer ASR): "
                     + ", ".join(f"({s}, {v:.1f})"
                                 for s, v in zip(got_sizes, values)))
    criterion(8, "augmentation sweep emission",
              complete and in_range and deterministic)


# ------------------------------------------------------------------ 9
def test_criterion_09_transfer_matrix_report(toy_dataset, tmp_path):
    # 2 sources x 3 targets for both objectives, written side by side;
    # budget 15 min (runs in seconds at this scale)
    sources, targets = [1, 2], [3, 4, 5]
    t0 = time.perf_counter()
    cfg = atk.AttackConfig(seed=0)
    rows = {}
    consistent = True
    for objective, tag in (("ot", "ot"), ("mean_similarity", "mean")):
        reps = ev.transfer_matrix(toy_dataset, sources, targets,
                                  atk.AttackConfig(seed=0, objective=objective))
        if len(reps) != 6:
            consistent = False
        for rep in reps:
            reports.write_report(rep, tmp_path / tag)
            ok = (rep.config["objective"] == objective
                  and len(rep.per_image) == toy_dataset.n_images)
            consistent = consistent and ok
            rows.setdefault((rep.source_model_seed, rep.target_model_seed),
                            {})[tag] = (rep.asr_tr, rep.asr_ir)
    cmp_rows = [(s, t, rows[(s, t)]["ot"][0], rows[(s, t)]["mean"][0],
                 rows[(s, t)]["ot"][1], rows[(s, t)]["mean"][1])
                for s in sources for t in targets]
    cmp_path = tmp_path / "objective_comparison.csv"
    reports.write_comparison(cmp_rows, cmp_path)
    elapsed = time.perf_counter() - t0
    lines = cmp_path.read_text().splitlines()
    emitted = len(lines) == 7  # header + 6 pairs
    for line in lines:
        _verdicts.append("  " + line)
    criterion(9, "transfer-matrix reports",
              consistent and emitted and elapsed < 900.0,
              f"{elapsed:.0f}s")


# ------------------------------------------------------------------ 10
def test_criterion_10_nan_path(small_dataset, tmp_path):
    # lambda small enough that whole kernel rows underflow: the library
    # flags divergence and the CLI exits with the documented code, no crash
    c = np.array([[2.0, 2.0], [0.0, 0.0]])
    kern = ot.gibbs_kernel(c, 1e-4)
    u, v = ot.uniform_marginals(2, 2)
    with pytest.raises(ot.SinkhornDivergenceError):
        ot.sinkhorn(kern, u, v)

    rng = SeededRng(0)
    img = rng.uniform(0.0, 1.0, (16, 16))
    txt = enc.init_text_encoder(0)
    x_txt = enc.encode_texts(txt, [[1, 2, 3], [4, 5, 6]])
    res = atk.generate_adversarial(img, x_txt, enc.init_image_encoder(0),
                                   atk.AttackConfig(lam=1e-6, seed=0))
    flag_set = res.diverged and res.delta_inf_norm <= 2.0 / 255.0 + 1e-12

    manifest = ds.write_dataset(small_dataset, tmp_path / "data")
    proc = subprocess.run(
        [sys.executable, "-m", "otattack.cli", "attack",
         "--dataset", str(manifest), "--out", str(tmp_path / "adv"),
         "--lambda", "1e-6", "--iters", "2"],
        capture_output=True, text=True)
    criterion(10, "divergence flag and exit code",
              flag_set and proc.returncode == 4
              and "Traceback" not in proc.stderr,
              f"exit code {proc.returncode}")

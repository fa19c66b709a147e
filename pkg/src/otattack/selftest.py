"""Built-in oracle, gradient, and invariant checks behind `otattack selftest`.

A trimmed version of the pytest suite that runs without pytest installed,
for quick sanity checks of a deployed build.
"""

import numpy as np

from . import attack as atk
from . import augment as aug
from . import encoders, ot
from .numerics import SeededRng, finite_diff_grad, matmul


def _check_matmul():
    out = matmul([[1.0, 1.0]], [[2.0], [3.0]])
    assert abs(out[0, 0] - 5.0) < 1e-12


def _check_finite_diff():
    g = finite_diff_grad(lambda x: float(x.sum()), np.zeros((3, 3)))
    assert np.allclose(g, 1.0, atol=1e-8)


def _check_sinkhorn_vs_oracle():
    rng = SeededRng(7)
    for _ in range(5):
        c = rng.uniform(0.0, 2.0, (4, 4))
        plan_exact, exact_cost = ot.exact_ot_square(c)
        kern = ot.gibbs_kernel(c, 0.01)
        u, v = ot.uniform_marginals(4, 4)
        plan = ot.sinkhorn(kern, u, v, ot.SinkhornConfig(lam=0.01))
        approx = ot.ot_loss(plan, c)
        spread = float(c.max() - c.min())
        assert exact_cost - 1e-9 <= approx <= exact_cost + 0.05 * spread


def _check_marginals():
    rng = SeededRng(11)
    for _ in range(10):
        c = rng.uniform(0.0, 2.0, (5, 5))
        kern = ot.gibbs_kernel(c, 0.05)
        u, v = ot.uniform_marginals(5, 5)
        plan = ot.sinkhorn(kern, u, v)
        assert plan.marginal_error < 1e-2 and np.all(plan.t >= 0.0)


def _check_rescale_adjoint():
    rng = SeededRng(3)
    for factor in (0.5, 1.25, 2.0):
        x = rng.uniform(0.0, 1.0, (12, 10))
        h_out = aug.output_length(12, factor)
        w_out = aug.output_length(10, factor)
        y = rng.uniform(-1.0, 1.0, (h_out, w_out))
        rv = aug.resample_matrix(12, h_out, factor)
        rh = aug.resample_matrix(10, w_out, factor)
        ax = rv @ x @ rh.T
        aty = aug.rescale_adjoint(y, factor, (12, 10))
        assert abs(float((ax * y).sum()) - float((x * aty).sum())) < 1e-9


def _check_encoder_gradient():
    rng = SeededRng(5)
    params = encoders.init_image_encoder(21)
    img = rng.uniform(0.1, 0.9, (16, 16))
    direction = rng.normal(0.0, 1.0, (params.proj.shape[1],))

    def loss(x):
        f, _ = encoders.encode_image(params, x)
        return float(f @ direction)

    _, cache = encoders.encode_image(params, img)
    analytic = encoders.encode_image_grad(params, cache, direction)
    numeric = finite_diff_grad(loss, img)
    denom = max(1e-12, float(np.abs(numeric).max()))
    assert float(np.abs(analytic - numeric).max()) / denom < 1e-5


def _check_attack_feasibility():
    rng = SeededRng(9)
    img = rng.uniform(0.2, 0.8, (16, 16))
    txt = encoders.init_text_encoder(33)
    x = encoders.encode_texts(txt, [[1, 2, 3], [4, 5, 6]])
    cfg = atk.AttackConfig(iters=3, seed=42)
    res = atk.generate_adversarial(img, x, encoders.init_image_encoder(33), cfg)
    assert res.delta_inf_norm <= cfg.epsilon + 1e-12
    assert float(res.adversarial.min()) >= 0.0 and float(res.adversarial.max()) <= 1.0
    assert all(np.isfinite(v) for v in res.loss_trace)


CHECKS = [
    ("matmul hand example", _check_matmul),
    ("finite-difference linear oracle", _check_finite_diff),
    ("sinkhorn vs permutation oracle", _check_sinkhorn_vs_oracle),
    ("marginal feasibility", _check_marginals),
    ("rescale adjoint identity", _check_rescale_adjoint),
    ("encoder pixel gradient", _check_encoder_gradient),
    ("attack feasibility", _check_attack_feasibility),
]


def run(verbose: bool = False) -> tuple[int, int]:
    """Run all checks; returns (failure count, total count)."""
    failures = 0
    for name, check in CHECKS:
        try:
            check()
            status = "ok"
        except Exception as exc:  # report and continue
            failures += 1
            status = f"FAIL ({exc})"
        if verbose:
            print(f"  {name}: {status}")
    return failures, len(CHECKS)

"""Central-difference verification of every differentiable operation.

Runs in float64. Each check builds small random tensors, evaluates a scalar
objective, and compares analytic gradients against central differences.
Nondifferentiable kinks (relu at 0, Huber at |e| = delta) are kept at a
safe distance from the sample points, since finite differences straddle them.
"""

from __future__ import annotations

import numpy as np

from .diffcore import constant, grad_check, ops, parameter
from .model import (
    ModelConfig,
    ModelInputs,
    init_params,
    instance_channels,
    multimodal_forward,
    one_hot_mask,
)
from .tabular import TabularConfig, init_tabular_params, tabular_forward

TOLERANCE = 1e-4

TOY_MODEL = ModelConfig(frame_size=16, patch_size=8, channels=1, spatial_dim=8,
                        spatial_layers=1, spatial_heads=2, mm_dim=8, mm_heads=2,
                        mm_layers=1, mlp_ratio=2.0, head_hidden=8, use_video=True,
                        use_morph=True, use_ehr=True, use_interp=True,
                        n_zona_classes=3, n_stage_classes=4, max_frames=4,
                        ehr_dim=5, interp_dim=3)

TOY_TABULAR = TabularConfig(token_dim=8, layers=1, heads=2, mlp_ratio=2.0,
                            use_ehr=True, use_interp=True,
                            ehr_numeric=("age", "bmi"),
                            ehr_categorical=(("protocol", 3),),
                            interp_names=("t_first", "symmetry"))


def _p(rng, *shape):
    return parameter(rng.normal(0.0, 1.0, shape))


def op_checks(seed: int = 0) -> dict[str, float]:
    """Max relative gradient error per elementary operation."""
    rng = np.random.default_rng(seed)
    results = {}

    def check(name, f, inputs):
        results[name] = grad_check(f, inputs, tol=TOLERANCE)

    a, b = _p(rng, 3, 4), _p(rng, 3, 4)
    row = _p(rng, 4)
    check("add", lambda *_: ops.sum_all(ops.add(a, b)), [a, b])
    check("add_broadcast", lambda *_: ops.sum_all(ops.add(a, row)), [a, row])
    check("sub", lambda *_: ops.sum_all(ops.mul(ops.sub(a, b), ops.sub(a, b))), [a, b])
    check("mul", lambda *_: ops.sum_all(ops.mul(a, b)), [a, b])
    check("scale", lambda *_: ops.sum_all(ops.scale(a, -1.7)), [a])
    check("shift", lambda *_: ops.sum_all(ops.mul(ops.shift(a, 0.3), a)), [a])

    m1, m2 = _p(rng, 3, 5), _p(rng, 5, 2)
    check("matmul", lambda *_: ops.sum_all(ops.matmul(m1, m2)), [m1, m2])
    b1, b2 = _p(rng, 2, 3, 4), _p(rng, 2, 4, 3)
    check("matmul_batched", lambda *_: ops.sum_all(ops.matmul(b1, b2)), [b1, b2])

    t = _p(rng, 2, 3, 4)
    check("permute", lambda *_: ops.sum_all(ops.mul(ops.permute(t, (2, 0, 1)),
                                                 ops.permute(t, (2, 0, 1)))), [t])
    check("reshape", lambda *_: ops.sum_all(ops.mul(ops.reshape(t, (6, 4)),
                                                 ops.reshape(t, (6, 4)))), [t])
    c1, c2 = _p(rng, 2, 3), _p(rng, 4, 3)
    check("concat", lambda *_: ops.sum_all(ops.mul(ops.concat([c1, c2], axis=0),
                                                ops.concat([c1, c2], axis=0))), [c1, c2])
    check("slice_axis", lambda *_: ops.sum_all(ops.mul(ops.slice_axis(t, 2, 1, 3),
                                                    ops.slice_axis(t, 2, 1, 3))), [t])
    s = _p(rng, 3, 4)
    check("broadcast_leading",
          lambda *_: ops.sum_all(ops.mul(ops.broadcast_leading(s, 2), b1)), [s, b1])

    mix = constant(rng.normal(0.0, 1.0, (2, 3, 4)))
    logits = _p(rng, 2, 3, 4)
    check("softmax", lambda *_: ops.sum_all(ops.mul(ops.softmax(logits), mix)), [logits])
    mask = np.array([[True, True, False, True], [True, False, True, True],
                     [False, True, True, True]])
    masked_logits = _p(rng, 2, 3, 4)
    check("softmax_masked",
          lambda *_: ops.sum_all(ops.mul(ops.softmax(masked_logits, key_mask=mask), mix)),
          [masked_logits])

    x = _p(rng, 3, 6)
    gamma, beta = _p(rng, 6), _p(rng, 6)
    mix36 = constant(rng.normal(0.0, 1.0, (3, 6)))
    check("layer_norm",
          lambda *_: ops.sum_all(ops.mul(ops.layer_norm(x, gamma, beta), mix36)),
          [x, gamma, beta])

    off = parameter(rng.normal(0.0, 1.0, (3, 6)) + np.where(rng.random((3, 6)) > 0.5, 2.0, -2.0))
    check("relu", lambda *_: ops.sum_all(ops.mul(ops.relu(off), off)), [off])
    check("gelu", lambda *_: ops.sum_all(ops.mul(ops.gelu(x), x)), [x])
    check("sum_all", lambda *_: ops.mul(ops.sum_all(x), ops.sum_all(x)), [x])
    check("mean_all", lambda *_: ops.mul(ops.mean_all(x), ops.mean_all(x)), [x])

    pred = _p(rng, 8)
    target = rng.normal(0.0, 1.0, 8)
    target += np.where(np.abs(pred.data - target) < 0.2, 0.5, 0.0)  # keep off the kink
    check("huber_loss", lambda *_: ops.huber_loss(pred, target, delta=1.0), [pred])

    lx, lw, lb = _p(rng, 3, 5), _p(rng, 5, 2), _p(rng, 2)
    check("linear", lambda *_: ops.sum_all(ops.mul(ops.linear(lx, lw, lb),
                                                ops.linear(lx, lw, lb))), [lx, lw, lb])
    return results


def _toy_model_inputs(seed: int = 1) -> ModelInputs:
    rng = np.random.default_rng(seed)
    t, h, w = 3, TOY_MODEL.frame_size, TOY_MODEL.frame_size
    zona_ids = rng.integers(0, TOY_MODEL.n_zona_classes, (t, h, w))
    stage = rng.integers(0, TOY_MODEL.n_stage_classes, t)
    stage_onehot = (stage[:, None] == np.arange(TOY_MODEL.n_stage_classes)).astype(np.float64)
    scalars = np.concatenate([rng.random((t, 1)), stage_onehot], axis=1)
    return ModelInputs(
        video=rng.random((t, h, w, 1)),
        zona=one_hot_mask(zona_ids, TOY_MODEL.n_zona_classes),
        blast=instance_channels(rng.integers(0, 3, (t, h, w))),
        pronuc=instance_channels(rng.integers(0, 2, (t, h, w))),
        scalars=scalars,
        ehr_vec=rng.normal(size=TOY_MODEL.ehr_dim),
        interp_vec=rng.normal(size=TOY_MODEL.interp_dim),
    )


def full_model_check(seed: int = 0) -> float:
    """Gradient check of the complete multimodal forward over every parameter."""
    params = init_params(TOY_MODEL, seed=seed, dtype=np.float64)
    inputs = _toy_model_inputs()
    names = sorted(params)
    return grad_check(lambda *_: multimodal_forward(inputs, params, TOY_MODEL),
                      [params[n] for n in names], tol=TOLERANCE)


def full_tabular_check(seed: int = 0) -> float:
    """Gradient check of the tabular transformer over every parameter."""
    params = init_tabular_params(TOY_TABULAR, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(3)
    ehr = np.concatenate([rng.normal(size=2), np.eye(3)[rng.integers(0, 3)]])
    interp = rng.normal(size=2)
    names = sorted(params)
    return grad_check(lambda *_: tabular_forward(params, TOY_TABULAR, ehr_vec=ehr,
                                                 interp_vec=interp),
                      [params[n] for n in names], tol=TOLERANCE)


def run_suite(seed: int = 0) -> dict[str, float]:
    """name -> max relative gradient error, for the CLI and acceptance tests."""
    results = op_checks(seed)
    results["multimodal_forward"] = full_model_check(seed)
    results["tabular_forward"] = full_tabular_check(seed)
    return results

import math

import numpy as np
import pytest

from segfuse import (
    SeesawParams,
    affine_stage,
    cbnet_compose,
    cyclical_lr,
    identity_stage,
    nearest_resize,
    seesaw_loss,
    swa_average,
)
from segfuse.errors import (
    ChannelMismatch,
    ConfigError,
    DimensionMismatch,
    EmptyList,
    ShapeMismatch,
    StageCountMismatch,
)

from oracles import ref_kahan_mean


def constant_pyramid(value, L=4, h0=16, w0=16, channels=2):
    stages = []
    h, w = h0, w0
    for _ in range(L):
        h, w = (h + 1) // 2, (w + 1) // 2
        stages.append(np.full((h, w, channels), float(value)))
    return stages


def random_pyramid(rng, L=4, h0=16, w0=16, channels=2):
    stages = []
    h, w = h0, w0
    for _ in range(L):
        h, w = (h + 1) // 2, (w + 1) // 2
        stages.append(rng.normal(size=(h, w, channels)))
    return stages


# ---------------------------------------------------------------------------
# nearest_resize


def test_resize_identity():
    m = np.arange(24, dtype=float).reshape(4, 3, 2)
    assert (nearest_resize(m, 4, 3) == m).all()


def test_resize_constant():
    m = np.full((3, 5, 1), 7.0)
    out = nearest_resize(m, 9, 2)
    assert (out == 7.0).all() and out.shape == (9, 2, 1)


def test_resize_block_replication():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = nearest_resize(m, 4, 4)[:, :, 0]
    expect = np.array(
        [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=float
    )
    assert (out == expect).all()


def test_resize_index_mapping_oracle():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(5, 7, 3))
    th, tw = 11, 4
    out = nearest_resize(m, th, tw)
    for r in range(th):
        for c in range(tw):
            assert (out[r, c] == m[int(r * 5 / th), int(c * 7 / tw)]).all()


# ---------------------------------------------------------------------------
# cbnet_compose


def test_compose_constant_hand_trace():
    aux = constant_pyramid(1.0, L=4)
    lead_init = np.zeros((16, 16, 2))
    fns = [identity_stage() for _ in range(4)]
    lead = cbnet_compose(lead_init, aux, fns)
    values = [np.unique(stage) for stage in lead]
    assert all(v.size == 1 for v in values)
    assert [v[0] for v in values] == [4.0, 7.0, 9.0, 10.0]


def test_compose_zero_aux_propagates_lead():
    rng = np.random.default_rng(1)
    aux = constant_pyramid(0.0, L=3)
    lead_init = rng.normal(size=(16, 16, 2))
    lead = cbnet_compose(lead_init, aux, [identity_stage()] * 3)
    expect = nearest_resize(lead_init, 8, 8)
    assert np.allclose(lead[0], expect)
    assert np.allclose(lead[1], nearest_resize(expect, 4, 4))
    # all-zero lead init stays zero everywhere
    zeros = cbnet_compose(np.zeros((16, 16, 2)), aux, [identity_stage()] * 3)
    assert all((stage == 0).all() for stage in zeros)


def test_compose_single_stage_base_case():
    rng = np.random.default_rng(2)
    aux = [rng.normal(size=(8, 8, 1))]
    lead_init = rng.normal(size=(16, 16, 1))
    lead = cbnet_compose(lead_init, aux, [identity_stage()])
    assert np.allclose(lead[0], aux[0] + nearest_resize(lead_init, 8, 8))


def test_compose_shape_contract():
    rng = np.random.default_rng(3)
    aux = random_pyramid(rng, L=4, h0=21, w0=13, channels=3)
    lead = cbnet_compose(rng.normal(size=(21, 13, 3)), aux, [identity_stage()] * 4)
    for stage_out, stage_aux in zip(lead, aux):
        assert stage_out.shape == stage_aux.shape


def test_compose_linearity():
    rng = np.random.default_rng(4)
    for trial in range(30):
        L = int(rng.integers(1, 5))
        aux_a = random_pyramid(rng, L=L)
        aux_b = random_pyramid(rng, L=L)
        lead_a = rng.normal(size=(16, 16, 2))
        lead_b = rng.normal(size=(16, 16, 2))
        if trial % 2:
            fns = [identity_stage() for _ in range(L)]
        else:
            fns = [affine_stage(rng.normal(size=2), 0.0) for _ in range(L)]
        out_sum = cbnet_compose(
            lead_a + lead_b, [a + b for a, b in zip(aux_a, aux_b)], fns
        )
        out_a = cbnet_compose(lead_a, aux_a, fns)
        out_b = cbnet_compose(lead_b, aux_b, fns)
        for s, a, b in zip(out_sum, out_a, out_b):
            assert np.allclose(s, a + b, atol=1e-9)


def test_compose_affine_stage_fn():
    aux = constant_pyramid(1.0, L=2, channels=1)
    fns = [affine_stage(2.0, 1.0), identity_stage()]
    lead = cbnet_compose(np.zeros((16, 16, 1)), aux, fns)
    # stage 1: (2 + 0) * 2 + 1 = 5; stage 2: 1 + 5 = 6
    assert np.unique(lead[0]) == [5.0]
    assert np.unique(lead[1]) == [6.0]


def test_compose_errors():
    aux = constant_pyramid(1.0, L=3)
    with pytest.raises(StageCountMismatch):
        cbnet_compose(np.zeros((16, 16, 2)), aux, [identity_stage()] * 2)
    with pytest.raises(ChannelMismatch):
        cbnet_compose(np.zeros((16, 16, 3)), aux, [identity_stage()] * 3)
    bad = constant_pyramid(1.0, L=3)
    bad[1] = np.full((5, 5, 2), 1.0)  # breaks the halving contract
    with pytest.raises(ShapeMismatch):
        cbnet_compose(np.zeros((16, 16, 2)), bad, [identity_stage()] * 3)
    mixed = constant_pyramid(1.0, L=2)
    mixed[1] = np.full((4, 4, 3), 1.0)
    with pytest.raises(ChannelMismatch):
        cbnet_compose(np.zeros((16, 16, 2)), mixed, [identity_stage()] * 2)


# ---------------------------------------------------------------------------
# Seesaw loss


def softmax_ce(logits, label):
    z = np.asarray(logits, dtype=np.float64)
    mx = z.max()
    lse = mx + math.log(np.exp(z - mx).sum())
    loss = lse - z[label]
    grad = np.exp(z - lse)
    grad[label] -= 1.0
    return loss, grad


def frozen_comp_loss(z, label, counts, p, q, base_logits):
    """Oracle loss with the compensation factor fixed at base_logits."""
    z = np.asarray(z, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    num = 0.0
    den = math.exp(z[label] - z.max())
    sigma = np.exp(base_logits - base_logits.max())
    sigma = sigma / sigma.sum()
    for j in range(z.size):
        if j == label:
            continue
        m = min(1.0, (counts[j] / counts[label]) ** p)
        c = max(1.0, (sigma[j] / sigma[label]) ** q)
        den += m * c * math.exp(z[j] - z.max())
    return -(math.log(math.exp(z[label] - z.max()) / den))


def test_seesaw_reduces_to_cross_entropy():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        z = rng.normal(size=n) * 3
        label = int(rng.integers(n))
        counts = rng.integers(1, 1000, size=n).astype(float)
        params = SeesawParams(tuple(counts), p=0.0, q=0.0)
        loss, grad = seesaw_loss(z, label, params)
        ref_loss, ref_grad = softmax_ce(z, label)
        assert loss == pytest.approx(ref_loss, abs=1e-12)
        assert np.allclose(grad, ref_grad, atol=1e-12)


def test_seesaw_two_class_closed_form():
    params = SeesawParams((10.0, 10.0), p=0.8, q=0.0)
    loss, grad = seesaw_loss([0.0, 0.0], 0, params)
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert np.allclose(grad, [-0.5, 0.5], atol=1e-12)


def test_seesaw_mitigation_suppresses_rare_negatives():
    # tail negative class (small N_j) contributes less than an equal-count one
    counts_equal = SeesawParams((100.0, 100.0), p=0.8, q=0.0)
    counts_tail = SeesawParams((100.0, 1.0), p=0.8, q=0.0)
    z = np.array([0.0, 2.0])
    loss_eq, _ = seesaw_loss(z, 0, counts_equal)
    loss_tail, _ = seesaw_loss(z, 0, counts_tail)
    assert loss_tail < loss_eq


def test_seesaw_loss_monotone_in_negative_count():
    z = np.array([0.5, 1.0, -0.3])
    prev = -math.inf
    for n_j in (1.0, 5.0, 25.0, 99.0):
        params = SeesawParams((100.0, n_j, 50.0), p=0.8, q=0.0)
        loss, _ = seesaw_loss(z, 0, params)
        assert loss > prev
        prev = loss


def test_seesaw_gradient_finite_differences():
    rng = np.random.default_rng(6)
    h = 1e-5
    for _ in range(100):
        n = int(rng.integers(2, 7))
        z = rng.normal(size=n) * 2
        label = int(rng.integers(n))
        counts = rng.integers(1, 500, size=n).astype(float)
        params = SeesawParams(tuple(counts), p=0.8, q=2.0)
        _, grad = seesaw_loss(z, label, params)
        fd = np.empty(n)
        for k in range(n):
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            fd[k] = (
                frozen_comp_loss(zp, label, counts, 0.8, 2.0, z)
                - frozen_comp_loss(zm, label, counts, 0.8, 2.0, z)
            ) / (2 * h)
        rel = np.abs(fd - grad).max() / max(np.abs(grad).max(), 1e-8)
        assert rel < 1e-4


def test_seesaw_loss_nonnegative():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        z = rng.normal(size=n) * 4
        params = SeesawParams(tuple(rng.integers(1, 50, size=n).astype(float)))
        loss, _ = seesaw_loss(z, int(rng.integers(n)), params)
        assert loss >= 0.0
        assert math.isfinite(loss)


def test_seesaw_dimension_mismatch():
    params = SeesawParams((1.0, 2.0, 3.0))
    with pytest.raises(DimensionMismatch):
        seesaw_loss([0.0, 1.0], 0, params)
    with pytest.raises(DimensionMismatch):
        seesaw_loss([0.0, 1.0, 2.0], 5, params)
    with pytest.raises(ConfigError):
        SeesawParams((1.0, -2.0))


# ---------------------------------------------------------------------------
# SWA averaging


def random_checkpoint(rng, spec=(("backbone.w", 17), ("head.b", 5))):
    return {name: rng.normal(size=n) for name, n in spec}


def test_swa_single_checkpoint():
    rng = np.random.default_rng(8)
    ckpt = random_checkpoint(rng)
    out = swa_average([ckpt])
    for name in ckpt:
        assert np.array_equal(out[name], ckpt[name])


def test_swa_two_checkpoints():
    out = swa_average([{"w": np.array([1.0])}, {"w": np.array([3.0])}])
    assert out["w"] == pytest.approx([2.0])


def test_swa_twelve_checkpoints_vs_kahan():
    rng = np.random.default_rng(9)
    ckpts = [random_checkpoint(rng) for _ in range(12)]
    out = swa_average(ckpts)
    for name in ckpts[0]:
        ref = ref_kahan_mean([c[name] for c in ckpts])
        assert np.abs(out[name] - ref).max() < 1e-12


def test_swa_idempotent_and_permutation_invariant():
    rng = np.random.default_rng(10)
    ckpt = random_checkpoint(rng)
    same = swa_average([ckpt] * 5)
    for name in ckpt:
        assert np.allclose(same[name], ckpt[name], atol=1e-15)
    ckpts = [random_checkpoint(rng) for _ in range(6)]
    fwd = swa_average(ckpts)
    rev = swa_average(list(reversed(ckpts)))
    perm = swa_average([ckpts[i] for i in rng.permutation(6)])
    for name in fwd:
        assert np.allclose(fwd[name], rev[name], atol=1e-12)
        assert np.allclose(fwd[name], perm[name], atol=1e-12)


def test_swa_errors():
    with pytest.raises(EmptyList):
        swa_average([])
    with pytest.raises(ShapeMismatch):
        swa_average([{"w": np.zeros(3)}, {"v": np.zeros(3)}])
    with pytest.raises(ShapeMismatch):
        swa_average([{"w": np.zeros(3)}, {"w": np.zeros(4)}])


# ---------------------------------------------------------------------------
# Cyclical LR


def test_cyclical_lr_boundaries():
    assert cyclical_lr(0, 5, 1e-4, 1e-6) == 1e-4
    assert cyclical_lr(4, 5, 1e-4, 1e-6) == pytest.approx(1e-6)
    assert cyclical_lr(5, 5, 1e-4, 1e-6) == 1e-4  # next cycle resets


def test_cyclical_lr_closed_form():
    assert cyclical_lr(2, 5, 1e-4, 1e-6) == pytest.approx(5.05e-5, rel=1e-12)


def test_cyclical_lr_single_iteration_cycle():
    assert cyclical_lr(3, 1, 1e-4, 1e-6) == 1e-4


def test_cyclical_lr_errors():
    with pytest.raises(ConfigError):
        cyclical_lr(0, 0, 1e-4, 1e-6)
    with pytest.raises(ConfigError):
        cyclical_lr(0, 5, 1e-6, 1e-4)

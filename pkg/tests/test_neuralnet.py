import math

import numpy as np
import pytest

import fd_oracle as fo
from stta import neuralnet as nn
from stta import synthworld as sw
from stta import tape as tp
from stta.errors import (DegenerateRotationError, FormatError, PoisonedParametersError,
                         ShapeMismatchError, STTAError, UsageError)
from stta import geometry as geo


# --------------------------------------------------------------------------- forward and heads

def test_zero_weights_head_outputs():
    theta, beta, trans = nn.forward(nn.zero_params(), np.ones(64))
    assert theta.shape == (24, 6) and np.all(theta == 0)
    np.testing.assert_array_equal(beta, np.zeros(10))
    np.testing.assert_allclose(trans, [0.0, 0.0, 0.5 + math.log(2.0)], rtol=0, atol=1e-15)
    with pytest.raises(DegenerateRotationError):
        geo.sixd_to_matrix(theta)


def test_random_params_heads_bounded(random_params, rng):
    obs = rng.normal(0, 20, size=(500, 64))
    theta, beta, trans = nn.forward(random_params, obs)
    assert all(np.all(np.isfinite(a)) for a in (theta, beta, trans))
    assert np.all(np.abs(beta) < nn.BETA_BOUND)
    assert np.all(trans[:, 2] > nn.MIN_DEPTH)
    assert np.all(np.abs(trans[:, :2]) < nn.XY_BOUND)


def test_forward_deterministic(random_params, rng):
    obs = rng.normal(size=64)
    a, b = nn.forward(random_params, obs), nn.forward(random_params, obs)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_predict_matches_plain_geometry(random_params, rng):
    obs = rng.normal(size=(5, 64))
    pred = nn.predict_arrays(random_params, obs)
    rot = geo.sixd_to_matrix(pred.theta6d_raw)
    j3d = geo.fk_from_matrices(rot, geo.DEFAULT_SKELETON.bone_scales(pred.beta), pred.trans)
    np.testing.assert_allclose(pred.j3d, j3d, atol=1e-12)
    np.testing.assert_allclose(pred.j2d, geo.project(j3d), atol=1e-9)


def test_poisoned_parameters_rejected(random_params):
    bad = random_params.copy()
    bad.weights[1][3, 4] = np.nan
    with pytest.raises(PoisonedParametersError):
        nn.forward(bad, np.zeros(64))
    bad = random_params.copy()
    bad.biases[2][0] = np.inf
    with pytest.raises(PoisonedParametersError):
        nn.predict_arrays(bad, np.zeros((2, 64)))


# --------------------------------------------------------------------------- backward

def test_sum_of_outputs_gradient_matches_finite_differences(rng):
    params = nn.init_params(7, (64, 5, 5, 157))
    obs = rng.normal(size=(3, 64))

    def f(p):
        return tp.sum(nn.mlp(p.weights, p.biases, obs))

    t = tp.GradientTape()
    wv, bv = nn.watch(t, params)
    grads = nn.backward(t, f(nn.RegressorParams(wv, bv)), wv, bv)
    arrays = params.arrays()
    for k, (a, g) in enumerate(zip(arrays, grads)):
        num = np.zeros_like(a)
        for i in np.ndindex(a.shape):
            plus, minus = [x.copy() for x in arrays], [x.copy() for x in arrays]
            plus[k][i] += 1e-5
            minus[k][i] -= 1e-5
            num[i] = (float(f(nn.RegressorParams.from_arrays(plus)))
                      - float(f(nn.RegressorParams.from_arrays(minus)))) / 2e-5
        assert len(fo.mismatch(g.ravel(), num.ravel())) == 0


def test_loss_gradients_match_oracle_small_network(space):
    params, inst = fo.make_instance(101, space)
    g = fo.analytic_gradients(params, inst)
    num = fo.central_differences(fo.flatten(params), inst)
    for k, part in enumerate(fo.PARTS):
        assert len(fo.mismatch(g[k], num[k])) == 0, part


def test_loss_gradients_match_oracle_full_width_subset(space):
    """Full-size regressor; a random subset of coordinates from every layer."""
    params, inst = fo.make_instance(5, space, dims=nn.LAYER_DIMS, b=1, t=3)
    g = fo.analytic_gradients(params, inst)
    flat = fo.flatten(params)
    sizes = [a.size for a in params.arrays()]
    starts = np.cumsum([0] + sizes[:-1])
    rng = np.random.default_rng(0)
    idx = np.concatenate([s + rng.choice(n, size=min(n, 40), replace=False) for s, n in zip(starts, sizes)])

    def sub_objective(rows):
        full = np.repeat(flat.astype(fo.LD)[None], rows.shape[0], axis=0)
        full[:, idx] = rows
        return fo.objective(full, inst)

    base = flat[idx].astype(fo.LD)
    num = np.empty((4, len(idx)))
    for s in range(0, len(idx), 60):
        j = np.arange(s, min(s + 60, len(idx)))
        plus = np.repeat(base[None], len(j), axis=0)
        minus = plus.copy()
        plus[np.arange(len(j)), j] += fo.LD(fo.H)
        minus[np.arange(len(j)), j] -= fo.LD(fo.H)
        num[:, j] = ((sub_objective(plus) - sub_objective(minus)) / (2 * fo.LD(fo.H))).astype(float)
    for k, part in enumerate(fo.PARTS):
        assert len(fo.mismatch(g[k][idx], num[k])) == 0, part


def test_independent_parameter_gets_exact_zero(random_params, rng):
    t = tp.GradientTape()
    wv, bv = nn.watch(t, random_params)
    raw6, beta, trans = nn.heads(nn.mlp(wv, bv, rng.normal(size=(4, 64))))
    grads = nn.backward(t, tp.sum(beta), wv, bv)
    np.testing.assert_array_equal(grads[-1][nn.THETA_DIM + 10:], 0.0)
    np.testing.assert_array_equal(grads[-1][:nn.THETA_DIM], 0.0)
    assert np.any(grads[-1][nn.THETA_DIM:nn.THETA_DIM + 10] != 0)


def test_backward_rejects_non_tape_and_non_scalar(random_params):
    t = tp.GradientTape()
    wv, bv = nn.watch(t, random_params)
    with pytest.raises(UsageError):
        nn.backward(t, np.float64(1.0), wv, bv)
    with pytest.raises(UsageError):
        nn.backward(t, wv[0] * 2.0, wv, bv)


# --------------------------------------------------------------------------- Adam and schedule

def test_adam_first_step_hand_computation():
    p = [np.array([1.0, -2.0, 0.5, 3.0])]
    g = [np.array([0.3, -1e-3, 0.0, 2.0])]
    state = nn.AdamState.zeros_like(p)
    out = nn.adam_step(p, g, state, 1e-2)
    # m_hat = g and v_hat = g**2 after bias correction at step 1
    expected = p[0] - 1e-2 * g[0] / (np.abs(g[0]) + 1e-8)
    np.testing.assert_allclose(out[0], expected, rtol=0, atol=1e-12)
    assert state.step == 1
    np.testing.assert_allclose(state.m[0], 0.5 * g[0])
    np.testing.assert_allclose(state.v[0], 0.1 * g[0] ** 2)


def test_adam_zero_gradient_no_change_and_constant_stream_monotone():
    p = [np.array([2.0])]
    state = nn.AdamState.zeros_like(p)
    assert nn.adam_step(p, [np.zeros(1)], state, 1e-2)[0][0] == 2.0
    state = nn.AdamState.zeros_like(p)
    trace = [p[0][0]]
    for _ in range(50):
        p = nn.adam_step(p, [np.array([0.7])], state, 1e-2)
        trace.append(p[0][0])
    assert np.all(np.diff(trace) < 0)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        nn.adam_step([np.zeros(3)], [np.zeros(4)], nn.AdamState.zeros_like([np.zeros(3)]), 1e-3)


def test_adam_defaults():
    s = nn.AdamState.zeros_like([np.zeros(1)])
    assert (s.beta1, s.beta2, s.eps) == (0.5, 0.9, 1e-8)


def test_cosine_schedule_values():
    sched = nn.LRSchedule(100)
    assert nn.cosine_lr(0, sched) == pytest.approx(5e-5, rel=1e-12)
    assert nn.cosine_lr(100, sched) == pytest.approx(1e-6, rel=1e-12)
    assert nn.cosine_lr(50, sched) == pytest.approx(2.55e-5, rel=1e-12)
    lrs = [nn.cosine_lr(s, sched) for s in range(101)]
    assert np.all(np.diff(lrs) <= 0) and min(lrs) >= 1e-6 - 1e-18 and max(lrs) <= 5e-5
    for bad in (-1, 101):
        with pytest.raises(STTAError):
            nn.cosine_lr(bad, sched)


# --------------------------------------------------------------------------- pretraining and checkpoints

@pytest.fixture(scope="module")
def small_pretrain():
    videos = [sw.generate_video(sw.SOURCE_DOMAIN, i, 120, 3) for i in range(3)]
    return videos, nn.pretrain(None, videos, nn.PretrainConfig(epochs=4, seed=3))


def test_pretrain_curve_monotone_within_tolerance(small_pretrain):
    _, res = small_pretrain
    losses = [loss for _, loss in res.curve]
    assert len(losses) == 5
    for a, b in zip(losses, losses[1:]):
        assert b <= a * 1.01
    assert losses[-1] < losses[0]


def test_pretrain_deterministic_and_final_loss_recomputable(small_pretrain):
    videos, res = small_pretrain
    again = nn.pretrain(None, videos, nn.PretrainConfig(epochs=4, seed=3))
    assert nn.checkpoint_bytes(again.params) == nn.checkpoint_bytes(res.params)
    obs, tgt = nn.supervised_targets(videos)
    reloaded = nn.params_from_bytes(nn.checkpoint_bytes(res.params))
    assert abs(nn.supervised_loss(reloaded, obs, tgt) - res.curve[-1][1]) < 1e-9


def test_pretrain_needs_data():
    with pytest.raises(STTAError):
        nn.pretrain(None, [])


def test_checkpoint_round_trip_and_layout(random_params, tmp_path):
    data = nn.checkpoint_bytes(random_params)
    assert data[:8] == b"STTA-CKP"
    back = nn.params_from_bytes(data)
    for a, b in zip(random_params.arrays(), back.arrays()):
        np.testing.assert_array_equal(a, b)
    first = np.frombuffer(data, "<f8", 1, 16 + 4 * 4)[0]
    assert first == random_params.weights[0][0, 0]
    path = tmp_path / "m.ckp"
    nn.save_checkpoint(path, random_params)
    assert path.read_bytes() == data
    assert nn.checkpoint_bytes(nn.load_checkpoint(path)) == data


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
def test_checkpoint_corruption_rejected(random_params, mutate):
    data = bytearray(nn.checkpoint_bytes(random_params))
    if mutate == "magic":
        data[0:1] = b"X"
    elif mutate == "version":
        data[8] = 9
    else:
        data = data[:-8]
    with pytest.raises(FormatError):
        nn.params_from_bytes(bytes(data))

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sdsnet.core import Tensor, grad_check, no_grad, sigmoid
from sdsnet.datagen import GenSpec, generate
from sdsnet.models import (
    Batch,
    ConfigError,
    ModelConfig,
    ScreeningModel,
    decide,
    decide_all,
    load_checkpoint,
    lstm_step,
    save_checkpoint,
    sds_sum_baseline,
)
from sdsnet.models.encoders import BiLSTM, NonLocal, Q3DCNN
from sdsnet.models.params import ParamStore

from reference import lstm_cell_by_hand

FULL_TRACE = [
    ("input", [1, 100, 110, 110]),
    ("conv1", [16, 100, 108, 108]),
    ("pool1", [16, 50, 54, 54]),
    ("conv2", [32, 50, 52, 52]),
    ("pool2", [32, 25, 26, 26]),
    ("conv3", [64, 25, 24, 24]),
    ("pool3", [64, 13, 12, 12]),
    ("conv4", [128, 13, 10, 10]),
    ("pool4", [128, 6, 5, 5]),
    ("conv5", [256, 1, 1, 1]),
    ("flatten", [256]),
    ("fc", [128]),
]


def encoder_for(cfg, seed=0):
    store = ParamStore(np.random.default_rng(seed), cfg.np_dtype)
    return {"q3dcnn": Q3DCNN, "bilstm": BiLSTM, "nonlocal": NonLocal}[cfg.encoder](cfg, store), store


def small_batch(n=2, seed=3, dtype=np.float32):
    return Batch.from_sessions(generate(GenSpec(n_subjects=n, seed=seed)), dtype=dtype)


# -- configuration and shapes -----------------------------------------------
@pytest.mark.parametrize("i", range(len(FULL_TRACE)))
def test_full_preset_trace_row(i):
    assert ModelConfig.full().shape_trace()[i] == FULL_TRACE[i]


def test_full_preset_final_kernel_spans_remaining_volume():
    assert ModelConfig.full().final_kernel == (6, 5, 5)


def test_full_preset_forward_runs_full_chain():
    cfg = ModelConfig.full()
    enc, _ = encoder_for(cfg)
    trace = []
    clip = np.random.default_rng(0).uniform(0, 1, (1, 100, 110, 110)).astype(np.float32)
    with no_grad():
        out = enc(clip, trace=trace)
    assert trace == FULL_TRACE
    assert out.shape == (1, 128)


def test_tiny_trace_follows_size_formulas():
    trace = dict(ModelConfig.tiny().shape_trace())
    assert trace["conv1"] == [4, 16, 30, 30]
    assert trace["pool1"] == [4, 8, 15, 15]
    assert trace["conv2"] == [8, 8, 13, 13]
    assert trace["pool2"] == [8, 4, 7, 7]
    assert trace["pool3"] == [16, 2, 3, 3]
    assert trace["pool4"] == [32, 1, 1, 1]
    assert trace["fc"] == [32]


def test_tiny_forward_matches_declared_trace():
    cfg = ModelConfig.tiny()
    enc, _ = encoder_for(cfg)
    trace = []
    with no_grad():
        enc(np.zeros((3, 16, 32, 32), dtype=np.float32), trace=trace)
    assert trace == cfg.shape_trace()


def test_infeasible_config_rejected_at_construction():
    with pytest.raises(ConfigError):
        ModelConfig(frames=4, spatial=(8, 8), channel_widths=(4, 8, 16, 32, 64))
    with pytest.raises(ConfigError):
        ModelConfig(encoder="transformer")
    with pytest.raises(ConfigError):
        ModelConfig.tiny(pool_rounding=(("floor", "floor", "floor"),))
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"encoder": "q3dcnn", "widths": [1]})


def test_config_dict_round_trip():
    for cfg in (ModelConfig.full(), ModelConfig.tiny(encoder="nonlocal", use_sds=False, dtype="f64")):
        again = ModelConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert again.shape_trace() == cfg.shape_trace()


def test_method_names():
    assert ModelConfig.tiny().method_name == "[SDS+Video]3D-CNN"
    assert ModelConfig.tiny(use_sds=False, use_time=False).method_name == "[Video only]3D-CNN"
    assert ModelConfig.tiny(encoder="bilstm").method_name == "[SDS+Video]RNN"
    assert ModelConfig.tiny(encoder="none").method_name == "[SDS only]FC"


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(
    frames=st.integers(1, 8),
    h=st.integers(3, 20),
    w=st.integers(3, 20),
    n_stages=st.integers(1, 3),
    modes=st.lists(st.sampled_from(["floor", "ceil"]), min_size=9, max_size=9),
)
def test_valid_configs_never_fail_at_forward(frames, h, w, n_stages, modes):
    rounding = tuple(tuple(modes[3 * i : 3 * i + 3]) for i in range(n_stages))
    try:
        cfg = ModelConfig(
            frames=frames,
            spatial=(h, w),
            channel_widths=(2,) * n_stages + (3,),
            pool_rounding=rounding,
            feature_dim=4,
        )
    except ConfigError:
        return
    enc, _ = encoder_for(cfg)
    trace = []
    with no_grad():
        out = enc(np.ones((1, frames, h, w)), trace=trace)
    assert trace == cfg.shape_trace()
    assert out.shape == (1, 4)


# -- encoders -----------------------------------------------------------------
def test_zero_clip_zero_bias_gives_zero_feature():
    enc, _ = encoder_for(ModelConfig.tiny())
    with no_grad():
        out = enc(np.zeros((2, 16, 32, 32), dtype=np.float32))
    assert np.array_equal(out.data, np.zeros((2, 32), dtype=np.float32))


def test_wrong_clip_dims_rejected():
    enc, _ = encoder_for(ModelConfig.tiny())
    with pytest.raises(ValueError):
        enc(np.zeros((1, 16, 30, 32)))


def test_lstm_cell_matches_hand_arithmetic():
    rng = np.random.default_rng(4)
    x, h, c = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
    wx, wh, b = rng.normal(size=(8, 3)), rng.normal(size=(8, 2)), rng.normal(size=8)
    h_new, c_new = lstm_step(Tensor((wx @ x + b)[None]), Tensor(h[None]), Tensor(c[None]), Tensor(wh))
    h_ref, c_ref = lstm_cell_by_hand(x, h, c, wx, wh, b)
    np.testing.assert_allclose(h_new.data[0], h_ref, atol=1e-10)
    np.testing.assert_allclose(c_new.data[0], c_ref, atol=1e-10)


def test_bilstm_single_frame_both_directions_agree():
    cfg = ModelConfig.tiny(encoder="bilstm", frames=1, dtype="f64")
    enc, _ = encoder_for(cfg)
    for t_fwd, t_bwd in zip(enc.directions["fwd"], enc.directions["bwd"]):
        t_bwd.data = t_fwd.data.copy()
    clip = np.random.default_rng(1).uniform(0, 1, (1, 1, 32, 32))
    seq = enc.frames(Tensor(clip))
    h_f = enc.run(seq, *enc.directions["fwd"], reverse=False)
    h_b = enc.run(seq, *enc.directions["bwd"], reverse=True)
    np.testing.assert_array_equal(h_f.data, h_b.data)
    np.testing.assert_array_equal(enc(clip).data, enc(clip).data)


def test_gradient_through_three_step_lstm():
    cfg = ModelConfig(encoder="bilstm", frames=3, spatial=(9, 9), channel_widths=(2, 2), feature_dim=3, hidden_dim=2, dtype="f64")
    enc, store = encoder_for(cfg, seed=5)
    clip = np.random.default_rng(6).uniform(0, 1, (2, 3, 9, 9))
    for name, t in store.tensors.items():
        if name.endswith(".bias"):
            t.data = np.full(t.shape, 0.05)
    report = grad_check(lambda: (enc(clip) ** 2).sum(), store.tensors)
    assert report.passed, report.lines()


def test_nonlocal_attention_rows_sum_to_one():
    cfg = ModelConfig.tiny(encoder="nonlocal")
    enc, _ = encoder_for(cfg)
    keep = {}
    with no_grad():
        enc(np.random.default_rng(2).uniform(0, 1, (3, 16, 32, 32)), keep=keep)
    assert keep["attention"].shape == (3, 16, 16)
    np.testing.assert_allclose(keep["attention"].sum(axis=-1), 1.0, atol=1e-6)


def test_nonlocal_identical_frames_attend_uniformly():
    cfg = ModelConfig.tiny(encoder="nonlocal", dtype="f64")
    enc, _ = encoder_for(cfg)
    frame = np.random.default_rng(3).uniform(0, 1, (32, 32))
    keep = {}
    with no_grad():
        enc(np.broadcast_to(frame, (1, 16, 32, 32)).copy(), keep=keep)
    np.testing.assert_allclose(keep["attention"], 1 / 16, atol=1e-12)


def test_nonlocal_two_frame_attention_by_hand():
    cfg = ModelConfig(encoder="nonlocal", frames=2, spatial=(7, 7), channel_widths=(2, 2), hidden_dim=4, dtype="f64")
    enc, _ = encoder_for(cfg, seed=7)
    x = np.random.default_rng(8).normal(size=(1, 2, 4))
    attn = enc.attention(Tensor(x)).data[0]
    (wt, bt), (wp, bp) = [(w.data, b.data) for w, b in (enc.theta, enc.phi)]
    th = [wt @ x[0, i] + bt for i in range(2)]
    ph = [wp @ x[0, j] + bp for j in range(2)]
    for i in range(2):
        s = [float(np.dot(th[i], ph[j])) / math.sqrt(2) for j in range(2)]
        denom = math.exp(s[0]) + math.exp(s[1])
        for j in range(2):
            assert abs(attn[i, j] - math.exp(s[j]) / denom) < 1e-10


# -- fusion head and full model ---------------------------------------------
def test_fusion_dims_at_full_scale():
    model = ScreeningModel(ModelConfig.full())
    shapes = [(w.shape, b.shape) for w, b in model.head.layers]
    assert shapes == [((1024, 2660), (1024,)), ((256, 1024), (256,)), ((1, 256), (1,))]
    assert ModelConfig.full().question_dim == 133


def test_zero_final_layer_gives_half():
    model = ScreeningModel(ModelConfig.tiny())
    w, b = model.head.layers[-1]
    w.data[:] = 0
    p = model.predict_proba(small_batch())
    np.testing.assert_array_equal(p, [0.5, 0.5])
    assert decide_all(p).tolist() == [0, 0]


def test_p_monotone_in_logit_and_decision_flips_at_zero():
    model = ScreeningModel(ModelConfig.tiny(encoder="none"))
    w, b = model.head.layers[-1]
    w.data[:] = 0
    batch = small_batch(1)
    ps = []
    for bias in np.linspace(-3, 3, 13):
        b.data[:] = bias
        ps.append(float(model.predict_proba(batch)[0]))
        assert decide(ps[-1]) == int(bias > 0)
    assert all(a < c for a, c in zip(ps, ps[1:]))


def test_wrong_question_count_rejected():
    model = ScreeningModel(ModelConfig.tiny(encoder="none"))
    with pytest.raises(ValueError):
        model.head.logit(Tensor(np.zeros((1, 19, 37), dtype=np.float32)))
    video = Tensor(np.zeros((1, 19, 32), dtype=np.float32))
    with pytest.raises(ValueError):
        model.head.question_features(video, np.ones((1, 19), dtype=int), np.ones((1, 19)))


def test_video_only_zeroes_answer_and_time_slots():
    model = ScreeningModel(ModelConfig.tiny(use_sds=False, use_time=False))
    batch = small_batch()
    video = Tensor(np.ones((2, 20, 32), dtype=np.float32))
    q = model.head.question_features(video, batch.answers, batch.times).data
    assert q.shape == (2, 20, 37)
    assert not q[..., 32:].any()
    full = ScreeningModel(ModelConfig.tiny()).head.question_features(video, batch.answers, batch.times).data
    np.testing.assert_array_equal(full[..., 32:36].sum(-1), 1.0)
    np.testing.assert_allclose(full[..., 36], batch.times, rtol=1e-6)


def test_encoder_weights_shared_across_questions():
    for enc in ("q3dcnn", "bilstm", "nonlocal"):
        model = ScreeningModel(ModelConfig.tiny(encoder=enc, dtype="f64"))
        batch = small_batch(1, dtype=np.float64)
        with no_grad():
            together = model.encode(batch.clips).data[0]
            order = np.random.default_rng(9).permutation(20)
            separate = np.empty_like(together)
            for q in order:
                separate[q] = model.encoder(batch.clips[0, q : q + 1]).data[0]
        np.testing.assert_allclose(separate, together, rtol=1e-12, atol=1e-14)


def test_model_outputs_probabilities_and_is_seeded():
    batch = small_batch()
    p1 = ScreeningModel(ModelConfig.tiny(), seed=4).predict_proba(batch)
    p2 = ScreeningModel(ModelConfig.tiny(), seed=4).predict_proba(batch)
    p3 = ScreeningModel(ModelConfig.tiny(), seed=5).predict_proba(batch)
    assert np.array_equal(p1, p2)
    assert not np.array_equal(p1, p3)
    assert ((p1 > 0) & (p1 < 1)).all()


def test_model_without_clips_needs_no_encoder():
    batch = Batch.from_sessions(generate(GenSpec(n_subjects=2, seed=1)), with_clips=False)
    assert ScreeningModel(ModelConfig.tiny(encoder="none")).predict_proba(batch).shape == (2,)
    with pytest.raises(ValueError):
        ScreeningModel(ModelConfig.tiny()).predict_proba(batch)


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig.tiny(encoder="nonlocal")
    model = ScreeningModel(cfg, seed=11)
    path = tmp_path / "ckpt" / "model.qwt"
    save_checkpoint(model, path, meta={"fold": 2})
    again = load_checkpoint(path)
    assert again.cfg == cfg
    assert list(again.params) == list(model.params)
    for k in model.params:
        assert np.array_equal(again.params[k].data, model.params[k].data)
    batch = small_batch()
    assert np.array_equal(again.predict_proba(batch), model.predict_proba(batch))


def test_load_state_dict_rejects_mismatch():
    model = ScreeningModel(ModelConfig.tiny(encoder="none"))
    state = model.state_dict()
    state.pop("fusion.fc1.bias")
    with pytest.raises(ValueError, match="missing"):
        model.load_state_dict(state)


# -- baselines -------------------------------------------------------------
@pytest.mark.parametrize(
    "answers,expected",
    [([4] * 20, 1), ([1] * 20, 0), ([2] * 10 + [3] * 9 + [2], 0), ([2] * 10 + [3] * 10, 1)],
)
def test_sds_sum_baseline(answers, expected):
    assert sds_sum_baseline(answers) == expected


def test_sds_sum_baseline_errors():
    with pytest.raises(ValueError):
        sds_sum_baseline([5] + [1] * 19)
    with pytest.raises(ValueError):
        sds_sum_baseline([2] * 19)


@pytest.mark.parametrize("p,expected", [(0.7, 1), (0.3, 0), (0.5, 0)])
def test_decide(p, expected):
    assert decide(p) == expected
    assert decide(sigmoid(Tensor(np.array(math.log(p / (1 - p))))).item()) == expected

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ecpe.neural import (
    AdditiveAttention,
    BiLSTM,
    NumericError,
    OptimizerState,
    adam_step,
    attention_pool,
    bilstm_forward,
    cross_entropy,
    dropout,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    softmax_head,
    uniform_,
)

F64 = torch.float64


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


# --- scalar reference oracles (plain python floats, no torch) ----------------


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def ref_lstm_direction(xs, w_ih, w_hh, b):
    """Naive per-gate LSTM over a list of input vectors (gate order i, f, g, o)."""
    hidden = len(w_hh[0])
    h = [0.0] * hidden
    c = [0.0] * hidden
    out = []
    for x in xs:
        pre = [
            sum(w_ih[r][k] * x[k] for k in range(len(x)))
            + sum(w_hh[r][k] * h[k] for k in range(hidden))
            + b[r]
            for r in range(4 * hidden)
        ]
        i = [_sig(pre[j]) for j in range(hidden)]
        f = [_sig(pre[hidden + j]) for j in range(hidden)]
        g = [math.tanh(pre[2 * hidden + j]) for j in range(hidden)]
        o = [_sig(pre[3 * hidden + j]) for j in range(hidden)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(hidden)]
        h = [o[j] * math.tanh(c[j]) for j in range(hidden)]
        out.append(h)
    return out


def ref_bilstm(xs, valid_len, p):
    xs = xs[:valid_len]
    fwd = ref_lstm_direction(xs, p.w_ih_f.tolist(), p.w_hh_f.tolist(), p.b_f.tolist())
    bwd = ref_lstm_direction(xs[::-1], p.w_ih_b.tolist(), p.w_hh_b.tolist(), p.b_b.tolist())[::-1]
    return [f + b for f, b in zip(fwd, bwd)]


def ref_attention(hs, valid_len, w, b, u):
    scores = []
    for h in hs[:valid_len]:
        proj = [math.tanh(sum(w[r][k] * h[k] for k in range(len(h))) + b[r]) for r in range(len(w))]
        scores.append(sum(u[r] * proj[r] for r in range(len(u))))
    mx = max(scores)
    ex = [math.exp(s - mx) for s in scores]
    alpha = [e / sum(ex) for e in ex]
    return [sum(alpha[t] * hs[t][k] for t in range(valid_len)) for k in range(len(hs[0]))], alpha


def big_init(module, seed=0, scale=0.5):
    g = gen(seed)
    for p in module.parameters():
        uniform_(p, g, scale)
    return module


# --- bilstm -----------------------------------------------------------------


def test_bilstm_zero_fixed_point():
    lstm = BiLSTM(3, 4, gen(), F64)
    with torch.no_grad():
        for p in lstm.parameters():
            p.zero_()
    out = bilstm_forward(torch.zeros(5, 3, dtype=F64), 5, lstm)
    assert out.shape == (5, 8)
    assert torch.all(out == 0)


def test_bilstm_single_step():
    lstm = big_init(BiLSTM(3, 2, gen(), F64))
    x = torch.randn(1, 3, dtype=F64, generator=gen(1))
    out = bilstm_forward(x, 1, lstm)
    expect = ref_bilstm(x.tolist(), 1, lstm)
    np.testing.assert_allclose(out.detach().numpy(), expect, atol=1e-12)


def test_bilstm_matches_scalar_reference():
    lstm = big_init(BiLSTM(4, 3, gen(), F64), seed=2)
    x = torch.randn(3, 4, dtype=F64, generator=gen(3))
    out = bilstm_forward(x, 3, lstm).detach().numpy()
    np.testing.assert_allclose(out, ref_bilstm(x.tolist(), 3, lstm), atol=1e-10, rtol=0)


def test_bilstm_batched_with_padding_matches_reference():
    lstm = big_init(BiLSTM(2, 3, gen(), F64), seed=4)
    x = torch.randn(3, 5, 2, dtype=F64, generator=gen(5))
    lengths = [5, 2, 3]
    out = bilstm_forward(x, lengths, lstm).detach().numpy()
    for b, n in enumerate(lengths):
        np.testing.assert_allclose(out[b, :n], ref_bilstm(x[b].tolist(), n, lstm), atol=1e-10)
        assert np.all(out[b, n:] == 0)


def test_bilstm_ignores_padded_positions():
    lstm = big_init(BiLSTM(2, 3, gen(), F64), seed=6)
    x = torch.randn(1, 6, 2, dtype=F64, generator=gen(7))
    y = x.clone()
    y[0, 4:] = 100.0
    a = bilstm_forward(x, [4], lstm)
    b = bilstm_forward(y, [4], lstm)
    assert torch.equal(a, b)


def test_bilstm_empty_sequence_error():
    lstm = BiLSTM(2, 3, gen(), F64)
    with pytest.raises(ValueError, match="empty"):
        bilstm_forward(torch.zeros(1, 3, 2, dtype=F64), [0], lstm)


def test_bilstm_init_range():
    lstm = BiLSTM(5, 4, gen(), F64)
    for p in lstm.parameters():
        assert p.abs().max() <= 0.01


# --- attention --------------------------------------------------------------


def test_attention_single_position():
    att = big_init(AdditiveAttention(4, 3, gen(), F64))
    h = torch.randn(5, 4, dtype=F64, generator=gen(1))
    s, alpha = attention_pool(h, 1, att, return_weights=True)
    assert torch.equal(s, h[0])
    assert alpha[0] == 1.0 and torch.all(alpha[1:] == 0)


def test_attention_identical_states():
    att = big_init(AdditiveAttention(4, 3, gen(), F64))
    h = torch.randn(4, dtype=F64, generator=gen(2)).repeat(6, 1)
    s = attention_pool(h, 6, att)
    torch.testing.assert_close(s, h[0], atol=1e-14, rtol=0)


def test_attention_matches_brute_force():
    att = big_init(AdditiveAttention(4, 3, gen(), F64), seed=3)
    h = torch.randn(6, 4, dtype=F64, generator=gen(4))
    s, alpha = attention_pool(h, 4, att, return_weights=True)
    expect_s, expect_alpha = ref_attention(h.tolist(), 4, att.w.tolist(), att.b.tolist(), att.u.tolist())
    np.testing.assert_allclose(s.detach().numpy(), expect_s, atol=1e-10, rtol=0)
    np.testing.assert_allclose(alpha[:4].detach().numpy(), expect_alpha, atol=1e-10, rtol=0)
    assert torch.all(alpha[4:] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 1000))
def test_attention_weights_sum_to_one(n, seed):
    att = big_init(AdditiveAttention(3, 2, gen(), F64), seed=seed)
    h = torch.randn(7, 3, dtype=F64, generator=gen(seed + 1))
    _, alpha = attention_pool(h, n, att, return_weights=True)
    assert abs(alpha.sum().item() - 1.0) < 1e-12
    assert torch.all(alpha[n:] == 0)


# --- softmax head / cross entropy -------------------------------------------


def test_softmax_head_zero():
    p = softmax_head(torch.ones(3, dtype=F64), torch.zeros(2, 3, dtype=F64), torch.zeros(2, dtype=F64))
    assert p.tolist() == [0.5, 0.5]


def test_softmax_head_saturates():
    p = softmax_head(torch.ones(3, dtype=F64), torch.zeros(2, 3, dtype=F64), torch.tensor([0.0, 10.0], dtype=F64))
    assert p[1] > 0.9999


def test_softmax_head_matches_direct_formula():
    g = gen(9)
    r = torch.randn(5, dtype=F64, generator=g)
    w = torch.randn(2, 5, dtype=F64, generator=g)
    b = torch.randn(2, dtype=F64, generator=g)
    z = [sum(w[k, j].item() * r[j].item() for j in range(5)) + b[k].item() for k in range(2)]
    ex = [math.exp(v) for v in z]
    expect = [e / sum(ex) for e in ex]
    np.testing.assert_allclose(softmax_head(r, w, b).numpy(), expect, atol=1e-12, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_softmax_head_is_distribution(vals):
    r = torch.tensor(vals[:2], dtype=F64)
    w = torch.tensor([vals[2:4], vals[4:6]], dtype=F64)
    p = softmax_head(r, w, torch.zeros(2, dtype=F64))
    assert abs(float(p.sum()) - 1.0) < 1e-6
    assert torch.all(p >= 0)


def test_cross_entropy_values():
    assert float(cross_entropy(torch.tensor([0.0, 1.0], dtype=F64), 1)) == 0.0
    for gold in (0, 1):
        assert float(cross_entropy(torch.tensor([0.5, 0.5], dtype=F64), gold)) == pytest.approx(math.log(2))
    clamped = float(cross_entropy(torch.tensor([1.0, 0.0], dtype=F64), 1))
    assert clamped == pytest.approx(-math.log(1e-12))
    batch = cross_entropy(torch.tensor([[0.25, 0.75], [0.9, 0.1]], dtype=F64), [1, 0])
    np.testing.assert_allclose(batch.numpy(), [-math.log(0.75), -math.log(0.9)])


# --- dropout ----------------------------------------------------------------


def test_dropout_identity_outside_training():
    x = torch.randn(4, 5, dtype=F64, generator=gen())
    assert dropout(x, 0.8, gen(1), training=False) is x
    assert dropout(x, 1.0, gen(1), training=True) is x


def test_dropout_keeps_expected_fraction_and_rescales():
    x = torch.ones(200, 100, dtype=F64)
    y = dropout(x, 0.8, gen(3), training=True)
    kept = y != 0
    assert abs(kept.double().mean().item() - 0.8) < 0.01
    assert torch.all(y[kept] == 1.0 / 0.8)
    assert torch.equal(y, dropout(x, 0.8, gen(3), training=True))


# --- adam -------------------------------------------------------------------


def test_adam_zero_gradients_identity():
    p = {"w": torch.randn(3, 2, dtype=F64, generator=gen())}
    before = p["w"].clone()
    state = OptimizerState(l2=0.0)
    for _ in range(3):
        adam_step(p, {"w": torch.zeros(3, 2, dtype=F64)}, state)
    assert torch.equal(p["w"], before)
    assert state.step == 3


def test_adam_single_step_hand_computed():
    lr, b1, b2, eps = 0.005, 0.9, 0.999, 1e-8
    w0 = [0.3, -0.2, 0.0]
    g = [0.5, -2.0, 1e-3]
    p = {"w": torch.tensor(w0, dtype=F64)}
    adam_step(p, {"w": torch.tensor(g, dtype=F64)}, OptimizerState(lr=lr, l2=0.0))
    expect = []
    for w, gi in zip(w0, g):
        m_hat = (1 - b1) * gi / (1 - b1)
        v_hat = (1 - b2) * gi * gi / (1 - b2)
        expect.append(w - lr * m_hat / (math.sqrt(v_hat) + eps))
    np.testing.assert_allclose(p["w"].numpy(), expect, atol=1e-15, rtol=0)
    # first step moves every entry by ~lr against the gradient sign
    np.testing.assert_allclose(np.array(w0) - p["w"].numpy(), lr * np.sign(g), rtol=1e-4)


def test_adam_l2_only_on_listed_params():
    p = {"head": torch.ones(2, dtype=F64), "lstm": torch.ones(2, dtype=F64)}
    zero = {k: torch.zeros(2, dtype=F64) for k in p}
    adam_step(p, zero, OptimizerState(l2=1e-5, l2_scale={"head": 1.0}))
    assert torch.all(p["head"] < 1.0)
    assert torch.equal(p["lstm"], torch.ones(2, dtype=F64))


def test_adam_deterministic():
    def run():
        p = {"w": torch.linspace(-1, 1, 5, dtype=F64)}
        st_ = OptimizerState()
        for k in range(4):
            adam_step(p, {"w": torch.sin(p["w"] * (k + 1))}, st_)
        return p["w"]

    assert torch.equal(run(), run())


def test_adam_rejects_non_finite():
    p = {"cause_head.w": torch.zeros(2, dtype=F64)}
    with pytest.raises(NumericError, match="cause_head.w"):
        adam_step(p, {"cause_head.w": torch.tensor([1.0, float("nan")], dtype=F64)}, OptimizerState())


# --- gradient check ---------------------------------------------------------


def affine_softmax_problem():
    g = gen(11)
    params = {
        "w": torch.randn(2, 4, dtype=F64, generator=g).requires_grad_(),
        "b": torch.randn(2, dtype=F64, generator=g).requires_grad_(),
    }
    x = torch.randn(6, 4, dtype=F64, generator=g)
    y = torch.tensor([0, 1, 1, 0, 1, 0])

    def loss():
        return cross_entropy(softmax_head(x, params["w"], params["b"]), y).mean()

    return loss, params


def test_grad_check_affine_softmax():
    loss, params = affine_softmax_problem()
    result = grad_check(loss, params)
    assert result.max_rel_error < 1e-7, result.per_param


def test_grad_check_detects_corrupted_gradient():
    loss, params = affine_softmax_problem()
    grads = torch.autograd.grad(loss(), list(params.values()))
    analytic = {k: g.clone() for k, g in zip(params, grads)}
    analytic["w"][1, 2] *= 2.0
    result = grad_check(loss, params, analytic=analytic)
    assert result.max_rel_error > 1e-2
    assert result.worst == "w"


def test_grad_check_bilstm_attention_stack():
    lstm = big_init(BiLSTM(3, 2, gen(), F64), seed=12)
    att = big_init(AdditiveAttention(4, 3, gen(), F64), seed=13)
    x = torch.randn(2, 4, 3, dtype=F64, generator=gen(14))
    params = {f"lstm.{k}": v for k, v in lstm.named_parameters()}
    params.update({f"att.{k}": v for k, v in att.named_parameters()})

    def loss():
        return (attention_pool(bilstm_forward(x, [4, 2], lstm), [4, 2], att) ** 2).sum()

    assert grad_check(loss, params).max_rel_error < 1e-4


def test_grad_check_requires_float64():
    p = {"w": torch.zeros(2, requires_grad=True)}
    with pytest.raises(TypeError):
        grad_check(lambda: p["w"].sum(), p)


# --- checkpoints ------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    tensors = {"a.w": torch.randn(3, 2, dtype=F64, generator=gen()), "b": torch.arange(4.0)}
    save_checkpoint(tmp_path / "ck.npz", tensors, {"note": "x", "n": 3})
    loaded, meta = load_checkpoint(tmp_path / "ck.npz")
    assert meta == {"note": "x", "n": 3}
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert torch.equal(loaded[k], tensors[k]) and loaded[k].dtype == tensors[k].dtype


def test_checkpoint_rejects_foreign_file(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.zeros(2))
    with pytest.raises(ValueError, match="not an ecpe checkpoint"):
        load_checkpoint(tmp_path / "x.npz")

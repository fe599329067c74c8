"""Attention variants: invariants, reduction oracles, materialized-mixture
oracles for every expert-flag combination, and structural counter checks."""

from itertools import product

import numpy as np
import pytest

from switchlab.attention import (AttentionConfig, ExpertFlags, LayerCache,
                                 attention_forward, dense_attention,
                                 dense_readout_per_head, head_gated_attention,
                                 init_attention_params, moa_attention,
                                 rope_angles, rope_rotate, sinusoid_table,
                                 switchhead_attention, xl_relative_attention)
from switchlab.counter import OpCounter
from switchlab.moe import ConfigError
from switchlab.rng import rng_for
from switchlab.tensor import Tensor, constant, matmul, mul, transpose, tsum


def rand_x(rng, B, T, dm, grad=False):
    return Tensor(rng.uniform(-1, 1, (B, T, dm)), requires_grad=grad)


DM = 8


def all_variant_cases():
    return {
        "dense_xl": AttentionConfig(DM, 2, 4, variant="dense", context_mult=2),
        "dense_rope": AttentionConfig(DM, 2, 4, variant="dense", position="rope"),
        "head_gated": AttentionConfig(DM, 3, 4, variant="head_gated", k_active=2),
        "switchhead": AttentionConfig(DM, 2, 4, variant="switchhead",
                                      n_experts=3, k_active=2, context_mult=2,
                                      expert_flags=ExpertFlags.value_output()),
        "moa": AttentionConfig(DM, 2, 4, variant="moa", n_experts=4,
                               k_active=2, context_mult=2),
    }


# -- config validation -----------------------------------------------------


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        AttentionConfig(8, 2, 4, variant="nope").validate()
    with pytest.raises(ConfigError):
        AttentionConfig(8, 2, 4, position="rope", context_mult=2).validate()
    with pytest.raises(ConfigError):
        AttentionConfig(8, 2, 3, position="rope").validate()
    with pytest.raises(ConfigError):  # dense with experts
        AttentionConfig(8, 2, 4, variant="dense", n_experts=2).validate()
    with pytest.raises(ConfigError):  # switchhead E>1 without flags
        AttentionConfig(8, 2, 4, variant="switchhead", n_experts=3,
                        k_active=2).validate()
    with pytest.raises(ConfigError):  # k > E
        AttentionConfig(8, 2, 4, variant="switchhead", n_experts=2, k_active=3,
                        expert_flags=ExpertFlags.value_output()).validate()
    with pytest.raises(ConfigError):  # moa heads must equal k_active
        AttentionConfig(8, 3, 4, variant="moa", n_experts=4, k_active=2).validate()


def test_scale_default_d_model():
    cfg = AttentionConfig(16, 2, 4)
    assert cfg.scale() == pytest.approx(1 / 4.0)
    assert AttentionConfig(16, 2, 4, scale_by_d_head=True).scale() == pytest.approx(0.5)


# -- softmax-row and causal invariants ------------------------------------


@pytest.mark.parametrize("name", list(all_variant_cases()))
def test_rows_sum_to_one_and_causal_zeros(name):
    cfg = all_variant_cases()[name]
    rng = rng_for(0, "rows", name)
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 2, 5, DM)
    _, trace, _ = attention_forward(x, params, cfg, want_trace=True)
    attn = trace.attn
    assert np.allclose(attn.sum(-1), 1.0, atol=1e-9)
    T = attn.shape[-2]
    upper = np.triu(np.ones((T, T)), k=1).astype(bool)
    assert np.all(attn[..., upper] == 0.0)


def test_noncausal_has_full_rows():
    cfg = AttentionConfig(DM, 2, 4, variant="dense", causal=False)
    rng = rng_for(1, "noncausal")
    params = init_attention_params(cfg, rng)
    _, trace, _ = attention_forward(rand_x(rng, 1, 4, DM), params, cfg,
                                    want_trace=True)
    assert np.all(trace.attn > 0)


def test_key_mask_zeroes_padded_columns():
    cfg = AttentionConfig(DM, 2, 4, variant="dense", causal=False)
    rng = rng_for(2, "mask")
    params = init_attention_params(cfg, rng)
    mask = np.array([[True, True, False, False]])
    _, trace, _ = attention_forward(rand_x(rng, 1, 4, DM), params, cfg,
                                    key_mask=mask, want_trace=True)
    assert np.all(trace.attn[..., 2:] == 0.0)
    assert np.allclose(trace.attn.sum(-1), 1.0)


# -- reduction oracles -----------------------------------------------------


def _dense_params_from_switchhead(sh_params, cfg):
    """Fuse per-head (E=1) switchhead weights into the dense layout."""
    H, dh, dm = cfg.n_heads, cfg.d_head, cfg.d_model
    out = {}
    for role in ("k", "q", "v"):
        w = sh_params[f"w_{role}"].data
        w = w.reshape(H, dm, dh)            # drop E=1 if present
        out[f"w_{role}"] = Tensor(np.concatenate(list(w), axis=1))
    w_o = sh_params["w_o"].data.reshape(H, dh, dm)
    out["w_o"] = Tensor(np.concatenate(list(w_o), axis=0))
    return out


@pytest.mark.parametrize("position", ["none", "rope"])
def test_switchhead_e1_forced_gate_equals_dense(position):
    cfg = AttentionConfig(DM, 2, 4, variant="switchhead", position=position,
                          n_experts=1, k_active=1,
                          expert_flags=ExpertFlags(v=True, k=True, q=True, o=True))
    rng = rng_for(3, "reduce", position)
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 1, 5, DM)
    y_sh, _, _ = switchhead_attention(x, params, cfg, gate_override=1.0)
    dcfg = AttentionConfig(DM, 2, 4, variant="dense", position=position)
    y_d, _ = dense_attention(x, _dense_params_from_switchhead(params, cfg), dcfg)
    assert np.max(np.abs(y_sh.data - y_d.data)) < 1e-12


def test_switchhead_e1_xl_single_head_equals_dense():
    # H=1 so the shared and per-head position projections coincide
    cfg = AttentionConfig(DM, 1, 4, variant="switchhead", context_mult=2,
                          n_experts=1, k_active=1,
                          expert_flags=ExpertFlags(v=True, k=True, q=True, o=True))
    rng = rng_for(4, "reduce-xl")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 1, 5, DM)
    y_sh, _, _ = switchhead_attention(x, params, cfg, gate_override=1.0)
    dcfg = AttentionConfig(DM, 1, 4, variant="dense", context_mult=2)
    dparams = _dense_params_from_switchhead(params, cfg)
    dparams["w_r"] = Tensor(params["w_r"].data.copy())
    dparams["u"] = Tensor(params["u"].data.copy())
    dparams["v"] = Tensor(params["v"].data.copy())
    y_d, _, _ = attention_forward(x, dparams, dcfg)
    assert np.max(np.abs(y_sh.data - y_d.data)) < 1e-12


def test_head_gated_all_heads_forced_equals_dense():
    H = 3
    cfg = AttentionConfig(DM, H, 4, variant="head_gated", k_active=H,
                          context_mult=2)
    rng = rng_for(5, "hg")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 2, 4, DM)
    y_hg, _ = head_gated_attention(x, params, cfg, gate_override=1.0)
    dcfg = AttentionConfig(DM, H, 4, variant="dense", context_mult=2)
    dparams = {k: v for k, v in params.items() if k != "w_gate"}
    y_d, _ = dense_attention(x, dparams, dcfg)
    assert np.max(np.abs(y_hg.data - y_d.data)) < 1e-12


def test_head_gated_saturated_gate_picks_single_head():
    cfg = AttentionConfig(DM, 2, 4, variant="head_gated", k_active=1)
    rng = rng_for(6, "hg-sat")
    params = init_attention_params(cfg, rng)
    params["w_gate"].data[:, 0] = 50.0     # head 0 logit >> head 1
    params["w_gate"].data[:, 1] = -50.0
    x = Tensor(np.abs(rng.uniform(0.1, 1, (1, 3, DM))))
    y, trace = head_gated_attention(x, params, cfg, want_trace=True)
    idx, w = trace.selections["heads"]
    assert np.all(idx == 0)
    assert np.all(w > 1 - 1e-6)


def test_dense_readout_forms_agree():
    # concatenated-matrix readout vs explicit per-head summation
    cfg = AttentionConfig(DM, 3, 4, variant="dense", context_mult=2)
    rng = rng_for(7, "readout")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 2, 4, DM)
    y, trace, _ = attention_forward(x, params, cfg, want_trace=True)
    H, dh = cfg.n_heads, cfg.d_head
    v = (x.data @ params["w_v"].data).reshape(2, 4, H, dh).transpose(0, 2, 1, 3)
    av = Tensor(trace.attn @ v)
    y2 = dense_readout_per_head(av, params["w_o"], H, dh)
    assert np.max(np.abs(y.data - y2.data)) < 1e-10


# -- materialized-mixture oracle over all 16 flag combinations -------------


def _numpy_switchhead(x, params, cfg):
    """Independent loop implementation with materialized mixed projections."""
    B, T, dm = x.shape
    H, dh, E, k = cfg.n_heads, cfg.d_head, cfg.n_experts, cfg.k_active
    f = cfg.expert_flags
    scale = cfg.scale()

    def selection(w_name):
        sels = []
        for h in range(H):
            logits = x @ params[w_name].data[h]          # [B, T, E]
            idx = np.stack([
                np.array(sorted(range(E), key=lambda e: (-logits[b, t, e], e))[:k])
                for b in range(B) for t in range(T)]).reshape(B, T, k)
            idx.sort(axis=-1)
            gates = 1 / (1 + np.exp(-logits))
            w = np.take_along_axis(gates, idx, -1)
            sels.append((idx, w))
        return sels

    sel_s = selection("w_s") if (f.v or f.k) else None
    sel_d = selection("w_d") if (f.q or f.o) else None
    y = np.zeros((B, T, dm))
    for h in range(H):
        def project(role, flag, sel, src, din, dout):
            w = params[f"w_{role}"].data
            if not flag:
                return src @ w[h]
            idx, wts = sel[h]
            out = np.zeros(src.shape[:-1] + (dout,))
            for b in range(B):
                for t in range(T):
                    mixed = np.zeros((din, dout))
                    for slot in range(k):
                        mixed += wts[b, t, slot] * w[h, idx[b, t, slot]]
                    out[b, t] = src[b, t] @ mixed
            return out

        kk = project("k", f.k, sel_s, x, dm, dh)
        qq = project("q", f.q, sel_d, x, dm, dh)
        vv = project("v", f.v, sel_s, x, dm, dh)
        scores = np.einsum("btd,bsd->bts", qq, kk) * scale
        mask = np.triu(np.ones((T, T)), k=1).astype(bool)
        scores[:, mask] = -1e30
        attn = np.exp(scores - scores.max(-1, keepdims=True))
        attn /= attn.sum(-1, keepdims=True)
        av = attn @ vv
        y += project("o", f.o, sel_d, av, dh, dm)
    return y


@pytest.mark.parametrize("flags", list(product([False, True], repeat=4)))
def test_switchhead_all_flag_combos_match_oracle(flags):
    v, k, q, o = flags
    f = ExpertFlags(v=v, k=k, q=q, o=o)
    E = 3 if f.any() else 1
    K = 2 if f.any() else 1
    cfg = AttentionConfig(DM, 2, 4, variant="switchhead", position="none",
                          n_experts=E, k_active=K, expert_flags=f)
    rng = rng_for(hash(flags) % 1000, "combo")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 2, 4, DM)
    y, _, _ = switchhead_attention(x, params, cfg)
    oracle = _numpy_switchhead(x.data, params, cfg)
    assert np.max(np.abs(y.data - oracle)) < 1e-10


# -- MoA oracles -----------------------------------------------------------


def test_moa_single_expert_is_gated_dense_head():
    cfg = AttentionConfig(DM, 1, 4, variant="moa", position="none",
                          n_experts=1, k_active=1)
    rng = rng_for(9, "moa1")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 1, 4, DM)
    y, trace, _ = moa_attention(x, params, cfg, want_trace=True)
    gate = trace.selections["router"][1][..., 0]
    kk = x.data @ params["w_k"].data
    qq = x.data @ params["w_q"].data[0]
    vv = x.data @ params["w_v"].data
    scores = np.einsum("btd,bsd->bts", qq, kk) * cfg.scale()
    scores[:, np.triu(np.ones((4, 4)), 1).astype(bool)] = -1e30
    attn = np.exp(scores - scores.max(-1, keepdims=True))
    attn /= attn.sum(-1, keepdims=True)
    want = (attn @ vv) @ params["w_o"].data[0] * gate[..., None]
    assert np.max(np.abs(y.data - want)) < 1e-12


def test_moa_matches_all_experts_oracle():
    cfg = AttentionConfig(DM, 2, 4, variant="moa", position="none",
                          n_experts=4, k_active=2)
    rng = rng_for(10, "moa")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 2, 4, DM)
    y, trace, _ = moa_attention(x, params, cfg, want_trace=True)
    idx, wts = trace.selections["router"]
    B, T = 2, 4
    kk = x.data @ params["w_k"].data
    vv = x.data @ params["w_v"].data
    causal = np.triu(np.ones((T, T)), 1).astype(bool)
    want = np.zeros((B, T, DM))
    for e in range(4):                       # dense all-experts computation
        qq = x.data @ params["w_q"].data[e]
        scores = np.einsum("btd,bsd->bts", qq, kk) * cfg.scale()
        scores[:, causal] = -1e30
        attn = np.exp(scores - scores.max(-1, keepdims=True))
        attn /= attn.sum(-1, keepdims=True)
        o = (attn @ vv) @ params["w_o"].data[e]
        # router masking: contribute only where expert e was selected
        hit = (idx == e)
        weight = (wts.data * hit).sum(-1)
        want += o * weight[..., None]
    assert np.max(np.abs(y.data - want)) < 1e-10


# -- structural sparsity via counters -------------------------------------


def test_switchhead_score_matrix_count_independent_of_experts():
    rng = rng_for(11, "struct")
    x = rand_x(rng, 1, 4, DM)
    for E, K in [(1, 1), (3, 1), (3, 2), (5, 5)]:
        cfg = AttentionConfig(DM, 2, 4, variant="switchhead", position="none",
                              n_experts=E, k_active=K,
                              expert_flags=ExpertFlags.value_output() if E > 1
                              else ExpertFlags(v=True, o=True))
        params = init_attention_params(cfg, rng)
        c = OpCounter()
        attention_forward(x, params, cfg, c)
        assert c.score_matrices == cfg.n_heads


def test_moa_score_matrix_count_is_k_active():
    rng = rng_for(12, "struct-moa")
    x = rand_x(rng, 1, 4, DM)
    for E, K in [(4, 1), (4, 2), (6, 3)]:
        cfg = AttentionConfig(DM, K, 4, variant="moa", position="none",
                              n_experts=E, k_active=K)
        params = init_attention_params(cfg, rng)
        c = OpCounter()
        attention_forward(x, params, cfg, c)
        assert c.score_matrices == K


# -- position machinery ----------------------------------------------------


def test_rope_identity_at_position_zero():
    rng = rng_for(13, "rope0")
    x = Tensor(rng.uniform(-1, 1, (1, 1, 4)))
    cos, sin = rope_angles(1, 4)
    out = rope_rotate(x, cos, sin)
    assert np.allclose(out.data, x.data, atol=1e-15)


def test_rope_scores_depend_only_on_relative_offset():
    rng = rng_for(14, "rope-rel")
    dh, T, shift = 8, 6, 5
    q = rng.uniform(-1, 1, (1, T, dh))
    k = rng.uniform(-1, 1, (1, T, dh))
    cos, sin = rope_angles(T + shift, dh)

    def scores(offset):
        qr = rope_rotate(Tensor(q), cos[offset:offset + T], sin[offset:offset + T])
        kr = rope_rotate(Tensor(k), cos[offset:offset + T], sin[offset:offset + T])
        return qr.data @ kr.data.transpose(0, 2, 1)

    assert np.max(np.abs(scores(0) - scores(shift))) < 1e-10


def test_sinusoid_table_shape_and_symmetry():
    tab = sinusoid_table(10, DM, offset=4)
    assert tab.shape == (10, DM)
    # distance 0 row: sin components 0, cos components 1
    assert np.allclose(tab[4, 0::2], 0.0)
    assert np.allclose(tab[4, 1::2], 1.0)


# -- XL cache behaviour ----------------------------------------------------


def test_two_chunk_rows_cover_both_chunks():
    cfg = AttentionConfig(DM, 2, 4, variant="dense", context_mult=2)
    rng = rng_for(15, "chunks")
    params = init_attention_params(cfg, rng)
    x1, x2 = rand_x(rng, 1, 3, DM), rand_x(rng, 1, 3, DM)
    _, _, cache = xl_relative_attention(x1, None, params, cfg)
    assert cache.k.shape == (1, 2, 3, 4)
    _, trace, _ = xl_relative_attention(x2, cache, params, cfg, want_trace=True)
    assert trace.attn.shape[-1] == 6
    assert np.allclose(trace.attn.sum(-1), 1.0, atol=1e-9)
    assert np.all(trace.attn[..., :4] > 0)   # attends into the cached chunk


def test_chunked_equals_full_window():
    # queries of the second chunk see the same sources and distances either way
    cfg = AttentionConfig(DM, 2, 4, variant="dense", context_mult=2)
    rng = rng_for(16, "window")
    params = init_attention_params(cfg, rng)
    T = 4
    x_full = rand_x(rng, 1, 2 * T, DM)
    x1 = Tensor(x_full.data[:, :T])
    x2 = Tensor(x_full.data[:, T:])
    _, _, cache = xl_relative_attention(x1, None, params, cfg)
    y_chunk, _, _ = xl_relative_attention(x2, cache, params, cfg)
    full_cfg = AttentionConfig(DM, 2, 4, variant="dense", context_mult=1)
    y_full, _, _ = attention_forward(x_full, params, full_cfg)
    assert np.max(np.abs(y_chunk.data - y_full.data[:, T:])) < 1e-8


def test_cache_fifo_keeps_last_chunks():
    cfg = AttentionConfig(DM, 2, 4, variant="dense", context_mult=3)
    rng = rng_for(17, "fifo")
    params = init_attention_params(cfg, rng)
    cache = None
    ks = []
    for _ in range(4):
        x = rand_x(rng, 1, 2, DM)
        _, _, cache = xl_relative_attention(x, cache, params, cfg)
        ks.append((x.data @ params["w_k"].data).reshape(1, 2, 2, 4).transpose(0, 2, 1, 3))
    want = np.concatenate(ks[-2:], axis=2)   # last C-1 = 2 chunks
    assert np.allclose(cache.k, want, atol=1e-15)


def test_cache_with_context_mult_one_rejected():
    cfg = AttentionConfig(DM, 2, 4, variant="dense", context_mult=1)
    rng = rng_for(18, "c1")
    params = init_attention_params(cfg, rng)
    cache = LayerCache(k=np.zeros((1, 2, 2, 4)), v=np.zeros((1, 2, 2, 4)))
    with pytest.raises(ConfigError):
        attention_forward(rand_x(rng, 1, 2, DM), params, cfg, cache=cache)


# -- invariances -----------------------------------------------------------


def test_batch_invariance():
    for name, cfg in all_variant_cases().items():
        rng = rng_for(19, "batch", name)
        params = init_attention_params(cfg, rng)
        xa, xb = rand_x(rng, 1, 4, DM), rand_x(rng, 1, 4, DM)
        both = Tensor(np.concatenate([xa.data, xb.data], axis=0))
        y_both, _, _ = attention_forward(both, params, cfg)
        ya, _, _ = attention_forward(xa, params, cfg)
        yb, _, _ = attention_forward(xb, params, cfg)
        sep = np.concatenate([ya.data, yb.data], axis=0)
        assert np.max(np.abs(y_both.data - sep)) < 1e-12, name


def test_switchhead_expert_permutation_invariance():
    cfg = AttentionConfig(DM, 2, 4, variant="switchhead", position="none",
                          n_experts=4, k_active=2,
                          expert_flags=ExpertFlags.value_output())
    rng = rng_for(20, "perm")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 1, 5, DM)
    y1, _, _ = switchhead_attention(x, params, cfg)
    perm = np.array([2, 0, 3, 1])
    p2 = {k: Tensor(v.data.copy()) for k, v in params.items()}
    p2["w_v"] = Tensor(params["w_v"].data[:, perm])
    p2["w_o"] = Tensor(params["w_o"].data[:, perm])
    p2["w_s"] = Tensor(params["w_s"].data[:, :, perm])
    p2["w_d"] = Tensor(params["w_d"].data[:, :, perm])
    y2, _, _ = switchhead_attention(x, p2, cfg)
    assert np.max(np.abs(y1.data - y2.data)) < 1e-12


def test_selection_matrices_receive_gradients():
    cfg = AttentionConfig(DM, 2, 4, variant="switchhead", context_mult=2,
                          n_experts=3, k_active=2,
                          expert_flags=ExpertFlags.value_output())
    rng = rng_for(21, "selgrad")
    params = init_attention_params(cfg, rng)
    x = rand_x(rng, 1, 4, DM, grad=True)
    y, _, _ = switchhead_attention(x, params, cfg)
    tsum(mul(y, constant(rng.uniform(-1, 1, y.shape)))).backward()
    assert params["w_s"].grad is not None and np.any(params["w_s"].grad != 0)
    assert params["w_d"].grad is not None and np.any(params["w_d"].grad != 0)


def test_trace_shapes():
    cfg = all_variant_cases()["switchhead"]
    rng = rng_for(22, "trace")
    params = init_attention_params(cfg, rng)
    _, trace, _ = attention_forward(rand_x(rng, 1, 4, DM), params, cfg,
                                    want_trace=True)
    assert trace.attn.shape == (1, 2, 4, 4)
    assert len(trace.selections["source"]) == 2
    assert all(w.shape == (1, 4, 2) for _, w in trace.selections["source"])
    assert np.all((trace.selections["source"][0][1] >= 0)
                  & (trace.selections["source"][0][1] <= 1))

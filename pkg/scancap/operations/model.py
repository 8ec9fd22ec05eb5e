"""Selective-scan language model over a visual prefix.

Each block is

    y = x + OutProj( scan( SiLU( CausalConv(stream) ) ) * SiLU(gate) ),
    (stream, gate) = InProj( RMSNorm(x) )

Training evaluates whole sequences in parallel; decoding carries one conv
window and one scan state per block and consumes a single token per step.
"""

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import log_softmax

from scancap.operations.errors import InputError, NumericRangeError, ShapeError
from scancap.operations.layers import (
    causal_conv_backward,
    causal_conv_forward,
    causal_conv_step,
    embed_backward,
    embed_forward,
    linear_backward,
    linear_forward,
    rmsnorm,
    rmsnorm_backward,
    rmsnorm_forward,
    silu,
    silu_backward,
    silu_forward,
)
from scancap.operations.records import Record, expect
from scancap.operations.selective import (
    SelectiveSSMLayer,
    init_selective_layer,
    selective_scan_backward,
    selective_scan_forward,
    selective_step,
    zeros_like_layer,
)
from scancap.operations.tokenizer import EOS, TokenSequence


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    layers: int = Field(2, ge=1)
    d: int = Field(64, ge=1)
    expand: int = Field(2, ge=1)
    conv_width: int = Field(4, ge=1)
    state_dim: int = Field(16, ge=1)


@dataclass
class MambaBlockParams:
    norm: np.ndarray  # (d,)
    in_W: np.ndarray  # (d, 2 E d)
    conv_w: np.ndarray  # (k_conv, E d)
    conv_b: np.ndarray  # (E d,)
    ssm: SelectiveSSMLayer
    out_W: np.ndarray  # (E d, d)

    @property
    def inner(self) -> int:
        return self.conv_w.shape[1]


@dataclass
class ModelParams:
    embedding: np.ndarray  # (|V|, d); also the output head
    blocks: list[MambaBlockParams] = field(default_factory=list)
    final_norm: np.ndarray | None = None

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def d(self) -> int:
        return self.embedding.shape[1]


@dataclass
class BlockState:
    window: np.ndarray  # (..., k_conv, E d)
    h: np.ndarray  # (..., E d, Q)


@dataclass
class DecodeState:
    blocks: list[BlockState]

    def element_count(self) -> int:
        """Carried elements per sequence."""
        return sum(
            s.window.shape[-2] * s.window.shape[-1] + s.h.shape[-2] * s.h.shape[-1]
            for s in self.blocks
        )


def init_block_params(
    config: ModelConfig, rng: np.random.Generator, dtype=np.float64
) -> MambaBlockParams:
    d, inner, k = config.d, config.expand * config.d, config.conv_width
    return MambaBlockParams(
        norm=np.ones(d, dtype=dtype),
        in_W=(rng.uniform(-1, 1, size=(d, 2 * inner)) / np.sqrt(d)).astype(dtype),
        conv_w=(rng.uniform(-1, 1, size=(k, inner)) / np.sqrt(k)).astype(dtype),
        conv_b=np.zeros(inner, dtype=dtype),
        ssm=init_selective_layer(inner, config.state_dim, rng, dtype),
        out_W=(rng.uniform(-1, 1, size=(inner, d)) / np.sqrt(inner)).astype(dtype),
    )


def init_model_params(
    config: ModelConfig, vocab_size: int, rng: np.random.Generator, dtype=np.float64
) -> ModelParams:
    return ModelParams(
        embedding=rng.normal(0.0, 1.0 / np.sqrt(config.d), size=(vocab_size, config.d)).astype(
            dtype
        ),
        blocks=[init_block_params(config, rng, dtype) for _ in range(config.layers)],
        final_norm=np.ones(config.d, dtype=dtype),
    )


def zeros_like_block(p: MambaBlockParams) -> MambaBlockParams:
    return MambaBlockParams(
        norm=np.zeros_like(p.norm),
        in_W=np.zeros_like(p.in_W),
        conv_w=np.zeros_like(p.conv_w),
        conv_b=np.zeros_like(p.conv_b),
        ssm=zeros_like_layer(p.ssm),
        out_W=np.zeros_like(p.out_W),
    )


def zeros_like_model(p: ModelParams) -> ModelParams:
    return ModelParams(
        embedding=np.zeros_like(p.embedding),
        blocks=[zeros_like_block(b) for b in p.blocks],
        final_norm=np.zeros_like(p.final_norm),
    )


def fuse_dual_features(Vs: np.ndarray, Vd: np.ndarray) -> np.ndarray:
    """Channel concatenation of the two encoders: d_v = d_s + d_d."""
    if Vs.shape[:-1] != Vd.shape[:-1]:
        raise ShapeError(
            f"encoder outputs disagree on frames/tokens: {Vs.shape} vs {Vd.shape}"
        )
    return np.concatenate([Vs, Vd], axis=-1)


# --- block ---------------------------------------------------------------------


def mamba_block_forward(
    x: np.ndarray, p: MambaBlockParams, keep: bool = True
) -> tuple[tuple[np.ndarray, BlockState], Record]:
    inner = p.inner
    xn, r_norm = rmsnorm_forward(x, p.norm)
    zz, r_in = linear_forward(xn, p.in_W)
    stream, gate = zz[..., :inner], zz[..., inner:]
    c, r_conv = causal_conv_forward(stream, p.conv_w, p.conv_b)
    s, r_silu = silu_forward(c)
    (ys, h), r_scan = selective_scan_forward(p.ssm, s, keep=keep)
    gs, r_gate = silu_forward(gate)
    o, r_out = linear_forward(ys * gs, p.out_W)
    state = BlockState(window=r_conv.saved["xp"][..., -p.conv_w.shape[0] :, :].copy(), h=h)
    saved = None
    if keep:
        saved = {
            "p": p,
            "norm": r_norm,
            "in": r_in,
            "conv": r_conv,
            "silu": r_silu,
            "scan": r_scan,
            "gate": r_gate,
            "out": r_out,
            "ys": ys,
            "gs": gs,
        }
    return (x + o, state), Record("mamba_block", saved)


def mamba_block(x: np.ndarray, p: MambaBlockParams) -> np.ndarray:
    return mamba_block_forward(x, p, keep=False)[0][0]


def mamba_block_backward(
    dy: np.ndarray, record: Record
) -> tuple[np.ndarray, MambaBlockParams]:
    s = expect(record, "mamba_block")
    dg, d_out_W, _ = linear_backward(dy, s["out"])
    d_gate = silu_backward(dg * s["ys"], s["gate"])
    ds, g_ssm, _ = selective_scan_backward(dg * s["gs"], s["scan"])
    dc = silu_backward(ds, s["silu"])
    d_stream, d_conv_w, d_conv_b = causal_conv_backward(dc, s["conv"])
    dxn, d_in_W, _ = linear_backward(np.concatenate([d_stream, d_gate], axis=-1), s["in"])
    dx, d_norm = rmsnorm_backward(dxn, s["norm"])
    grads = MambaBlockParams(
        norm=d_norm,
        in_W=d_in_W,
        conv_w=d_conv_w,
        conv_b=d_conv_b,
        ssm=g_ssm,
        out_W=d_out_W,
    )
    return dy + dx, grads


def mamba_block_step(
    x_t: np.ndarray, state: BlockState, p: MambaBlockParams
) -> tuple[np.ndarray, BlockState]:
    inner = p.inner
    zz = rmsnorm(x_t, p.norm) @ p.in_W
    stream, gate = zz[..., :inner], zz[..., inner:]
    c, window = causal_conv_step(stream, state.window, p.conv_w, p.conv_b)
    ys, h = selective_step(p.ssm, silu(c), state.h)
    return x_t + (ys * silu(gate)) @ p.out_W, BlockState(window=window, h=h)


def init_decode_state(params: ModelParams, batch: tuple[int, ...] = ()) -> DecodeState:
    dtype = params.embedding.dtype
    return DecodeState(
        blocks=[
            BlockState(
                window=np.zeros(batch + b.conv_w.shape, dtype=dtype),
                h=np.zeros(batch + b.ssm.a_log.shape, dtype=dtype),
            )
            for b in params.blocks
        ]
    )


# --- language model --------------------------------------------------------------


def _run_blocks(x: np.ndarray, params: ModelParams, keep: bool):
    records, states = [], []
    for index, block in enumerate(params.blocks):
        try:
            (x, state), rec = mamba_block_forward(x, block, keep=keep)
        except NumericRangeError as exc:
            raise NumericRangeError(f"layer {index}: {exc}") from exc
        records.append(rec)
        states.append(state)
    return x, records, DecodeState(states)


def lm_forward_recorded(
    visual_prefix: np.ndarray, text_ids: np.ndarray, params: ModelParams, keep: bool = True
) -> tuple[tuple[np.ndarray, DecodeState], Record]:
    """Logits for every position of [visual_prefix ; embed(text_ids)]."""
    text_ids = np.asarray(text_ids, dtype=np.int64)
    if visual_prefix.shape[-1] != params.d:
        raise ShapeError(
            f"visual prefix width {visual_prefix.shape[-1]} differs from model width {params.d}"
        )
    emb, r_emb = embed_forward(text_ids, params.embedding)
    emb = emb.astype(visual_prefix.dtype, copy=False)
    if emb.shape[:-2] != visual_prefix.shape[:-2]:
        raise ShapeError("visual prefix and text ids disagree on batch shape")
    seq = np.concatenate([visual_prefix, emb], axis=-2)
    x, block_records, state = _run_blocks(seq, params, keep)
    xn, r_norm = rmsnorm_forward(x, params.final_norm)
    logits = xn @ params.embedding.T
    saved = None
    if keep:
        saved = {
            "params": params,
            "emb": r_emb,
            "blocks": block_records,
            "norm": r_norm,
            "xn": xn,
            "L_v": visual_prefix.shape[-2],
        }
    return (logits, state), Record("lm", saved)


def lm_forward(visual_prefix: np.ndarray, text_ids: np.ndarray, params: ModelParams) -> np.ndarray:
    return lm_forward_recorded(visual_prefix, text_ids, params, keep=False)[0][0]


def lm_backward(d_logits: np.ndarray, record: Record) -> tuple[np.ndarray, ModelParams]:
    """Returns (d visual_prefix, model grads)."""
    s = expect(record, "lm")
    params: ModelParams = s["params"]
    d = params.d
    xn = s["xn"]
    d_embedding = (d_logits.reshape(-1, params.vocab_size).T @ xn.reshape(-1, d)).astype(
        params.embedding.dtype
    )
    dx, d_final = rmsnorm_backward(d_logits @ params.embedding, s["norm"])
    block_grads = []
    for rec in reversed(s["blocks"]):
        dx, g = mamba_block_backward(dx, rec)
        block_grads.append(g)
    block_grads.reverse()
    L_v = s["L_v"]
    d_embedding = d_embedding + embed_backward(dx[..., L_v:, :], s["emb"])
    grads = ModelParams(embedding=d_embedding, blocks=block_grads, final_norm=d_final)
    return dx[..., :L_v, :], grads


def loss_cross_entropy(
    logits: np.ndarray, target_ids: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over masked positions, and d loss / d logits."""
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise InputError("loss mask selects no positions")
    targets = np.asarray(target_ids, dtype=np.int64)
    log_p = log_softmax(logits, axis=-1)
    picked = np.take_along_axis(log_p, targets[..., None], axis=-1)[..., 0]
    loss = -float(np.sum(picked * mask)) / count
    d_logits = np.exp(log_p)
    np.put_along_axis(
        d_logits,
        targets[..., None],
        np.take_along_axis(d_logits, targets[..., None], axis=-1) - 1.0,
        axis=-1,
    )
    d_logits *= mask[..., None] / count
    return loss, d_logits.astype(logits.dtype, copy=False)


def lm_step(
    token_ids: np.ndarray, state: DecodeState, params: ModelParams
) -> tuple[np.ndarray, DecodeState]:
    """Consume one token per sequence; returns logits (..., |V|)."""
    x = params.embedding[np.asarray(token_ids, dtype=np.int64)]
    return lm_step_embedded(x, state, params)


def lm_step_embedded(
    x: np.ndarray, state: DecodeState, params: ModelParams
) -> tuple[np.ndarray, DecodeState]:
    new_states = []
    for block, block_state in zip(params.blocks, state.blocks):
        x, block_state = mamba_block_step(x, block_state, block)
        new_states.append(block_state)
    logits = rmsnorm(x, params.final_norm) @ params.embedding.T
    return logits, DecodeState(new_states)


def decode_greedy(
    visual_prefix: np.ndarray, prompt_ids: list[int], max_len: int, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Batched greedy decoding in recurrent mode.

    visual_prefix is (B, L_v, d). Returns (ids (B, steps), step logits
    (B, steps, |V|)); sequences that emitted EOS keep stepping but their later
    tokens are ignored by `generate_greedy`.
    """
    if max_len < 1:
        raise InputError(f"max_len must be at least 1, got {max_len}")
    B = visual_prefix.shape[0]
    prompt = np.tile(np.asarray(prompt_ids, dtype=np.int64), (B, 1))
    (logits, state), _ = lm_forward_recorded(visual_prefix, prompt, params, keep=False)
    last = logits[:, -1, :]
    ids, step_logits = [], []
    finished = np.zeros(B, dtype=bool)
    for _ in range(max_len):
        # argmax returns the lowest id among ties
        token = np.argmax(last, axis=-1)
        ids.append(token)
        step_logits.append(last)
        finished |= token == EOS
        if finished.all() or len(ids) == max_len:
            break
        last, state = lm_step(token, state, params)
    return np.stack(ids, axis=1), np.stack(step_logits, axis=1)


def generate_greedy(
    visual_prefix: np.ndarray, prompt_ids: list[int], max_len: int, params: ModelParams
) -> TokenSequence | list[TokenSequence]:
    """Greedy captions; a 2-D prefix yields one TokenSequence, a batch a list."""
    single = visual_prefix.ndim == 2
    batch = visual_prefix[None] if single else visual_prefix
    ids, _ = decode_greedy(batch, prompt_ids, max_len, params)
    sequences = []
    for row in ids.tolist():
        if EOS in row:
            row = row[: row.index(EOS) + 1]
        sequences.append(TokenSequence(row))
    return sequences[0] if single else sequences

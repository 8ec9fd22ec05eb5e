"""Video captioner: frozen encoders -> AHBS projector -> selective-scan LM.

The LM input is [<img> ; H_v flattened frame-major ; <bos> caption], and the
loss covers the caption words and the closing <eos> only.
"""

from dataclasses import dataclass

import numpy as np

from scancap.operations.ahbs import (
    AhbsConfig,
    AhbsParams,
    ahbs_backward,
    ahbs_forward,
    ahbs_forward_recorded,
    init_ahbs_params,
)
from scancap.operations.errors import ConfigError
from scancap.operations.model import (
    ModelConfig,
    ModelParams,
    generate_greedy,
    init_model_params,
    lm_backward,
    lm_forward_recorded,
    loss_cross_entropy,
)
from scancap.operations.tokenizer import BOS, IMG, PAD, Vocabulary


@dataclass
class CaptionerParams:
    ahbs: AhbsParams
    lm: ModelParams


def init_captioner(
    ahbs_config: AhbsConfig,
    model_config: ModelConfig,
    d_v: int,
    vocab_size: int,
    rng: np.random.Generator,
    dtype=np.float64,
) -> CaptionerParams:
    if ahbs_config.d_model != model_config.d:
        raise ConfigError(
            f"ahbs.d_model ({ahbs_config.d_model}) must equal model.d ({model_config.d})"
        )
    return CaptionerParams(
        ahbs=init_ahbs_params(ahbs_config, d_v, model_config.state_dim, rng, dtype),
        lm=init_model_params(model_config, vocab_size, rng, dtype),
    )


def visual_prefix(H: np.ndarray, lm: ModelParams) -> np.ndarray:
    """(B, T', N_d, d) -> (B, 1 + T' N_d, d) led by the <img> embedding."""
    B = H.shape[0]
    flat = H.reshape(B, -1, H.shape[-1])
    img = np.broadcast_to(lm.embedding[IMG].astype(H.dtype), (B, 1, H.shape[-1]))
    return np.concatenate([img, flat], axis=1)


def build_batch(
    captions: list[str], vocab: Vocabulary
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forcing inputs, targets and loss mask, right-padded with <pad>."""
    sequences = [vocab.caption_ids(c).ids for c in captions]
    width = max(len(s) for s in sequences) - 1
    inputs = np.full((len(sequences), width), PAD, dtype=np.int64)
    targets = np.full((len(sequences), width), PAD, dtype=np.int64)
    for i, seq in enumerate(sequences):
        inputs[i, : len(seq) - 1] = seq[:-1]
        targets[i, : len(seq) - 1] = seq[1:]
    return inputs, targets, targets != PAD


def loss_and_grads(
    V: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    params: CaptionerParams,
    ahbs_config: AhbsConfig,
) -> tuple[float, CaptionerParams]:
    """Masked cross-entropy of a batch and its gradient w.r.t. every trainable array."""
    H, rec_ahbs = ahbs_forward_recorded(V, ahbs_config, params.ahbs)
    prefix = visual_prefix(H, params.lm)
    L_v = prefix.shape[1]
    (logits, _), rec_lm = lm_forward_recorded(prefix, inputs, params.lm)
    loss, d_text = loss_cross_entropy(logits[:, L_v:, :], targets, mask)
    d_logits = np.zeros_like(logits)
    d_logits[:, L_v:, :] = d_text
    d_prefix, g_lm = lm_backward(d_logits, rec_lm)
    g_lm.embedding[IMG] += d_prefix[:, 0, :].sum(axis=0)
    _, g_ahbs = ahbs_backward(d_prefix[:, 1:, :].reshape(H.shape), rec_ahbs)
    return loss, CaptionerParams(ahbs=g_ahbs, lm=g_lm)


def caption_features(
    V: np.ndarray,
    params: CaptionerParams,
    ahbs_config: AhbsConfig,
    vocab: Vocabulary,
    max_len: int,
) -> list[str]:
    """Greedy captions for a batch of fused features (B, T, N_p, d_v)."""
    prefix = visual_prefix(ahbs_forward(V, ahbs_config, params.ahbs), params.lm)
    sequences = generate_greedy(prefix, [BOS], max_len, params.lm)
    return [vocab.decode(seq.ids) for seq in sequences]

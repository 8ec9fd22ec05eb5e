"""Single-stage training, held-out evaluation and the ablation sweeps.

Training fine-tunes the projector and the language model together from the
first step; the encoder stubs stay frozen.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from scancap.operations.captioner import (
    CaptionerParams,
    build_batch,
    caption_features,
    init_captioner,
    loss_and_grads,
)
from scancap.operations.config import RunConfig, echo_config
from scancap.operations.errors import DataError
from scancap.operations.interface import CheckpointInterface, ReportInterface
from scancap.operations.metrics import EvalRecord, corpus_bleu, corpus_rouge_l, tokens
from scancap.operations.optim import AdamW, clip_global_norm, load_arrays, lr_at, named_arrays
from scancap.operations.precision import compute_dtype
from scancap.operations.synthdata import (
    EncoderStub,
    SyntheticScene,
    caption_of,
    encode_scenes,
    make_encoder_stub,
)
from scancap.operations.tokenizer import Vocabulary

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "step", "lr", "loss", "grad_norm")
EVAL_COLUMNS = ("sample_id", "bleu1", "bleu4", "rouge_l", "candidate", "reference")
EVAL_CURVE_COLUMNS = ("epoch", "bleu1", "bleu4", "rouge_l")
ABLATION_COLUMNS = ("variant", "seed", "bleu1", "bleu4", "rouge_l", "event_bleu1")

SCAN_VARIANTS: dict[str, dict] = {
    "full": {},
    "no-backward": {"backward": False},
    "single-pathway": {"pathways": 1},
    "no-scan": {"scan": False},
}
BRANCH_VARIANTS: dict[str, dict] = {
    "M1-s2": {"pathways": 1, "stride": 2},
    "M2-s2": {"pathways": 2, "stride": 2},
    "M3-s2": {"pathways": 3, "stride": 2},
    "M3-s4": {"pathways": 3, "stride": 4},
}


@dataclass
class Encoders:
    semantic: EncoderStub
    detail: EncoderStub


def make_encoders(config: RunConfig) -> Encoders:
    return Encoders(
        semantic=make_encoder_stub(config.encoder.seed, config.data.patch, config.encoder.d_semantic),
        detail=make_encoder_stub(config.encoder.seed + 1, config.data.patch, config.encoder.d_detail),
    )


def features_of(scenes: list[SyntheticScene], config: RunConfig, encoders: Encoders) -> np.ndarray:
    data = config.data
    return encode_scenes(
        scenes,
        data.frames,
        data.height,
        data.width,
        encoders.semantic,
        encoders.detail,
        dtype=compute_dtype(),
    )


def new_captioner(config: RunConfig, vocab: Vocabulary) -> CaptionerParams:
    rng = np.random.default_rng(config.train.seed)
    return init_captioner(
        config.ahbs, config.model, config.encoder.d_v, len(vocab), rng, compute_dtype()
    )


def restore_captioner(
    config: RunConfig, vocab: Vocabulary, checkpoint_interface: CheckpointInterface
) -> CaptionerParams:
    params = new_captioner(config, vocab)
    tensors, _ = checkpoint_interface.load()
    load_arrays(params, tensors)
    return params


class EvalSummary(BaseModel):
    bleu1: float
    bleu4: float
    rouge_l: float
    event_bleu1: float
    rows: list[dict]


@dataclass
class TrainResult:
    params: CaptionerParams
    losses: list[float] = field(default_factory=list)
    evals: list[EvalSummary] = field(default_factory=list)


def evaluate(
    params: CaptionerParams,
    scenes: list[SyntheticScene],
    config: RunConfig,
    encoders: Encoders,
    vocab: Vocabulary,
    features: np.ndarray | None = None,
) -> EvalSummary:
    """Corpus BLEU-1/4 and ROUGE-L of greedy captions; event_bleu1 covers scenes with an event."""
    if not scenes:
        raise DataError("evaluation needs at least one scene")
    if features is None:
        features = features_of(scenes, config, encoders)
    batch = config.train.batch
    candidates: list[str] = []
    for start in range(0, len(scenes), batch):
        candidates += caption_features(
            features[start : start + batch], params, config.ahbs, vocab, config.eval.max_len
        )
    records, event_records, rows = [], [], []
    for scene, candidate in zip(scenes, candidates):
        reference = caption_of(scene)
        record = EvalRecord(candidate=tokens(candidate), references=[tokens(reference)])
        records.append(record)
        if scene.event != "none":
            event_records.append(record)
        rows.append(
            {
                "sample_id": scene.sample_seed,
                "bleu1": corpus_bleu([record], 1),
                "bleu4": corpus_bleu([record], 4),
                "rouge_l": corpus_rouge_l([record]),
                "candidate": candidate,
                "reference": reference,
            }
        )
    return EvalSummary(
        bleu1=corpus_bleu(records, 1),
        bleu4=corpus_bleu(records, 4),
        rouge_l=corpus_rouge_l(records),
        event_bleu1=corpus_bleu(event_records, 1) if event_records else 0.0,
        rows=rows,
    )


def train(
    config: RunConfig,
    train_scenes: list[SyntheticScene],
    eval_scenes: list[SyntheticScene] | None = None,
    checkpoint_interface: CheckpointInterface | None = None,
    report_interface: ReportInterface | None = None,
) -> TrainResult:
    """AdamW over shuffled mini-batches with warmup + cosine decay and global-norm clipping."""
    vocab = Vocabulary()
    encoders = make_encoders(config)
    params = new_captioner(config, vocab)
    settings = config.train
    rng = np.random.default_rng(settings.seed)
    features = features_of(train_scenes, config, encoders)
    captions = [caption_of(scene) for scene in train_scenes]
    eval_features = None
    if settings.eval_every_epoch and eval_scenes:
        eval_features = features_of(eval_scenes, config, encoders)

    trainable = named_arrays(params)
    optimizer = AdamW(trainable, weight_decay=settings.weight_decay)
    per_epoch = math.ceil(len(train_scenes) / settings.batch)
    total = settings.epochs * per_epoch
    result = TrainResult(params=params)
    loss_rows, eval_rows = [], []
    step = 0
    logger.info(
        "training on %d scenes: %d epochs x %d steps, %d trainable arrays",
        len(train_scenes),
        settings.epochs,
        per_epoch,
        len(trainable),
    )
    for epoch in range(settings.epochs):
        order = rng.permutation(len(train_scenes))
        for start in tqdm(range(0, len(order), settings.batch), desc=f"epoch {epoch + 1}", leave=False):
            index = order[start : start + settings.batch]
            inputs, targets, mask = build_batch([captions[i] for i in index], vocab)
            loss, grads = loss_and_grads(features[index], inputs, targets, mask, params, config.ahbs)
            flat = named_arrays(grads)
            grad_norm = clip_global_norm(flat, settings.grad_clip)
            lr = lr_at(step, total, settings.lr, settings.warmup_ratio)
            optimizer.step(flat, lr)
            result.losses.append(loss)
            loss_rows.append(
                {"epoch": epoch, "step": step, "lr": lr, "loss": loss, "grad_norm": grad_norm}
            )
            if step % settings.log_every == 0:
                logger.info("step %d lr %.3g loss %.4f", step, lr, loss)
            step += 1
        if eval_features is not None:
            summary = evaluate(params, eval_scenes, config, encoders, vocab, eval_features)
            result.evals.append(summary)
            eval_rows.append(
                {"epoch": epoch, "bleu1": summary.bleu1, "bleu4": summary.bleu4, "rouge_l": summary.rouge_l}
            )
            logger.info("epoch %d eval bleu1 %.3f bleu4 %.3f", epoch, summary.bleu1, summary.bleu4)

    if checkpoint_interface is not None:
        checkpoint_interface.save(named_arrays(params), echo_config(config))
    if report_interface is not None:
        report_interface.write("loss_curve.csv", LOSS_COLUMNS, loss_rows)
        if settings.eval_every_epoch:
            report_interface.write("eval_curve.csv", EVAL_CURVE_COLUMNS, eval_rows)
    return result


def variant_config(config: RunConfig, changes: dict, seed: int) -> RunConfig:
    ahbs = config.ahbs.model_copy(update=changes)
    train_section = config.train.model_copy(update={"seed": seed})
    return config.model_copy(update={"ahbs": ahbs, "train": train_section})


def ablate(
    config: RunConfig,
    train_scenes: list[SyntheticScene],
    eval_scenes: list[SyntheticScene],
    report_interface: ReportInterface | None = None,
) -> list[dict]:
    """Train and score every variant of the selected grid once per seed, plus per-variant means."""
    variants = SCAN_VARIANTS if config.ablate.grid == "scan" else BRANCH_VARIANTS
    vocab = Vocabulary()
    encoders = make_encoders(config)
    eval_features = features_of(eval_scenes, config, encoders)
    rows = []
    for name, changes in variants.items():
        for seed in config.ablate.seeds:
            run = variant_config(config, changes, seed)
            run.ahbs.check_frames(run.data.frames)
            logger.info("ablation %s seed %d", name, seed)
            result = train(run, train_scenes)
            summary = evaluate(result.params, eval_scenes, run, encoders, vocab, eval_features)
            rows.append(
                {
                    "variant": name,
                    "seed": seed,
                    "bleu1": summary.bleu1,
                    "bleu4": summary.bleu4,
                    "rouge_l": summary.rouge_l,
                    "event_bleu1": summary.event_bleu1,
                }
            )
    for name in variants:
        mine = [r for r in rows if r["variant"] == name]
        means = {k: float(np.mean([r[k] for r in mine])) for k in ABLATION_COLUMNS[2:]}
        rows.append({"variant": name, "seed": "mean", **means})
    if report_interface is not None:
        report_interface.write("ablation.csv", ABLATION_COLUMNS, rows)
    return rows

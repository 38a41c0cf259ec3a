"""Training loop: per-batch phrase sampling, target augmentation, Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Utterance
from .model import Recognizer
from .sampler import SamplerConfig, insert_bias_tokens, sample_bias_list
from .vocab import graphemize, normalize


@dataclass
class TrainConfig:
    steps: int = 800
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    log_every: int = 10


def target_ids(model: Recognizer, tokens: list[str]) -> list[int]:
    return [model.vocab.index(t) for t in tokens] + [model.vocab.eos]


def train_model(
    model: Recognizer,
    utts: list[Utterance],
    sampler_cfg: SamplerConfig,
    cfg: TrainConfig,
    on_step=None,
) -> list[tuple[int, float]]:
    """Run Adam over random batches; returns the (step, loss) log.

    Each batch draws a fresh phrase list from its own transcripts, inserts
    `</bias>` after matches in every target, and minimizes the summed
    negative log-likelihood (averaged over the batch).
    """
    opt = T.Adam(model.params, lr=cfg.lr)
    batch_rng = T.substream(cfg.seed, "train/batches")
    sampler_rng = T.substream(cfg.seed, "train/sampler")
    features = [u.load_features() for u in utts]
    refs = [normalize(u.transcript) for u in utts]
    log: list[tuple[int, float]] = []
    for step in range(cfg.steps):
        idx = batch_rng.choice(len(utts), size=min(cfg.batch_size, len(utts)), replace=False)
        phrases = sample_bias_list([refs[i] for i in idx], sampler_cfg, sampler_rng)
        with T.Tape() as tape:
            h_z = model.encode_bias(phrases)
            loss = None
            for i in idx:
                tokens = insert_bias_tokens(refs[i], phrases) if phrases else graphemize(refs[i])
                nll = model.forward_loss(features[i], phrases, target_ids(model, tokens), h_z=h_z)
                loss = nll if loss is None else T.add(loss, nll)
            loss = T.scale(loss, 1.0 / len(idx))
            value = float(loss.data)
            if not np.isfinite(value):
                raise FloatingPointError(f"loss became non-finite ({value}) at step {step}")
            opt.zero_grad()
            tape.backward(loss)
        opt.step()
        log.append((step, value))
        if on_step is not None:
            on_step(step, value)
    return log

"""Word-tagging network: context windows, embedding, GRU, softmax per step.

The input is a sentence as word indices with the trailing end-of-sequence
index already appended; the network emits one distribution over the 10
tags for every position, so tagging is length-preserving.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .dlkit import TAGS
from .numkit import make_rng

__all__ = ["TaggerConfig", "TaggerModel", "windows", "forward", "loss_and_grads", "predict"]


@dataclass(frozen=True)
class TaggerConfig:
    in_vocab: int
    window_half_width: int = 2
    embed_dim: int = 100
    hidden_dim: int = 200
    out_tags: int = len(TAGS)

    def __post_init__(self):
        if self.out_tags != len(TAGS):
            raise ValueError(f"tagger must emit {len(TAGS)} tags, configured {self.out_tags}")
        for name in ("in_vocab", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.window_half_width < 0:
            raise ValueError("window_half_width must be non-negative")

    @property
    def window_size(self) -> int:
        return 2 * self.window_half_width + 1

    @property
    def gru_input_dim(self) -> int:
        return self.window_size * self.embed_dim


@dataclass
class TaggerModel:
    config: TaggerConfig
    embedding: nn.EmbeddingTable
    gru: nn.GruParams
    head: nn.OutputHead

    @classmethod
    def init(cls, config: TaggerConfig, seed: int) -> "TaggerModel":
        rng = make_rng(seed)
        return cls(
            config=config,
            embedding=nn.EmbeddingTable.init(config.embed_dim, config.in_vocab, rng),
            gru=nn.GruParams.init(config.gru_input_dim, config.hidden_dim, rng),
            head=nn.OutputHead.init(config.out_tags, config.hidden_dim, rng),
        )

    def param_dict(self) -> dict:
        return {
            "E": self.embedding.E,
            "W_r": self.gru.W_r, "U_r": self.gru.U_r,
            "W_z": self.gru.W_z, "U_z": self.gru.U_z,
            "W_h": self.gru.W_h, "U_h": self.gru.U_h,
            "W": self.head.W, "b": self.head.b,
        }


def windows(indices, c: int) -> list:
    """(2c+1)-wide index windows centered on each position.

    Positions outside the sequence are filled with the end-of-sequence
    index 0, matching the padding convention of the vocabulary.
    """
    idx = list(indices)
    n = len(idx)
    out = []
    for k in range(n):
        win = []
        for j in range(k - c, k + c + 1):
            win.append(idx[j] if 0 <= j < n else 0)
        out.append(tuple(win))
    return out


def _forward_cached(model: TaggerModel, indices):
    c = model.config.window_half_width
    wins = windows(indices, c)
    xs = [nn.embed_window(model.embedding, w) for w in wins]
    h = np.zeros(model.config.hidden_dim)
    hs, caches = [], []
    for x in xs:
        h, cache = nn.gru_step(model.gru, x, h)
        hs.append(h)
        caches.append(cache)
    probs = [nn.output_distribution(model.head, h) for h in hs]
    return probs, hs, caches, wins


def forward(model: TaggerModel, indices) -> list:
    """Per-position tag distributions for a sentence (indices include EOS)."""
    probs, _, _, _ = _forward_cached(model, indices)
    return probs


def predict(model: TaggerModel, indices) -> list:
    """Most probable tag index per position; ties go to the lowest index."""
    return [int(np.argmax(y)) for y in forward(model, indices)]


def _zero_grads(model: TaggerModel) -> dict:
    return {name: np.zeros_like(p) for name, p in model.param_dict().items()}


def _batch_windows(model: TaggerModel, sentences, length: int) -> np.ndarray:
    """(length, batch, window) index array over EOS-padded sentences."""
    c = model.config.window_half_width
    vocab = model.config.in_vocab
    B = len(sentences)
    padded = np.zeros((B, length + 2 * c), dtype=np.intp)
    for b, words in enumerate(sentences):
        for w in words:
            if not 0 <= w < vocab:
                raise nn.VocabularyError(f"word index {w} outside vocabulary of size {vocab}")
        padded[b, c:c + len(words)] = words
    wins = np.empty((length, B, model.config.window_size), dtype=np.intp)
    for k in range(length):
        wins[k] = padded[:, k:k + 2 * c + 1]
    return wins


def _batch_forward(model: TaggerModel, wins: np.ndarray):
    """Batched forward over precomputed windows; returns probs, Hs, caches."""
    ET = model.embedding.E.T
    B = wins.shape[1]
    H = np.zeros((B, model.config.hidden_dim))
    probs, Hs, caches = [], [], []
    for k in range(wins.shape[0]):
        X = ET[wins[k].reshape(-1)].reshape(B, -1)
        H, cache = nn.gru_step_batch(model.gru, X, H)
        Hs.append(H)
        caches.append(cache)
        probs.append(nn.output_distribution_batch(model.head, H))
    return probs, Hs, caches


def loss_and_grads(model: TaggerModel, batch) -> tuple:
    """Summed cross entropy and exact BPTT gradients over a batch.

    batch holds (word_indices, tag_indices) pairs without the trailing EOS;
    both sequences are padded here with the EOS index to the longest
    sentence plus one, and every padded step contributes to the loss.
    Per-example gradients are summed in example index order (the rows of
    the batched matrix products).
    """
    if not batch:
        raise ValueError("batch is empty")
    for words, tags in batch:
        if len(words) != len(tags):
            raise ValueError(f"{len(words)} words vs {len(tags)} tags")
    B = len(batch)
    length = max(len(words) for words, _ in batch) + 1
    gold = np.zeros((length, B), dtype=np.intp)
    for b, (_, tags) in enumerate(batch):
        for t in tags:
            if not 0 <= t < model.config.out_tags:
                raise nn.VocabularyError(f"tag index {t} outside {model.config.out_tags} tags")
        gold[:len(tags), b] = tags

    wins = _batch_windows(model, [w for w, _ in batch], length)
    probs, Hs, caches = _batch_forward(model, wins)

    rows = np.arange(B)
    total = 0.0
    with np.errstate(divide="ignore"):
        for k in range(length):
            total -= float(np.sum(np.log(probs[k][rows, gold[k]])))
    if not np.isfinite(total):
        raise nn.NumericError(f"tagger loss is not finite: {total}")

    grads = _zero_grads(model)
    gru_grads = nn.GruGrads.zeros_like(model.gru)
    gET = np.zeros_like(model.embedding.E.T)
    d = model.config.embed_dim
    carry = np.zeros((B, model.config.hidden_dim))
    for k in range(length - 1, -1, -1):
        dO = probs[k].copy()
        dO[rows, gold[k]] -= 1.0
        grads["W"] += dO.T @ Hs[k]
        grads["b"] += dO.sum(axis=0)
        dH = dO @ model.head.W + carry
        dX, carry = nn.gru_backward_batch(caches[k], dH, gru_grads)
        np.add.at(gET, wins[k].reshape(-1), dX.reshape(-1, d))
    grads["E"] += gET.T
    for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
        grads[name] += getattr(gru_grads, name)
    return total, grads

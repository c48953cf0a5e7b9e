"""Encoder-decoder network mapping a sentence to a formula-token sequence.

The encoder GRU reads the embedded words (no context windowing) and its
final hidden state becomes the context vector. The decoder GRU receives
that same context vector as its input at every step, with no feedback of
previously emitted tokens, so greedy per-step argmax is the exact maximum
probability decoding. Input and output lengths are decoupled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .dlkit import FORMULA_TOKENS
from .numkit import make_rng

__all__ = [
    "TransducerConfig",
    "TransducerModel",
    "encode",
    "decode",
    "decode_batch",
    "loss_and_grads",
    "predict_formula",
]


@dataclass(frozen=True)
class TransducerConfig:
    in_vocab: int
    embed_dim: int = 100
    enc_hidden: int = 1000
    dec_hidden: int = 1000
    out_terms: int = len(FORMULA_TOKENS)
    max_output_len: int = 24

    def __post_init__(self):
        if self.out_terms != len(FORMULA_TOKENS):
            raise ValueError(
                f"transducer must emit {len(FORMULA_TOKENS)} terms, configured {self.out_terms}"
            )
        for name in ("in_vocab", "embed_dim", "enc_hidden", "dec_hidden", "max_output_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class TransducerModel:
    config: TransducerConfig
    embedding: nn.EmbeddingTable
    encoder: nn.GruParams
    decoder: nn.GruParams  # its input at every step is the context vector
    head: nn.OutputHead

    @classmethod
    def init(cls, config: TransducerConfig, seed: int) -> "TransducerModel":
        rng = make_rng(seed)
        return cls(
            config=config,
            embedding=nn.EmbeddingTable.init(config.embed_dim, config.in_vocab, rng),
            encoder=nn.GruParams.init(config.embed_dim, config.enc_hidden, rng),
            decoder=nn.GruParams.init(config.enc_hidden, config.dec_hidden, rng),
            head=nn.OutputHead.init(config.out_terms, config.dec_hidden, rng),
        )

    def param_dict(self) -> dict:
        out = {"E": self.embedding.E}
        for prefix, gru in (("enc", self.encoder), ("dec", self.decoder)):
            for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
                out[f"{prefix}.{name}"] = getattr(gru, name)
        out["W"] = self.head.W
        out["b"] = self.head.b
        return out


def _encode_cached(model: TransducerModel, indices):
    E = model.embedding.E
    vocab = E.shape[1]
    h = np.zeros(model.config.enc_hidden)
    caches = []
    idx = list(indices)
    for i in idx:
        if not 0 <= i < vocab:
            raise nn.VocabularyError(f"word index {i} outside vocabulary of size {vocab}")
        h, cache = nn.gru_step(model.encoder, E[:, i], h)
        caches.append(cache)
    return h, caches, idx


def encode(model: TransducerModel, indices) -> np.ndarray:
    """Context vector: the encoder state after the whole sentence (incl. EOS)."""
    h, _, _ = _encode_cached(model, indices)
    return h


def _decode_cached(model: TransducerModel, context: np.ndarray, steps: int):
    h = np.zeros(model.config.dec_hidden)
    hs, caches = [], []
    for _ in range(steps):
        h, cache = nn.gru_step(model.decoder, context, h)
        hs.append(h)
        caches.append(cache)
    probs = [nn.output_distribution(model.head, h) for h in hs]
    return probs, hs, caches


def decode(model: TransducerModel, context: np.ndarray, steps: int) -> list:
    """Per-step distributions over the formula terms from a constant context."""
    if steps < 1:
        raise ValueError("decode needs at least one step")
    probs, _, _ = _decode_cached(model, context, steps)
    return probs


def decode_batch(model: TransducerModel, contexts: np.ndarray, steps: int) -> list:
    """Batched decode: per-step distributions for a batch of context rows."""
    H = np.zeros((contexts.shape[0], model.config.dec_hidden))
    probs = []
    for _ in range(steps):
        H, _ = nn.gru_step_batch(model.decoder, contexts, H)
        probs.append(nn.output_distribution_batch(model.head, H))
    return probs


def predict_formula(model: TransducerModel, indices) -> list:
    """Greedy decoding: argmax per step until EOS (index 0) or max_output_len.

    Returns the emitted token indices with the terminating EOS excluded.
    """
    context = encode(model, indices)
    out = []
    h = np.zeros(model.config.dec_hidden)
    for _ in range(model.config.max_output_len):
        h, _ = nn.gru_step(model.decoder, context, h)
        token = int(np.argmax(nn.output_distribution(model.head, h)))
        if token == 0:
            break
        out.append(token)
    return out


def _batch_encode(model: TransducerModel, sentences):
    """Batched encoder over EOS-padded inputs.

    Returns (contexts, caches, padded index matrix, lengths). Each example's
    context is its own hidden state after its final (EOS) token; the extra
    padded steps of shorter sentences never reach the loss.
    """
    vocab = model.config.in_vocab
    B = len(sentences)
    lens = np.array([len(s) + 1 for s in sentences], dtype=np.intp)
    L = int(lens.max())
    padded = np.zeros((B, L), dtype=np.intp)
    for b, s in enumerate(sentences):
        for w in s:
            if not 0 <= w < vocab:
                raise nn.VocabularyError(f"word index {w} outside vocabulary of size {vocab}")
        padded[b, :len(s)] = s
    ET = model.embedding.E.T
    H = np.zeros((B, model.config.enc_hidden))
    Hs, caches = [], []
    for k in range(L):
        H, cache = nn.gru_step_batch(model.encoder, ET[padded[:, k]], H)
        Hs.append(H)
        caches.append(cache)
    stacked = np.stack(Hs)  # (L, B, enc_hidden)
    contexts = stacked[lens - 1, np.arange(B)]
    return contexts, caches, padded, lens


def loss_and_grads(model: TransducerModel, batch) -> tuple:
    """Summed cross entropy over all decoder steps with full BPTT.

    batch holds (word_indices, formula_indices) pairs, both without EOS;
    the encoder input gets its trailing EOS here and gold formulas are
    padded with EOS to the longest one plus one. Gradients flow through the
    decoder, the context vector, the encoder and the embedding; per-example
    contributions sum in example index order (the batched matrix products).
    """
    if not batch:
        raise ValueError("batch is empty")
    B = len(batch)
    steps = max(len(f) for _, f in batch) + 1
    out_terms = model.config.out_terms
    gold = np.zeros((steps, B), dtype=np.intp)
    for b, (_, formula) in enumerate(batch):
        for t in formula:
            if not 0 <= t < out_terms:
                raise nn.VocabularyError(f"formula index {t} outside {out_terms} terms")
        gold[:len(formula), b] = formula

    contexts, enc_caches, padded, lens = _batch_encode(model, [w for w, _ in batch])

    H = np.zeros((B, model.config.dec_hidden))
    probs, Hs, dec_caches = [], [], []
    for _ in range(steps):
        H, cache = nn.gru_step_batch(model.decoder, contexts, H)
        Hs.append(H)
        dec_caches.append(cache)
        probs.append(nn.output_distribution_batch(model.head, H))

    rows = np.arange(B)
    total = 0.0
    with np.errstate(divide="ignore"):
        for j in range(steps):
            total -= float(np.sum(np.log(probs[j][rows, gold[j]])))
    if not np.isfinite(total):
        raise nn.NumericError(f"transducer loss is not finite: {total}")

    grads = {name: np.zeros_like(p) for name, p in model.param_dict().items()}
    enc_grads = nn.GruGrads.zeros_like(model.encoder)
    dec_grads = nn.GruGrads.zeros_like(model.decoder)

    grad_context = np.zeros_like(contexts)
    carry = np.zeros((B, model.config.dec_hidden))
    for j in range(steps - 1, -1, -1):
        dO = probs[j].copy()
        dO[rows, gold[j]] -= 1.0
        grads["W"] += dO.T @ Hs[j]
        grads["b"] += dO.sum(axis=0)
        dH = dO @ model.head.W + carry
        dX, carry = nn.gru_backward_batch(dec_caches[j], dH, dec_grads)
        grad_context += dX

    gET = np.zeros_like(model.embedding.E.T)
    carry = np.zeros((B, model.config.enc_hidden))
    final_step = lens - 1
    for k in range(len(enc_caches) - 1, -1, -1):
        at_end = final_step == k
        if at_end.any():
            carry[at_end] += grad_context[at_end]
        dX, carry = nn.gru_backward_batch(enc_caches[k], carry, enc_grads)
        np.add.at(gET, padded[:, k], dX)
    grads["E"] += gET.T
    for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
        grads[f"enc.{name}"] += getattr(enc_grads, name)
        grads[f"dec.{name}"] += getattr(dec_grads, name)
    return total, grads

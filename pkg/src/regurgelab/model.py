"""Encoder-decoder translation transformer assembled from tape primitives.

Multi-head attention uses one projection matrix per head so that heads can
be joined with the concat primitive. Residual connections are post-layernorm
with learnable gain/shift applied as separate mul/add parameters. Greedy
decoding captures the full next-token distribution at every emitted step,
including the end-of-sequence step, so downstream scoring can compute
per-sentence entropies.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import (
    AdamState,
    Array,
    Tape,
    Tensor,
    adam_step,
    add,
    backward,
    concat,
    constant,
    cross_entropy,
    embed_lookup,
    load_checkpoint,
    matmul,
    mul,
    parameter,
    relu,
    save_checkpoint,
    softmax,
    transpose,
)
from .autodiff import layernorm as ln_primitive
from .corpus import BOS, EOS, PAD, SEP, Corpus, SentencePair, Vocab, generated_by
from .errors import ConfigError

MASK_VALUE = -1e9


@dataclass(frozen=True)
class TransformerConfig:
    """Sizes and knobs; num_layers applies to encoder and decoder alike."""

    num_layers: int = 2
    num_heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    max_sequence_length: int = 32
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1 or self.num_heads < 1 or self.d_model < 1 or self.d_ff < 1:
            raise ConfigError("model dimensions must be positive")
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}"
            )
        if self.max_sequence_length < 2:
            raise ConfigError("max_sequence_length must be at least 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        return cls(**d)


def sinusoidal_positions(max_len: int, d_model: int) -> Array:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class TranslationModel:
    """Transformer with a shared embedding table over the joint vocabulary."""

    def __init__(self, config: TransformerConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(config.seed)
        d, dff, H = config.d_model, config.d_ff, config.num_heads
        dh = d // H
        V = len(vocab)

        self._matrix(rng, "embed.table", (V, d), std=1.0 / np.sqrt(d))
        for i in range(config.num_layers):
            self._attention_params(rng, f"enc.{i}.attn", d, dh, H)
            self._norm_params(f"enc.{i}.ln1", d)
            self._ffn_params(rng, f"enc.{i}.ffn", d, dff)
            self._norm_params(f"enc.{i}.ln2", d)
        for i in range(config.num_layers):
            self._attention_params(rng, f"dec.{i}.self", d, dh, H)
            self._norm_params(f"dec.{i}.ln1", d)
            self._attention_params(rng, f"dec.{i}.cross", d, dh, H)
            self._norm_params(f"dec.{i}.ln2", d)
            self._ffn_params(rng, f"dec.{i}.ffn", d, dff)
            self._norm_params(f"dec.{i}.ln3", d)
        self._matrix(rng, "out.w", (d, V))
        self._zeros("out.b", (V,))

        self._pe = sinusoidal_positions(config.max_sequence_length, d)
        self._scale = constant(np.array(1.0 / np.sqrt(dh)), name="attn.scale")
        self._embed_scale = constant(np.array(np.sqrt(float(d))), name="embed.scale")

    def _matrix(self, rng, name: str, shape: tuple[int, int], std: float | None = None) -> None:
        std = 1.0 / np.sqrt(shape[0]) if std is None else std
        self.params[name] = parameter(rng.normal(0.0, std, size=shape), name)

    def _zeros(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = parameter(np.zeros(shape), name)

    def _ones(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = parameter(np.ones(shape), name)

    def _attention_params(self, rng, prefix: str, d: int, dh: int, H: int) -> None:
        for h in range(H):
            self._matrix(rng, f"{prefix}.h{h}.wq", (d, dh))
            self._matrix(rng, f"{prefix}.h{h}.wk", (d, dh))
            self._matrix(rng, f"{prefix}.h{h}.wv", (d, dh))
        self._matrix(rng, f"{prefix}.wo", (d, d))
        self._zeros(f"{prefix}.bo", (d,))

    def _norm_params(self, prefix: str, d: int) -> None:
        self._ones(f"{prefix}.gain", (d,))
        self._zeros(f"{prefix}.bias", (d,))

    def _ffn_params(self, rng, prefix: str, d: int, dff: int) -> None:
        self._matrix(rng, f"{prefix}.w1", (d, dff))
        self._zeros(f"{prefix}.b1", (dff,))
        self._matrix(rng, f"{prefix}.w2", (dff, d))
        self._zeros(f"{prefix}.b2", (d,))

    @property
    def param_list(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _dropout(self, tape: Tape, x: Tensor, train: bool, rng) -> Tensor:
        p = self.config.dropout_rate
        if not train or p == 0.0 or rng is None:
            return x
        keep = (rng.random(x.data.shape) >= p).astype(np.float64) / (1.0 - p)
        return mul(tape, x, constant(keep, name="dropout.mask"))

    def _norm(self, tape: Tape, prefix: str, x: Tensor) -> Tensor:
        y = ln_primitive(tape, x)
        y = mul(tape, y, self.params[f"{prefix}.gain"])
        return add(tape, y, self.params[f"{prefix}.bias"])

    def _attention(self, tape: Tape, prefix: str, q_in: Tensor, kv_in: Tensor,
                   mask: Tensor | None) -> Tensor:
        heads = []
        for h in range(self.config.num_heads):
            q = matmul(tape, q_in, self.params[f"{prefix}.h{h}.wq"])
            k = matmul(tape, kv_in, self.params[f"{prefix}.h{h}.wk"])
            v = matmul(tape, kv_in, self.params[f"{prefix}.h{h}.wv"])
            scores = matmul(tape, q, transpose(tape, k, axes=(0, 2, 1)))
            scores = mul(tape, scores, self._scale)
            if mask is not None:
                scores = add(tape, scores, mask)
            heads.append(matmul(tape, softmax(tape, scores), v))
        joined = heads[0] if len(heads) == 1 else concat(tape, *heads, axis=-1)
        out = matmul(tape, joined, self.params[f"{prefix}.wo"])
        return add(tape, out, self.params[f"{prefix}.bo"])

    def _ffn(self, tape: Tape, prefix: str, x: Tensor) -> Tensor:
        h = relu(tape, add(tape, matmul(tape, x, self.params[f"{prefix}.w1"]),
                           self.params[f"{prefix}.b1"]))
        return add(tape, matmul(tape, h, self.params[f"{prefix}.w2"]),
                   self.params[f"{prefix}.b2"])

    def _embed(self, tape: Tape, ids: Array) -> Tensor:
        emb = embed_lookup(tape, self.params["embed.table"],
                           constant(ids.astype(np.float64), name="ids"))
        x = mul(tape, emb, self._embed_scale)
        return add(tape, x, constant(self._pe[: ids.shape[1]], name="pe"))

    def encode(self, tape: Tape, src_ids: Array, train: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        """Returns (encoder states [B,Ts,d], source key mask [B,1,Ts])."""
        if src_ids.shape[1] > self.config.max_sequence_length:
            raise ConfigError(
                f"source length {src_ids.shape[1]} exceeds max_sequence_length"
            )
        mask = constant(
            np.where(src_ids == 0, MASK_VALUE, 0.0)[:, None, :], name="src.mask"
        )
        x = self._embed(tape, src_ids)
        for i in range(self.config.num_layers):
            a = self._dropout(tape, self._attention(tape, f"enc.{i}.attn", x, x, mask), train, rng)
            x = self._norm(tape, f"enc.{i}.ln1", add(tape, x, a))
            f = self._dropout(tape, self._ffn(tape, f"enc.{i}.ffn", x), train, rng)
            x = self._norm(tape, f"enc.{i}.ln2", add(tape, x, f))
        return x, mask

    def decode(self, tape: Tape, tgt_in_ids: Array, enc_out: Tensor, src_mask: Tensor,
               train: bool = False, rng=None) -> Tensor:
        """Next-token probabilities [B,Tt,V] for teacher-forced inputs."""
        B, Tt = tgt_in_ids.shape
        if Tt > self.config.max_sequence_length:
            raise ConfigError(f"target length {Tt} exceeds max_sequence_length")
        causal = np.triu(np.full((Tt, Tt), MASK_VALUE), k=1)
        pad = np.where(tgt_in_ids == 0, MASK_VALUE, 0.0)[:, None, :]
        self_mask = constant(causal[None, :, :] + pad, name="dec.mask")
        x = self._embed(tape, tgt_in_ids)
        for i in range(self.config.num_layers):
            a = self._dropout(tape, self._attention(tape, f"dec.{i}.self", x, x, self_mask), train, rng)
            x = self._norm(tape, f"dec.{i}.ln1", add(tape, x, a))
            c = self._dropout(tape, self._attention(tape, f"dec.{i}.cross", x, enc_out, src_mask), train, rng)
            x = self._norm(tape, f"dec.{i}.ln2", add(tape, x, c))
            f = self._dropout(tape, self._ffn(tape, f"dec.{i}.ffn", x), train, rng)
            x = self._norm(tape, f"dec.{i}.ln3", add(tape, x, f))
        logits = add(tape, matmul(tape, x, self.params["out.w"]), self.params["out.b"])
        return softmax(tape, logits)

    def forward_loss(self, tape: Tape, src_ids: Array, tgt_in_ids: Array,
                     target_onehot: Array, num_tokens: int,
                     train: bool = False, rng=None) -> Tensor:
        """Mean cross entropy per non-padding target token."""
        enc_out, src_mask = self.encode(tape, src_ids, train, rng)
        probs = self.decode(tape, tgt_in_ids, enc_out, src_mask, train, rng)
        ce = cross_entropy(tape, probs, constant(target_onehot, name="targets"))
        return mul(tape, ce, constant(np.array(1.0 / num_tokens), name="loss.scale"))


def encode_source(vocab: Vocab, tokens: Sequence[str], max_len: int) -> list[int]:
    """Token ids truncated to leave room for the trailing end marker."""
    ids = [vocab.encode(t) for t in tokens[: max_len - 1]]
    return ids + [vocab.eos_id]


def encode_target(vocab: Vocab, tokens: Sequence[str], max_len: int) -> tuple[list[int], list[int]]:
    """(decoder input, prediction targets): BOS-shifted and EOS-terminated."""
    core = [vocab.encode(t) for t in tokens[: max_len - 1]]
    return [vocab.bos_id] + core, core + [vocab.eos_id]


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int = 0) -> Array:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def make_training_batch(vocab: Vocab, pairs: Sequence[SentencePair],
                        max_len: int) -> tuple[Array, Array, Array, int]:
    """Returns (src_ids, tgt_in_ids, target_onehot, num_target_tokens).

    Padding rows in the one-hot target block are all zero, which removes
    them from the loss.
    """
    src = pad_batch([encode_source(vocab, p.source, max_len) for p in pairs], vocab.pad_id)
    tgt_in_seqs, tgt_out_seqs = [], []
    for p in pairs:
        t_in, t_out = encode_target(vocab, p.target, max_len)
        tgt_in_seqs.append(t_in)
        tgt_out_seqs.append(t_out)
    tgt_in = pad_batch(tgt_in_seqs, vocab.pad_id)
    tgt_out = pad_batch(tgt_out_seqs, vocab.pad_id)
    B, T = tgt_out.shape
    onehot = np.zeros((B, T, len(vocab)), dtype=np.float64)
    rows, cols = np.nonzero(tgt_out != vocab.pad_id)
    onehot[rows, cols, tgt_out[rows, cols]] = 1.0
    return src, tgt_in, onehot, int(len(rows))


def train_batches(model: TranslationModel, corpus: Corpus, batch_size: int,
                  num_steps: int, adam: AdamState, seed: int) -> list[float]:
    """Run ``num_steps`` minibatch updates; returns the per-step loss trace.

    Examples stream from seeded epoch permutations; a new permutation is
    drawn whenever the previous epoch is exhausted, so batches can straddle
    epoch boundaries but every example appears once per epoch.
    """
    if batch_size < 1 or num_steps < 0:
        raise ConfigError("batch_size must be positive and num_steps non-negative")
    if len(corpus) == 0:
        raise ConfigError("cannot train on an empty corpus")
    order_rng = np.random.default_rng([seed, 0])
    dropout_rng = np.random.default_rng([seed, 1])
    queue: list[int] = []
    losses: list[float] = []
    pairs = corpus.pairs
    max_len = model.config.max_sequence_length
    for _ in range(num_steps):
        batch_idx: list[int] = []
        while len(batch_idx) < min(batch_size, len(pairs)):
            if not queue:
                queue = order_rng.permutation(len(pairs)).tolist()
            batch_idx.append(queue.pop())
        batch = [pairs[i] for i in batch_idx]
        src, tgt_in, onehot, n_tok = make_training_batch(model.vocab, batch, max_len)
        tape = Tape()
        loss = model.forward_loss(tape, src, tgt_in, onehot, n_tok,
                                  train=True, rng=dropout_rng)
        grads = backward(tape, loss, params=model.param_list)
        adam_step(adam, grads)
        losses.append(float(loss.data))
    return losses


@dataclass(frozen=True)
class GenerationRecord:
    """One greedy decode: emitted ids, surface tokens, and per-step
    probability rows (one row per emitted token, end marker included)."""

    source_tokens: tuple[str, ...]
    token_ids: tuple[int, ...]
    tokens: tuple[str, ...]
    prob_rows: Array
    mode: str = "greedy"

    def __post_init__(self):
        rows = np.asarray(self.prob_rows, dtype=np.float64)
        object.__setattr__(self, "prob_rows", rows)
        if rows.ndim != 2 or rows.shape[0] != len(self.token_ids) or rows.shape[0] < 1:
            raise ConfigError(
                f"prob_rows shape {rows.shape} does not match {len(self.token_ids)} emitted tokens"
            )
        if np.abs(rows.sum(axis=-1) - 1.0).max() > 1e-9:
            raise ConfigError("probability rows must each sum to 1")
        if self.mode == "greedy" and not np.array_equal(
            rows.argmax(axis=-1), np.asarray(self.token_ids)
        ):
            raise ConfigError("greedy records must emit the argmax token at every step")


_STRUCTURAL = (PAD, BOS, EOS, SEP)


def _translate_chunk(model: TranslationModel, sources: Sequence[Sequence[str]],
                     max_len: int) -> list[GenerationRecord]:
    vocab = model.vocab
    cfg_len = model.config.max_sequence_length
    src = pad_batch([encode_source(vocab, s, cfg_len) for s in sources], vocab.pad_id)
    tape = Tape()
    enc_out, src_mask = model.encode(tape, src)
    B = len(sources)
    ys = np.full((B, 1), vocab.bos_id, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    rows: list[list[Array]] = [[] for _ in range(B)]
    ids: list[list[int]] = [[] for _ in range(B)]
    for _ in range(max_len):
        probs = model.decode(tape, ys, enc_out, src_mask)
        last = probs.data[:, -1, :]
        picks = last.argmax(axis=-1)
        for b in range(B):
            if done[b]:
                continue
            rows[b].append(last[b].copy())
            ids[b].append(int(picks[b]))
            if picks[b] == vocab.eos_id:
                done[b] = True
        if done.all():
            break
        ys = np.concatenate([ys, picks[:, None]], axis=1)
    records = []
    for b in range(B):
        toks = tuple(
            vocab.decode(i) for i in ids[b] if vocab.decode(i) not in _STRUCTURAL
        )
        records.append(GenerationRecord(
            source_tokens=tuple(sources[b]),
            token_ids=tuple(ids[b]),
            tokens=toks,
            prob_rows=np.stack(rows[b]),
        ))
    return records


def translate(model: TranslationModel, sources: Sequence[Sequence[str]],
              max_len: int | None = None, batch_size: int = 64,
              threads: int | None = None) -> list[GenerationRecord]:
    """Greedy-decode every source; deterministic for a fixed batch_size.

    Decoding stops at the end marker or after ``max_len`` emitted tokens
    (at most max_sequence_length). ``threads`` defaults to the
    REGURGELAB_THREADS environment variable; model parameters are read-only
    during decoding so worker threads share them safely.
    """
    if not sources:
        return []
    if max_len is None:
        max_len = model.config.max_sequence_length
    if not 1 <= max_len <= model.config.max_sequence_length:
        raise ConfigError(f"max_len must be in [1, {model.config.max_sequence_length}]")
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if threads is None:
        threads = int(os.environ.get("REGURGELAB_THREADS", "1"))
    chunks = [sources[i: i + batch_size] for i in range(0, len(sources), batch_size)]
    if threads <= 1 or len(chunks) == 1:
        out: list[GenerationRecord] = []
        for chunk in chunks:
            out.extend(_translate_chunk(model, chunk, max_len))
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = pool.map(lambda c: _translate_chunk(model, c, max_len), chunks)
        return [rec for batch in results for rec in batch]


def generate_synthetic_corpus(
    model: TranslationModel,
    sources: Sequence[Sequence[str]],
    model_id: str,
    max_len: int | None = None,
    batch_size: int = 64,
    threads: int | None = None,
) -> tuple[Corpus, list[GenerationRecord]]:
    """Translate each source once and wrap the outputs as a labelled corpus.

    A degenerate decode that emits no content tokens falls back to a single
    unknown-word target so the pair stays well formed.
    """
    records = translate(model, sources, max_len=max_len, batch_size=batch_size, threads=threads)
    provenance = generated_by(model_id)
    pairs = []
    for src, rec in zip(sources, records):
        target = rec.tokens if rec.tokens else ("<unk>",)
        pairs.append(SentencePair(tuple(src), target, provenance=provenance))
    return Corpus(tuple(pairs), id=f"synthetic:{model_id}"), records


def export_records_jsonl(records: Sequence[GenerationRecord], path: str | Path,
                         include_probs: bool = False) -> None:
    from .mitigation import translation_entropy

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            row = {
                "source": list(rec.source_tokens),
                "tokens": list(rec.tokens),
                "token_ids": list(rec.token_ids),
                "entropy": translation_entropy(rec),
                "mode": rec.mode,
            }
            if include_probs:
                row["probs"] = [[float(x) for x in r] for r in rec.prob_rows]
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def save_model(model: TranslationModel, path: str | Path,
               extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "translation-transformer",
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
    }
    if extra_meta:
        meta["extra"] = extra_meta
    save_checkpoint(path, dict(model.params), meta)


def load_model(path: str | Path) -> TranslationModel:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "translation-transformer":
        raise ValueError(f"{path} does not hold a translation model")
    config = TransformerConfig.from_dict(meta["config"])
    vocab = Vocab.from_dict(meta["vocab"])
    model = TranslationModel(config, vocab)
    for name, tensor in model.params.items():
        if name not in tensors:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        if tensors[name].shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint parameter {name!r} has shape {tensors[name].shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = tensors[name].copy()
    return model

"""Tiny encoder-decoder recognizer with language-tag conditioned decoding.

The encoder projects acoustic feature frames, mixes them with one
self-attention layer, and refines with a feed-forward block. The decoder is
a single layer of causal self-attention, cross-attention (with a learned
relative-offset bias so monotonic alignment is easy to pick up), and a
feed-forward block. Output logits share the input embedding table (tied).

Decoding is conditioned on a prefix [start, language, task]: the language
slot holds either a learned tag-embedding row or an arbitrary injected
vector, which is the hook every blending method in this package relies on.

Token index layout: transcript tokens first, then the three special tokens,
then language tags last, so appending a new language keeps the tag block
contiguous.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import IllegalStateError, InvalidArgumentError, IoError, ParseError
from .lbt import read_tensor, write_tensor


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    feature_dim: int = 16
    transcript_vocab: int = 32
    num_language_tags: int = 12
    ffn_dim: int = 128
    max_decode_len: int = 16
    max_positions: int = 64
    rel_bias_range: int = 16

    def __post_init__(self):
        if self.d_model < 8 or self.d_model % 2 != 0:
            raise InvalidArgumentError("d_model must be even and >= 8")
        if min(self.feature_dim, self.ffn_dim, self.max_decode_len) < 1:
            raise InvalidArgumentError("dims and decode length must be >= 1")
        if self.transcript_vocab < 2 or self.num_language_tags < 1:
            raise InvalidArgumentError("need transcript_vocab >= 2 and >= 1 language tag")
        if self.max_positions < self.max_decode_len + 4:
            raise InvalidArgumentError("max_positions too small for max_decode_len")
        if self.rel_bias_range < 1:
            raise InvalidArgumentError("rel_bias_range must be >= 1")

    @property
    def sot(self) -> int:
        return self.transcript_vocab

    @property
    def transcribe(self) -> int:
        return self.transcript_vocab + 1

    @property
    def eot(self) -> int:
        return self.transcript_vocab + 2

    @property
    def tag_start(self) -> int:
        return self.transcript_vocab + 3

    @property
    def base_vocab(self) -> int:
        return self.tag_start + self.num_language_tags


class EmbeddingTable:
    """Tied token table: a base matrix plus individually appended tag rows."""

    def __init__(self, base: ad.Parameter, tag_start: int):
        self.base = base
        self.tag_start = tag_start
        self.extra_rows: list[ad.Parameter] = []

    @property
    def num_rows(self) -> int:
        return self.base.data.shape[0] + len(self.extra_rows)

    @property
    def dim(self) -> int:
        return self.base.data.shape[1]

    @property
    def tag_range(self) -> range:
        return range(self.tag_start, self.num_rows)

    def node(self) -> ad.Tensor:
        """One graph node serving both lookup and output projection."""
        if not self.extra_rows:
            return self.base
        return ad.concat_rows([self.base, *self.extra_rows])

    def row_values(self, index: int) -> np.ndarray:
        if not 0 <= index < self.num_rows:
            raise InvalidArgumentError(f"row {index} out of range")
        nbase = self.base.data.shape[0]
        if index < nbase:
            return self.base.data[index].copy()
        return self.extra_rows[index - nbase].data.copy()

    def tag_matrix(self) -> np.ndarray:
        """Current tag rows as a float64 (num_tags, dim) matrix."""
        rows = [self.row_values(i) for i in self.tag_range]
        return np.asarray(rows, dtype=np.float64)

    def append_tag(self, values: np.ndarray, trainable: bool = True) -> int:
        values = np.asarray(values, dtype=np.float32)
        if values.shape != (self.dim,):
            raise InvalidArgumentError(f"tag row must have shape ({self.dim},)")
        self.extra_rows.append(ad.Parameter(values.copy(), trainable=trainable))
        return self.num_rows - 1


@dataclass
class Adapter:
    """Low-rank residual on one weight matrix: W_eff = W + (alpha/rank) A B."""

    a: ad.Parameter  # (d_in, rank)
    b: ad.Parameter  # (rank, d_out)
    rank: int
    alpha: float
    dropout: float


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    i = np.arange(dim // 2)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.zeros((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe.astype(np.float32)


# Weight matrices that may carry adapters; everything decoder-side.
DECODER_MATRICES = (
    "dec_sq", "dec_sk", "dec_sv", "dec_so",
    "dec_cq", "dec_ck", "dec_cv", "dec_co",
    "dec_f1", "dec_f2",
)


class TinyASR:
    """The recognizer. All state is numpy; forward passes build fresh graphs."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        d, f, h = config.d_model, config.feature_dim, config.ffn_dim

        def mat(n_in, n_out):
            return ad.Parameter((rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)).astype(np.float32))

        def vec(n):
            return ad.Parameter(np.zeros(n, dtype=np.float32))

        self.params: dict[str, ad.Parameter] = {}
        p = self.params
        p["enc_in"] = mat(f, d)
        p["enc_in_b"] = vec(d)
        for name in ("enc_q", "enc_k", "enc_v", "enc_o"):
            p[name] = mat(d, d)
        p["enc_f1"] = mat(d, h)
        p["enc_f1_b"] = vec(h)
        p["enc_f2"] = mat(h, d)
        p["enc_f2_b"] = vec(d)
        for name in ("dec_sq", "dec_sk", "dec_sv", "dec_so", "dec_cq", "dec_ck", "dec_cv", "dec_co"):
            p[name] = mat(d, d)
        p["dec_f1"] = mat(d, h)
        p["dec_f1_b"] = vec(h)
        p["dec_f2"] = mat(h, d)
        p["dec_f2_b"] = vec(d)
        p["rel_bias"] = vec(2 * config.rel_bias_range + 1)

        base = ad.Parameter(
            (rng.standard_normal((config.base_vocab, d)) / np.sqrt(d)).astype(np.float32)
        )
        self.table = EmbeddingTable(base, config.tag_start)
        self.positions = sinusoidal_positions(config.max_positions, d)
        self.adapters: dict[str, Adapter] = {}
        self.training = False
        self._dropout_rng: np.random.Generator | None = None

    # -- parameter bookkeeping ------------------------------------------------

    def base_parameters(self) -> dict[str, ad.Parameter]:
        out = dict(self.params)
        out["embed"] = self.table.base
        for i, row in enumerate(self.table.extra_rows):
            out[f"tag_row_{i}"] = row
        return out

    def adapter_parameters(self) -> dict[str, ad.Parameter]:
        out = {}
        for name, a in self.adapters.items():
            out[f"{name}.adapter_a"] = a.a
            out[f"{name}.adapter_b"] = a.b
        return out

    def all_parameters(self) -> dict[str, ad.Parameter]:
        return {**self.base_parameters(), **self.adapter_parameters()}

    def set_train_mode(self, training: bool, dropout_rng: np.random.Generator | None = None) -> None:
        self.training = training
        self._dropout_rng = dropout_rng

    def clone(self) -> "TinyASR":
        return copy.deepcopy(self)

    def param_fingerprint(self) -> bytes:
        h = hashlib.sha256()
        for name in sorted(self.all_parameters()):
            h.update(name.encode())
            h.update(self.all_parameters()[name].data.tobytes())
        return h.digest()

    # -- forward pieces -------------------------------------------------------

    def _apply(self, name: str, x: ad.Tensor) -> ad.Tensor:
        out = ad.matmul(x, self.params[name])
        adapter = self.adapters.get(name)
        if adapter is not None:
            xin = x
            if self.training and adapter.dropout > 0.0:
                if self._dropout_rng is None:
                    raise IllegalStateError("train mode with dropout needs a dropout rng")
                xin = ad.dropout(x, adapter.dropout, self._dropout_rng)
            low = ad.matmul(ad.matmul(xin, adapter.a), adapter.b)
            out = ad.add(out, ad.scale(low, adapter.alpha / adapter.rank))
        return out

    def _positions_node(self, length: int) -> ad.Tensor:
        if length > self.positions.shape[0]:
            raise InvalidArgumentError(
                f"sequence length {length} exceeds max_positions {self.positions.shape[0]}"
            )
        return ad.constant(self.positions[:length])

    def encode(self, features: np.ndarray) -> ad.Tensor:
        features = np.asarray(features, dtype=np.float32)
        if features.ndim != 2 or features.shape[1] != self.config.feature_dim:
            raise InvalidArgumentError(
                f"features must be (frames, {self.config.feature_dim}), got {features.shape}"
            )
        if features.shape[0] < 1:
            raise InvalidArgumentError("need at least one feature frame")
        d = self.config.d_model
        x = ad.add_rows(ad.matmul(ad.constant(features), self.params["enc_in"]), self.params["enc_in_b"])
        x = ad.add(x, self._positions_node(features.shape[0]))

        q = self._apply("enc_q", x)
        k = self._apply("enc_k", x)
        v = self._apply("enc_v", x)
        att = ad.row_softmax(ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d)))
        x = ad.add(x, self._apply("enc_o", ad.matmul(att, v)))

        hidden = ad.tanh(ad.add_rows(self._apply("enc_f1", x), self.params["enc_f1_b"]))
        x = ad.add(x, ad.add_rows(ad.matmul(hidden, self.params["enc_f2"]), self.params["enc_f2_b"]))
        return x

    def _rel_bias_node(self, dec_len: int, enc_len: int) -> ad.Tensor:
        r = self.config.rel_bias_range
        offs = np.arange(dec_len)[:, None] - np.arange(enc_len)[None, :]
        idx = np.clip(offs + r, 0, 2 * r)
        return ad.gather(self.params["rel_bias"], idx)

    def decoder_logits(self, enc: ad.Tensor, prefix: ad.Tensor) -> ad.Tensor:
        """Logits at every prefix position, over the full current vocabulary.

        The language-slot vector (prefix row 1) is broadcast additively to
        every later position, so output mapping can condition on the language
        without routing through the single attention head. Positions 0 and 1
        never see it, which keeps the first decode step a clean language
        identifier.
        """
        d = self.config.d_model
        length = prefix.data.shape[0]
        x = ad.add(prefix, self._positions_node(length))
        if length > 2:
            lang_vec = ad.gather(prefix, np.asarray(1))
            head = ad.slice_rows(x, 0, 2)
            tail = ad.add_rows(ad.slice_rows(x, 2, length), lang_vec)
            x = ad.concat_rows([head, tail])

        q = self._apply("dec_sq", x)
        k = self._apply("dec_sk", x)
        v = self._apply("dec_sv", x)
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d))
        mask = np.triu(np.full((length, length), -1e9, dtype=np.float32), k=1)
        att = ad.row_softmax(ad.add(scores, ad.constant(mask)))
        x = ad.add(x, self._apply("dec_so", ad.matmul(att, v)))

        q = self._apply("dec_cq", x)
        k = self._apply("dec_ck", enc)
        v = self._apply("dec_cv", enc)
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d))
        scores = ad.add(scores, self._rel_bias_node(length, enc.data.shape[0]))
        att = ad.row_softmax(scores)
        x = ad.add(x, self._apply("dec_co", ad.matmul(att, v)))

        hidden = ad.tanh(ad.add_rows(self._apply("dec_f1", x), self.params["dec_f1_b"]))
        x = ad.add(x, ad.add_rows(ad.matmul(hidden, self.params["dec_f2"]), self.params["dec_f2_b"]))

        return ad.matmul(x, ad.transpose(self.table.node()))

    # -- language slot handling ----------------------------------------------

    def _language_node(self, language) -> ad.Tensor:
        """The vector occupying the prefix's language slot.

        Accepts a tag index (embedding row), a plain vector (used verbatim),
        or a graph tensor (gradients flow into it).
        """
        if isinstance(language, ad.Tensor):
            if language.data.shape != (self.config.d_model,):
                raise InvalidArgumentError("language tensor must have shape (d_model,)")
            return language
        if isinstance(language, (int, np.integer)):
            if int(language) not in self.table.tag_range:
                raise InvalidArgumentError(
                    f"tag index {language} outside tag range "
                    f"[{self.table.tag_start}, {self.table.num_rows})"
                )
            return ad.gather(self.table.node(), np.array([int(language)]))
        vec = np.asarray(language, dtype=np.float32)
        if vec.shape != (self.config.d_model,):
            raise InvalidArgumentError(f"language vector must have shape ({self.config.d_model},)")
        return ad.constant(vec)

    def build_prefix(self, language, tokens: np.ndarray | list[int]) -> ad.Tensor:
        """[start, language, task, tokens...] as embedded rows."""
        tokens = np.asarray(tokens, dtype=np.int64)
        table_node = self.table.node()
        parts = [
            ad.gather(table_node, np.array([self.config.sot])),
            self._language_node(language),
            ad.gather(table_node, np.concatenate(([self.config.transcribe], tokens))),
        ]
        return ad.concat_rows(parts)

    def embed_prefix(self, language) -> np.ndarray:
        """The three prefix rows as a plain (3, d_model) float32 matrix."""
        with ad.no_grad():
            return self.build_prefix(language, []).data.copy()

    # -- inference ------------------------------------------------------------

    def next_token_logits(self, features: np.ndarray, prefix_vectors: np.ndarray) -> np.ndarray:
        """Logits for the token following the given embedded prefix."""
        prefix_vectors = np.asarray(prefix_vectors, dtype=np.float32)
        if prefix_vectors.ndim != 2 or prefix_vectors.shape[1] != self.config.d_model:
            raise InvalidArgumentError("prefix_vectors must be (length, d_model)")
        with ad.no_grad():
            enc = self.encode(features)
            logits = self.decoder_logits(enc, ad.constant(prefix_vectors))
        return logits.data[-1].copy()

    def tag_logits(self, features: np.ndarray) -> np.ndarray:
        """Language-tag logits at the first decode step, given only start."""
        sot_row = self.table.row_values(self.config.sot)[None, :]
        logits = self.next_token_logits(features, sot_row)
        return logits[self.table.tag_start :].astype(np.float64)

    def greedy_decode(self, features: np.ndarray, language) -> np.ndarray:
        """Argmax decoding until end-of-transcript or the length cap.

        Ties break toward the lowest token index. The returned sequence
        excludes prefix and end tokens.
        """
        with ad.no_grad():
            enc = self.encode(features)
            rows = [self.embed_prefix(language)]
            out: list[int] = []
            while len(out) < self.config.max_decode_len:
                prefix = ad.constant(np.concatenate(rows, axis=0))
                logits = self.decoder_logits(enc, prefix).data[-1]
                token = int(np.argmax(logits))
                if token == self.config.eot:
                    break
                out.append(token)
                rows.append(self.table.row_values(token)[None, :])
        return np.asarray(out, dtype=np.int64)

    def add_language_tag(self, init="mean_of_tags", rng: np.random.Generator | None = None,
                         sigma: float = 0.01, trainable: bool = True) -> int:
        """Append a tag row; returns its token index."""
        if init == "mean_of_tags":
            values = self.table.tag_matrix().mean(axis=0).astype(np.float32)
        elif init == "gaussian":
            if rng is None:
                raise InvalidArgumentError("gaussian init needs an rng")
            values = (sigma * rng.standard_normal(self.config.d_model)).astype(np.float32)
        else:
            raise InvalidArgumentError(f"unknown tag init {init!r}")
        return self.table.append_tag(values, trainable=trainable)

    # -- persistence ----------------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        params_dir = out_dir / "params"
        try:
            params_dir.mkdir(parents=True, exist_ok=True)
            meta = {
                "config": asdict(self.config),
                "extra_tags": len(self.table.extra_rows),
                "extra_tags_trainable": [r.trainable for r in self.table.extra_rows],
            }
            (out_dir / "config.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        except OSError as e:
            raise IoError(f"cannot write checkpoint {out_dir}: {e}") from e
        if self.adapters:
            raise IllegalStateError("merge or drop adapters before saving a checkpoint")
        for name, param in self.base_parameters().items():
            write_tensor(params_dir / f"{name}.lbt", param.data)

    @classmethod
    def load(cls, out_dir: str | Path) -> "TinyASR":
        out_dir = Path(out_dir)
        meta_path = out_dir / "config.json"
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read checkpoint {meta_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON ({e.msg})", path=str(meta_path)) from e
        model = cls(ModelConfig(**meta["config"]), seed=0)
        params_dir = out_dir / "params"
        for name, param in model.base_parameters().items():
            data = read_tensor(params_dir / f"{name}.lbt")
            if data.shape != param.data.shape:
                raise ParseError(f"shape mismatch for {name}", path=str(params_dir / name))
            param.data = data
        for i in range(int(meta["extra_tags"])):
            data = read_tensor(params_dir / f"tag_row_{i}.lbt")
            model.table.append_tag(data, trainable=bool(meta["extra_tags_trainable"][i]))
        return model

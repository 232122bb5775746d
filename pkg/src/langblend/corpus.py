"""Synthetic multilingual benchmark: families of related toy languages.

Languages are built from a shared inventory of "sounds". Each family has a
prototype acoustic basis (one feature row per sound) and a family offset
vector; every language in the family perturbs the prototype, shifts by its
own identity offset, and draws its own sound unigram. On top of that each
language has an orthography: a family-base permutation of token indices with
a few private swaps. Features depend on sounds, transcripts on tokens, so
transcribing correctly requires knowing which language is being written,
siblings write almost alike, and an unseen sibling is closest to the family
consensus, never to any single seen language.

Utterances are (feature matrix, token sequence) pairs:

    features[t] = basis[sound_t] + offset + noise_sigma * N(0, I)
    tokens[t]   = orthography[sound_t]

Corpora serialize as JSONL manifests (one utterance per line) with feature
matrices in sibling LBT1 files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, IoError, ParseError
from .lbt import read_tensor, write_tensor

MANIFEST_FIELDS = ("id", "lang", "text", "features_file")


@dataclass(frozen=True)
class CorpusParams:
    """Benchmark shape and family geometry knobs."""

    num_families: int = 3
    seen_per_family: int = 4
    unseen_per_family: int = 1
    utterances_per_split: int = 50
    transcript_vocab: int = 32
    feature_dim: int = 16
    min_len: int = 4
    max_len: int = 10
    basis_scale: float = 1.0
    family_scale: float = 2.0
    lang_spread: float = 0.35
    lang_offset_scale: float = 1.0
    noise_sigma: float = 0.3
    unigram_alpha: float = 2.0
    orthography_swaps: int = 3

    def __post_init__(self):
        if min(self.num_families, self.seen_per_family, self.unseen_per_family) < 1:
            raise InvalidArgumentError("family/language counts must be >= 1")
        if self.utterances_per_split < 1:
            raise InvalidArgumentError("utterances_per_split must be >= 1")
        if self.transcript_vocab < 2 or self.feature_dim < 1:
            raise InvalidArgumentError("transcript_vocab >= 2 and feature_dim >= 1 required")
        if not 1 <= self.min_len <= self.max_len:
            raise InvalidArgumentError("need 1 <= min_len <= max_len")
        if self.noise_sigma < 0 or self.lang_spread < 0:
            raise InvalidArgumentError("spread and noise must be non-negative")
        if self.orthography_swaps < 0 or 2 * self.orthography_swaps > self.transcript_vocab:
            raise InvalidArgumentError("orthography_swaps must fit in the token inventory")


@dataclass(frozen=True)
class LanguageInfo:
    lang_id: str
    family_id: str
    seen: bool


@dataclass(eq=False)
class Utterance:
    """One synthetic recording: float32 (T, F) features plus its token ids."""

    id: str
    lang: str
    transcript: np.ndarray  # int64 (T,)
    features: np.ndarray  # float32 (T, F)

    def __post_init__(self):
        self.transcript = np.asarray(self.transcript, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise InvalidArgumentError("features must be a (frames, dim) matrix")
        if self.transcript.ndim != 1 or self.transcript.size == 0:
            raise InvalidArgumentError("transcript must be a non-empty token vector")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Utterance)
            and self.id == other.id
            and self.lang == other.lang
            and np.array_equal(self.transcript, other.transcript)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )


@dataclass
class Benchmark:
    params: CorpusParams
    seed: int
    languages: list[LanguageInfo]
    train: dict[str, list[Utterance]] = field(repr=False)
    test: dict[str, list[Utterance]] = field(repr=False)

    @property
    def seen_ids(self) -> list[str]:
        return [l.lang_id for l in self.languages if l.seen]

    @property
    def unseen_ids(self) -> list[str]:
        return [l.lang_id for l in self.languages if not l.seen]

    def split(self, name: str) -> dict[str, list[Utterance]]:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise InvalidArgumentError(f"unknown split {name!r} (want 'train' or 'test')")


def _swap_some(base: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Apply k transpositions on disjoint positions of a permutation."""
    perm = base.copy()
    if k:
        slots = rng.choice(base.size, size=2 * k, replace=False)
        for i in range(k):
            a, b = slots[2 * i], slots[2 * i + 1]
            perm[a], perm[b] = perm[b], perm[a]
    return perm


def _sample_utterances(
    basis: np.ndarray,
    offset: np.ndarray,
    orthography: np.ndarray,
    unigram: np.ndarray,
    lang_id: str,
    split: str,
    count: int,
    params: CorpusParams,
    rng: np.random.Generator,
) -> list[Utterance]:
    out = []
    for k in range(count):
        length = int(rng.integers(params.min_len, params.max_len + 1))
        sounds = rng.choice(params.transcript_vocab, size=length, p=unigram)
        noise = params.noise_sigma * rng.standard_normal((length, params.feature_dim))
        feats = (basis[sounds] + offset[None, :] + noise).astype(np.float32)
        out.append(
            Utterance(
                id=f"{lang_id}.{split}.{k:04d}",
                lang=lang_id,
                transcript=orthography[sounds],
                features=feats,
            )
        )
    return out


def generate_benchmark(params: CorpusParams, seed: int) -> Benchmark:
    """Deterministically synthesize all languages and their train/test splits."""
    root = np.random.SeedSequence(seed)
    family_seeds = root.spawn(params.num_families)

    languages: list[LanguageInfo] = []
    train: dict[str, list[Utterance]] = {}
    test: dict[str, list[Utterance]] = {}
    seen_infos, unseen_infos = [], []

    for f, fam_ss in enumerate(family_seeds):
        family_id = f"fam{f}"
        n_langs = params.seen_per_family + params.unseen_per_family
        children = fam_ss.spawn(1 + n_langs)
        fam_rng = np.random.default_rng(children[0])
        prototype = params.basis_scale * fam_rng.standard_normal(
            (params.transcript_vocab, params.feature_dim)
        )
        offset = params.family_scale * fam_rng.standard_normal(params.feature_dim)
        base_orthography = fam_rng.permutation(params.transcript_vocab)

        for i in range(n_langs):
            seen = i < params.seen_per_family
            role = "seen" if seen else "unseen"
            idx = i if seen else i - params.seen_per_family
            lang_id = f"{family_id}_{role}{idx}"
            lang_children = children[1 + i].spawn(3)
            lang_rng = np.random.default_rng(lang_children[0])
            basis = prototype + params.lang_spread * lang_rng.standard_normal(prototype.shape)
            # language identity cue: a per-language shift around the family
            # offset, smaller than the family separation so siblings still
            # cluster together
            lang_offset = offset + params.lang_offset_scale * lang_rng.standard_normal(
                params.feature_dim
            )
            orthography = _swap_some(base_orthography, params.orthography_swaps, lang_rng)
            unigram = lang_rng.dirichlet(np.full(params.transcript_vocab, params.unigram_alpha))

            info = LanguageInfo(lang_id=lang_id, family_id=family_id, seen=seen)
            (seen_infos if seen else unseen_infos).append(info)
            for split, split_ss in (("train", lang_children[1]), ("test", lang_children[2])):
                utts = _sample_utterances(
                    basis,
                    lang_offset,
                    orthography,
                    unigram,
                    lang_id,
                    split,
                    params.utterances_per_split,
                    params,
                    np.random.default_rng(split_ss),
                )
                (train if split == "train" else test)[lang_id] = utts

    languages = seen_infos + unseen_infos
    return Benchmark(params=params, seed=seed, languages=languages, train=train, test=test)


def family_similarity(benchmark: Benchmark) -> tuple[float, float]:
    """Mean cosine similarity of per-language mean feature vectors,
    (within-family, cross-family)."""
    means, fams = [], []
    for info in benchmark.languages:
        feats = np.concatenate([u.features for u in benchmark.train[info.lang_id]], axis=0)
        means.append(feats.mean(axis=0))
        fams.append(info.family_id)
    within, cross = [], []
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            a, b = means[i], means[j]
            cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))
            (within if fams[i] == fams[j] else cross).append(cos)
    return float(np.mean(within)), float(np.mean(cross))


def save_manifest(utterances: list[Utterance], manifest_path: str | Path) -> None:
    """Write a JSONL manifest; feature matrices land in features/ next to it."""
    manifest_path = Path(manifest_path)
    feat_dir = manifest_path.parent / "features"
    try:
        feat_dir.mkdir(parents=True, exist_ok=True)
        with open(manifest_path, "w", encoding="utf-8") as f:
            for u in utterances:
                rel = f"features/{u.id}.lbt"
                write_tensor(manifest_path.parent / rel, u.features)
                record = {
                    "id": u.id,
                    "lang": u.lang,
                    "text": " ".join(str(int(t)) for t in u.transcript),
                    "features_file": rel,
                }
                f.write(json.dumps(record) + "\n")
    except OSError as e:
        raise IoError(f"cannot write manifest {manifest_path}: {e}") from e


def load_manifest(manifest_path: str | Path) -> list[Utterance]:
    """Read a JSONL manifest; feature paths resolve relative to the manifest."""
    manifest_path = Path(manifest_path)
    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(f"cannot read manifest {manifest_path}: {e}") from e

    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON ({e.msg})", path=str(manifest_path), line=n) from e
        if not isinstance(record, dict):
            raise ParseError("line is not a JSON object", path=str(manifest_path), line=n)
        missing = [k for k in MANIFEST_FIELDS if k not in record]
        if missing:
            raise ParseError(f"missing field {missing[0]!r}", path=str(manifest_path), line=n)
        extra = [k for k in record if k not in MANIFEST_FIELDS]
        if extra:
            raise ParseError(f"unknown field {extra[0]!r}", path=str(manifest_path), line=n)
        try:
            transcript = np.array([int(t) for t in str(record["text"]).split()], dtype=np.int64)
        except ValueError as e:
            raise ParseError("text must be space-separated integers", path=str(manifest_path), line=n) from e
        if transcript.size == 0:
            raise ParseError("empty transcript", path=str(manifest_path), line=n)
        features = read_tensor(manifest_path.parent / record["features_file"])
        if features.ndim != 2:
            raise ParseError(
                f"features for {record['id']} must be rank 2", path=str(manifest_path), line=n
            )
        out.append(
            Utterance(
                id=str(record["id"]),
                lang=str(record["lang"]),
                transcript=transcript,
                features=features,
            )
        )
    return out


def save_benchmark(benchmark: Benchmark, out_dir: str | Path) -> None:
    """Persist the whole benchmark as one directory tree of manifests."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "params": asdict(benchmark.params),
        "seed": benchmark.seed,
        "languages": [asdict(l) for l in benchmark.languages],
    }
    try:
        (out_dir / "benchmark.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write benchmark metadata: {e}") from e
    for info in benchmark.languages:
        for split in ("train", "test"):
            split_dir = out_dir / info.lang_id / split
            split_dir.mkdir(parents=True, exist_ok=True)
            save_manifest(benchmark.split(split)[info.lang_id], split_dir / "manifest.jsonl")


def load_benchmark(out_dir: str | Path) -> Benchmark:
    out_dir = Path(out_dir)
    meta_path = out_dir / "benchmark.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"cannot read benchmark metadata {meta_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON ({e.msg})", path=str(meta_path)) from e
    for key in ("params", "seed", "languages"):
        if key not in meta:
            raise ParseError(f"missing field {key!r}", path=str(meta_path))
    params = CorpusParams(**meta["params"])
    languages = [LanguageInfo(**l) for l in meta["languages"]]
    train, test = {}, {}
    for info in languages:
        for split, store in (("train", train), ("test", test)):
            store[info.lang_id] = load_manifest(out_dir / info.lang_id / split / "manifest.jsonl")
    return Benchmark(params=params, seed=int(meta["seed"]), languages=languages, train=train, test=test)

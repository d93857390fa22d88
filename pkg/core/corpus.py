"""
Feedback Corpus
===============
Dataset ingestion and preprocessing for the six-tag customer feedback task.

- Tag set and canonical order (comment, complaint, request, bug, meaningless, undetermined)
- TSV loading/writing with line-numbered diagnostics
- Tokenization (word / char), vocabulary building, padding to max_len
- Multi-label replication of training instances
- Pre-trained embedding loading (word2vec text format) and random init
- Synthetic separable corpus for desk-scale acceptance runs
"""

import hashlib
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataFormatError, EmbeddingDimensionError
from .numerics import DTYPE, make_rng, random_uniform_init

logger = logging.getLogger(__name__)

TAGS: Tuple[str, ...] = ("comment", "complaint", "request", "bug", "meaningless", "undetermined")
TAG_INDEX: Dict[str, int] = {tag: i for i, tag in enumerate(TAGS)}
TAG_ABBREVIATIONS: Tuple[str, ...] = ("CO", "CP", "RQ", "BG", "ME", "UD")
NUM_TAGS = len(TAGS)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

TokenizerMode = Literal["word", "char"]
SplitRole = Literal["train", "dev", "test"]

PathLike = Union[str, Path]


# ==================== RECORDS ====================

@dataclass(frozen=True)
class FeedbackRecord:
    """One customer feedback sentence with its gold tags"""
    id: str
    text: str
    tags: FrozenSet[str]

    def __post_init__(self):
        unknown = set(self.tags) - set(TAGS)
        if unknown:
            raise DataFormatError(f"unknown tag(s) {sorted(unknown)} for record {self.id!r}")

    @property
    def sorted_tags(self) -> List[str]:
        """Tags in canonical order"""
        return sorted(self.tags, key=TAG_INDEX.__getitem__)

    @property
    def label_indices(self) -> FrozenSet[int]:
        return frozenset(TAG_INDEX[t] for t in self.tags)


@dataclass(frozen=True)
class DatasetSplit:
    """Records of one split (train, dev or test)"""
    role: str
    records: Tuple[FeedbackRecord, ...]

    def __post_init__(self):
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise DataFormatError(f"duplicate id {record.id!r} in {self.role} split")
            seen.add(record.id)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True, eq=False)
class EncodedExample:
    """A padded index sequence with its label(s)"""
    indices: np.ndarray
    true_length: int
    label_index: int = 0
    gold: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def max_len(self) -> int:
        return int(self.indices.shape[0])

    @property
    def gold_set(self) -> FrozenSet[int]:
        return self.gold or frozenset({self.label_index})


# ==================== TOKENIZATION ====================

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, mode: TokenizerMode = "word") -> List[str]:
    """
    Split text into tokens.

    word: lowercase, split on whitespace, leading/trailing punctuation
          characters detached as separate one-character tokens
    char: one token per Unicode scalar, whitespace dropped
    """
    if mode == "char":
        return [ch for ch in text if not ch.isspace()]
    if mode != "word":
        raise ValueError(f"unknown tokenizer mode {mode!r}")

    tokens: List[str] = []
    for chunk in text.lower().split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(chunk[:start])
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


# ==================== PREPROCESSING ====================

def expand_multilabel(records: Iterable[FeedbackRecord]) -> List[FeedbackRecord]:
    """Replicate each record once per gold tag (canonical tag order)"""
    expanded: List[FeedbackRecord] = []
    for record in records:
        if not record.tags:
            raise DataFormatError(f"record {record.id!r} has no tags to replicate")
        if len(record.tags) == 1:
            expanded.append(record)
            continue
        for tag in record.sorted_tags:
            expanded.append(FeedbackRecord(id=record.id, text=record.text, tags=frozenset({tag})))
    return expanded


class Vocabulary:
    """Token ↔ index map with PAD=0 and UNK=1 reserved"""

    def __init__(self, tokens: Sequence[str] = ()):
        self._itos: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self._stoi: Dict[str, int] = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
        for token in tokens:
            if token in self._stoi:
                raise ValueError(f"duplicate vocabulary token {token!r}")
            self._stoi[token] = len(self._itos)
            self._itos.append(token)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    @property
    def size(self) -> int:
        return len(self._itos)

    @property
    def tokens(self) -> List[str]:
        """All tokens in index order, reserved ones included"""
        return list(self._itos)

    def encode(self, token: str) -> int:
        """Index of token; unknown tokens and a literal PAD marker map to UNK"""
        if token == PAD_TOKEN:
            return UNK_INDEX
        return self._stoi.get(token, UNK_INDEX)

    def decode(self, index: int) -> str:
        return self._itos[index]

    def fingerprint(self) -> str:
        """SHA-256 over the index-ordered token list"""
        digest = hashlib.sha256()
        for token in self._itos:
            digest.update(token.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    def save(self, path: PathLike) -> None:
        """One token per line in index order, reserved tokens included"""
        Path(path).write_text("".join(f"{t}\n" for t in self._itos), encoding="utf-8")

    @classmethod
    def load(cls, path: PathLike) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DataFormatError("vocabulary file must start with the PAD and UNK tokens", path=str(path))
        return cls(lines[2:])


def build_vocabulary(records: Iterable[FeedbackRecord], min_count: int = 1,
                     mode: TokenizerMode = "word") -> Vocabulary:
    """
    Build a vocabulary from record texts.

    Tokens seen at least min_count times get indices 2.. in descending
    frequency, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")

    counts: Dict[str, int] = {}
    for record in records:
        for token in tokenize(record.text, mode):
            counts[token] = counts.get(token, 0) + 1

    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)

    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    logger.debug(f"Vocabulary: {len(kept)} of {len(counts)} distinct tokens kept (min_count={min_count})")
    return Vocabulary(kept)


def pad_encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int,
               label_index: int = 0, gold: Optional[Iterable[int]] = None) -> EncodedExample:
    """Map tokens to indices (OOV → UNK), truncate or right-pad with PAD to max_len"""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")

    kept = list(tokens)[:max_len]
    indices = np.full(max_len, PAD_INDEX, dtype=np.int64)
    for i, token in enumerate(kept):
        indices[i] = vocab.encode(token)

    gold_set = frozenset(gold) if gold is not None else frozenset({label_index})
    return EncodedExample(indices=indices, true_length=len(kept), label_index=label_index, gold=gold_set)


def compute_max_len(records: Iterable[FeedbackRecord], mode: TokenizerMode = "word") -> int:
    """Longest tokenized record (0 for an empty iterable)"""
    return max((len(tokenize(r.text, mode)) for r in records), default=0)


def encode_split(split: DatasetSplit, vocab: Vocabulary, max_len: int,
                 mode: TokenizerMode = "word", expand: bool = False) -> List[EncodedExample]:
    """
    Tokenize and pad a whole split.

    With expand=True each multi-tag record is replicated first (training).
    Otherwise the label is the first gold tag in canonical order and the
    full gold set is kept for membership scoring (dev/test).
    """
    records = expand_multilabel(split.records) if expand else list(split.records)
    examples = []
    for record in records:
        gold = sorted(record.label_indices)
        label = gold[0] if gold else 0
        examples.append(pad_encode(tokenize(record.text, mode), vocab, max_len, label_index=label, gold=gold))
    return examples


def tag_distribution(splits: Sequence[DatasetSplit]) -> pd.DataFrame:
    """Per-tag counts per split (multi-tag records count once per tag)"""
    rows = []
    for split in splits:
        counts = {abbr: 0 for abbr in TAG_ABBREVIATIONS}
        for record in split.records:
            for tag in record.tags:
                counts[TAG_ABBREVIATIONS[TAG_INDEX[tag]]] += 1
        counts["Total"] = len(split.records)
        rows.append(pd.Series(counts, name=split.role))
    return pd.DataFrame(rows, columns=list(TAG_ABBREVIATIONS) + ["Total"])


# ==================== EMBEDDINGS ====================

@dataclass(eq=False)
class EmbeddingTable:
    """Word embedding matrix W (vocab_size × k) with a per-row trainable mask"""
    weights: np.ndarray
    trainable: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.weights.shape[1] < 1:
            raise ValueError(f"embedding weights must be (vocab, k>0), got {self.weights.shape}")
        if self.trainable.shape != (self.weights.shape[0],):
            raise ValueError("trainable mask must have one entry per embedding row")

    @property
    def vocab_size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def with_frozen_pad(cls, weights: np.ndarray) -> "EmbeddingTable":
        """Zero the PAD row and freeze it; every other row trainable"""
        weights = np.asarray(weights, dtype=DTYPE)
        weights[PAD_INDEX] = 0.0
        trainable = np.ones(weights.shape[0], dtype=bool)
        trainable[PAD_INDEX] = False
        return cls(weights=weights, trainable=trainable)


def random_embedding_table(vocab: Vocabulary, k: int, rng: np.random.Generator,
                           scale: float = 0.25) -> EmbeddingTable:
    """Uniform [-scale, scale] embeddings with a zero, frozen PAD row"""
    return EmbeddingTable.with_frozen_pad(random_uniform_init(vocab.size, k, scale, rng))


def load_embeddings(path: PathLike, vocab: Vocabulary, k: int, rng: np.random.Generator,
                    scale: float = 0.01) -> EmbeddingTable:
    """
    Initialize an embedding table from a word2vec-style text file.

    File format: header line "<count> <dim>", then "token v1 ... v_dim" per line.
    Tokens found in the file take the file's vector; missing tokens and UNK
    draw uniform [-scale, scale] rows; PAD is zero and frozen.

    Raises:
        EmbeddingDimensionError: header dimension differs from k
        DataFormatError: malformed header or vector line (with line number)
    """
    path = Path(path)
    logger.info(f"📥 Loading embeddings from {path}")

    weights = random_uniform_init(vocab.size, k, scale, rng)
    found = np.zeros(vocab.size, dtype=bool)

    with path.open("r", encoding="utf-8") as f:
        header = f.readline()
        parts = header.split()
        if len(parts) != 2:
            raise DataFormatError("header must be '<count> <dim>'", line_number=1, path=str(path))
        try:
            declared_count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError("header must be '<count> <dim>'", line_number=1, path=str(path))
        if dim != k:
            raise EmbeddingDimensionError(f"file dimension {dim} != requested dimension {k}",
                                          line_number=1, path=str(path))

        n_vectors = 0
        for line_number, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            token, *values = line.rstrip(" ").split(" ")
            if len(values) != dim:
                raise DataFormatError(f"expected {dim} values, got {len(values)}",
                                      line_number=line_number, path=str(path))
            try:
                vector = np.array(values, dtype=DTYPE)
            except ValueError:
                raise DataFormatError("vector values must be decimal reals",
                                      line_number=line_number, path=str(path))
            if not np.all(np.isfinite(vector)):
                raise DataFormatError("vector values must be finite", line_number=line_number, path=str(path))

            n_vectors += 1
            index = vocab.encode(token)
            if token in vocab and index > UNK_INDEX and not found[index]:
                weights[index] = vector
                found[index] = True

    if n_vectors != declared_count:
        logger.warning(f"⚠️  Header declares {declared_count} vectors, file holds {n_vectors}")

    coverage = int(found.sum())
    logger.info(f"✓ Embeddings: {coverage}/{vocab.size - 2} vocabulary tokens covered by {path.name}")
    return EmbeddingTable.with_frozen_pad(weights)


# ==================== TSV I/O ====================

def _parse_tags(cell: str, line_number: int, path: str) -> FrozenSet[str]:
    tags = [t.strip() for t in cell.split(",") if t.strip()]
    if not tags:
        raise DataFormatError("empty tag cell", line_number=line_number, path=path)
    unknown = [t for t in tags if t not in TAG_INDEX]
    if unknown:
        raise DataFormatError(f"unknown tag {unknown[0]!r}", line_number=line_number, path=path)
    return frozenset(tags)


def load_tsv(path: PathLike, role: SplitRole, lenient: bool = False) -> DatasetSplit:
    """
    Load a dataset split: one `id<TAB>text<TAB>tag[,tag…]` record per line.

    Args:
        path: UTF-8 TSV file, no header
        role: train, dev or test
        lenient: accept records with empty text

    Raises:
        DataFormatError: wrong field count, unknown tag, empty text or duplicate id
    """
    path_str = str(path)
    records: List[FeedbackRecord] = []
    seen: Dict[str, int] = {}

    with open(path, "r", encoding="utf-8", newline="") as f:
        content = f.read()

    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    for line_number, line in enumerate(lines, start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataFormatError(f"expected 3 tab-separated fields, got {len(fields)}",
                                  line_number=line_number, path=path_str)
        record_id, text, tag_cell = fields
        if not record_id:
            raise DataFormatError("empty id", line_number=line_number, path=path_str)
        if not text and not lenient:
            raise DataFormatError(f"empty text for record {record_id!r}", line_number=line_number, path=path_str)
        if record_id in seen:
            raise DataFormatError(f"duplicate id {record_id!r} (first seen on line {seen[record_id]})",
                                  line_number=line_number, path=path_str)
        seen[record_id] = line_number
        records.append(FeedbackRecord(id=record_id, text=text,
                                      tags=_parse_tags(tag_cell, line_number, path_str)))

    logger.info(f"📊 Loaded {len(records)} {role} records from {Path(path).name}")
    return DatasetSplit(role=role, records=tuple(records))


def write_tsv(split: DatasetSplit, path: PathLike) -> None:
    """Write a split in the dataset TSV format (canonical tag order)"""
    lines = [f"{r.id}\t{r.text}\t{','.join(r.sorted_tags)}\n" for r in split.records]
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("".join(lines))


# ==================== SYNTHETIC CORPUS ====================

SYNTHETIC_LEXICONS: Dict[str, Tuple[str, ...]] = {
    "comment": ("great", "nice", "love", "pleasant", "good"),
    "complaint": ("slow", "horrible", "awful", "unable", "annoying"),
    "request": ("please", "add", "wish", "option", "support"),
    "bug": ("crash", "error", "freeze", "broken", "glitch"),
    "meaningless": ("lol", "hmm", "asdf", "meh", "xyz"),
    "undetermined": ("maybe", "perhaps", "whatever", "somehow", "dunno"),
}

SYNTHETIC_FILLER: Tuple[str, ...] = (
    "the", "app", "it", "this", "really", "is", "was", "my", "phone", "update", "today", "again",
)


def generate_synthetic(seed: int, n_per_class: int,
                       vocab_noise: int = 3) -> Tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """
    Generate a linearly separable six-class corpus.

    Each sentence holds 1–3 keywords from its class's 5-word lexicon plus
    `vocab_noise` shared filler words, shuffled. Every class is split
    70/15/15 into train/dev/test; the same seed yields identical splits.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if vocab_noise < 0:
        raise ValueError(f"vocab_noise must be >= 0, got {vocab_noise}")

    rng = make_rng(seed)
    n_train = n_per_class * 70 // 100
    n_dev = n_per_class * 15 // 100

    buckets: Dict[str, List[FeedbackRecord]] = {"train": [], "dev": [], "test": []}
    counter = 0
    for tag in TAGS:
        lexicon = SYNTHETIC_LEXICONS[tag]
        for j in range(n_per_class):
            n_keywords = int(rng.integers(1, 4))
            words = [lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=n_keywords)]
            words += [SYNTHETIC_FILLER[int(i)] for i in rng.integers(0, len(SYNTHETIC_FILLER), size=vocab_noise)]
            order = rng.permutation(len(words))
            text = " ".join(words[int(i)] for i in order)

            record = FeedbackRecord(id=f"syn-{counter:05d}", text=text, tags=frozenset({tag}))
            counter += 1
            role = "train" if j < n_train else "dev" if j < n_train + n_dev else "test"
            buckets[role].append(record)

    splits = []
    for role in ("train", "dev", "test"):
        records = buckets[role]
        order = rng.permutation(len(records))
        splits.append(DatasetSplit(role=role, records=tuple(records[int(i)] for i in order)))

    logger.info(f"🧪 Synthetic corpus (seed={seed}): "
                f"{len(splits[0])} train / {len(splits[1])} dev / {len(splits[2])} test")
    return splits[0], splits[1], splits[2]

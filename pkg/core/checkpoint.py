"""
Checkpoints and Model Directories
=================================
Parameter serialization and the on-disk layout of a trained model.

Checkpoint file (*.ckpt):
    b"FBCKPT" | uint32 format version | uint64 header length | JSON header | float64 data
The JSON header lists every tensor's name, shape and byte offset. Data is
little-endian float64, so save → load is bit-exact and the same parameters
always produce the same bytes.

Model directory:
    manifest.yaml  vocab.txt  best.ckpt  final.ckpt  history.jsonl  logs/  runs.db
"""

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
import yaml

from .corpus import TAGS, EmbeddingTable, Vocabulary
from .errors import CheckpointError, VocabularyMismatchError
from .numerics import make_rng

logger = logging.getLogger(__name__)

MAGIC = b"FBCKPT"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1

BEST_CHECKPOINT = "best.ckpt"
FINAL_CHECKPOINT = "final.ckpt"
MANIFEST_FILE = "manifest.yaml"
VOCAB_FILE = "vocab.txt"
HISTORY_FILE = "history.jsonl"

_PREFIX = struct.Struct("<6sIQ")

PathLike = Union[str, Path]


# ==================== TENSOR FILES ====================

def save_checkpoint(params: Mapping[str, np.ndarray], path: PathLike) -> None:
    """Write named float64 tensors to a versioned checkpoint file"""
    entries = []
    blobs = []
    offset = 0
    for name, array in params.items():
        data = np.ascontiguousarray(array, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)

    header = json.dumps({"tensors": entries}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: unreadable file, wrong magic/version, corrupt header or truncated data
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format version {version}")

    header_end = _PREFIX.size + header_len
    if header_end > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[_PREFIX.size:header_end].decode("utf-8"))
        entries = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e

    data = raw[header_end:]
    tensors: Dict[str, np.ndarray] = {}
    for entry in entries:
        try:
            name, shape, offset, nbytes = entry["name"], tuple(entry["shape"]), entry["offset"], entry["nbytes"]
        except (KeyError, TypeError) as e:
            raise CheckpointError(f"{path}: corrupt tensor entry {entry!r}") from e
        count = int(np.prod(shape, dtype=np.int64))
        if nbytes != count * 8 or offset < 0 or offset + nbytes > len(data):
            raise CheckpointError(f"{path}: tensor {name!r} is truncated or inconsistent with its shape")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
    return tensors


def restore_parameters(model, tensors: Mapping[str, np.ndarray]) -> None:
    """Copy loaded tensors into a model's live parameter arrays"""
    params = model.parameters()
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params)
    if missing or extra:
        raise CheckpointError(f"checkpoint tensors do not match the model "
                              f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    for name, array in params.items():
        if tensors[name].shape != array.shape:
            raise CheckpointError(f"tensor {name!r} has shape {tensors[name].shape}, model expects {array.shape}")
        array[...] = tensors[name]


# ==================== MANIFEST ====================

@dataclass
class ModelManifest:
    """What a model directory holds and how to rebuild its model"""
    architecture: str
    config: Dict[str, Any]
    max_len: int
    tokenizer: str
    vocab_hash: str
    vocab_size: int
    tag_order: List[str] = field(default_factory=lambda: list(TAGS))
    best_epoch: int = 0
    best_dev_accuracy: float = 0.0
    format_version: int = MANIFEST_VERSION

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yaml.safe_dump(asdict(self), f, sort_keys=True, allow_unicode=True)

    @classmethod
    def load(cls, path: PathLike) -> "ModelManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f)
            manifest = cls(**raw)
        except (OSError, yaml.YAMLError, TypeError) as e:
            raise CheckpointError(f"cannot read model manifest {path}: {e}") from e
        if manifest.format_version != MANIFEST_VERSION:
            raise CheckpointError(f"unsupported manifest version {manifest.format_version}")
        if list(manifest.tag_order) != list(TAGS):
            raise CheckpointError(f"manifest tag order {manifest.tag_order} differs from {list(TAGS)}")
        return manifest


@dataclass
class LoadedModel:
    """A model rebuilt from a model directory"""
    model: Any
    vocab: Vocabulary
    manifest: ModelManifest


def write_model_dir(out_dir: PathLike, manifest: ModelManifest, vocab: Vocabulary) -> None:
    """Write manifest.yaml and vocab.txt (checkpoints are written by training)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(out_dir / VOCAB_FILE)
    manifest.save(out_dir / MANIFEST_FILE)
    logger.info(f"💾 Model manifest written to {out_dir / MANIFEST_FILE}")


def load_model_dir(model_dir: PathLike, checkpoint: str = BEST_CHECKPOINT) -> LoadedModel:
    """
    Rebuild a trained model from its directory.

    Raises:
        CheckpointError: missing/corrupt manifest, vocabulary or checkpoint
        VocabularyMismatchError: vocab.txt hash differs from the manifest
    """
    from .models import build_model
    from .training import TrainConfig

    model_dir = Path(model_dir)
    manifest = ModelManifest.load(model_dir / MANIFEST_FILE)

    try:
        vocab = Vocabulary.load(model_dir / VOCAB_FILE)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read vocabulary {model_dir / VOCAB_FILE}: {e}") from e
    if vocab.fingerprint() != manifest.vocab_hash:
        raise VocabularyMismatchError(f"vocabulary hash {vocab.fingerprint()[:12]}… does not match "
                                      f"manifest {manifest.vocab_hash[:12]}…")

    try:
        config = TrainConfig.from_dict(manifest.config)
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"manifest config is invalid: {e}") from e

    tensors = load_checkpoint(model_dir / checkpoint)
    skeleton = EmbeddingTable.with_frozen_pad(np.zeros((vocab.size, config.embedding_dim)))
    model = build_model(config, skeleton, make_rng(0))
    restore_parameters(model, tensors)

    logger.info(f"📦 Loaded {manifest.architecture} model from {model_dir / checkpoint}")
    return LoadedModel(model=model, vocab=vocab, manifest=manifest)

import numpy as np
import numpy.testing as npt
import pytest

from core.checkpoint import (
    BEST_CHECKPOINT, FINAL_CHECKPOINT, MANIFEST_FILE, VOCAB_FILE, ModelManifest, load_checkpoint,
    load_model_dir, restore_parameters, save_checkpoint, write_model_dir,
)
from core.corpus import Vocabulary
from core.errors import CheckpointError, VocabularyMismatchError
from core.numerics import make_rng


@pytest.fixture
def tensors():
    rng = make_rng(0)
    return {
        "embedding": rng.normal(size=(5, 3)),
        "conv.h3.weight": rng.normal(size=(2, 3, 3)),
        "output.bias": np.array([0.1, -0.0, np.pi, 1e-300, -1e300, 0.0]),
    }


def test_round_trip_is_bit_exact(tensors, tmp_path):
    path = tmp_path / "params.ckpt"
    save_checkpoint(tensors, path)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(tensors)
    for name, array in tensors.items():
        assert loaded[name].shape == array.shape
        assert loaded[name].tobytes() == array.astype("<f8").tobytes()


def test_same_parameters_give_identical_bytes(tensors, tmp_path):
    save_checkpoint(tensors, tmp_path / "a.ckpt")
    save_checkpoint({k: v.copy() for k, v in tensors.items()}, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpt").read_bytes()[:6] == b"FBCKPT"


def test_corrupted_files_raise_checkpoint_error(tensors, tmp_path):
    path = tmp_path / "params.ckpt"
    save_checkpoint(tensors, path)
    raw = path.read_bytes()

    cases = {
        "magic": b"XXCKPT" + raw[6:],
        "version": raw[:6] + (99).to_bytes(4, "little") + raw[10:],
        "truncated": raw[:-8],
        "short": raw[:10],
        "header": raw[:18] + b"{" * 10 + raw[28:],
    }
    for label, content in cases.items():
        bad = tmp_path / f"{label}.ckpt"
        bad.write_bytes(content)
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


# ==================== MODEL DIRECTORY ====================

@pytest.fixture
def model_dir(make_config, encode_corpus, build_small_model, synthetic_splits, tmp_path):
    config = make_config()
    corpus = encode_corpus(*synthetic_splits, config)
    model = build_small_model(config, corpus)
    save_checkpoint(model.parameters(), tmp_path / BEST_CHECKPOINT)
    manifest = ModelManifest(architecture=config.architecture, config=config.to_dict(), max_len=corpus.max_len,
                             tokenizer=config.tokenizer, vocab_hash=corpus.vocab.fingerprint(),
                             vocab_size=corpus.vocab.size, best_epoch=1, best_dev_accuracy=0.5)
    write_model_dir(tmp_path, manifest, corpus.vocab)
    return tmp_path, model, corpus


def test_load_model_dir_restores_predictions(model_dir):
    path, model, corpus = model_dir
    loaded = load_model_dir(path)
    assert loaded.vocab == corpus.vocab
    assert loaded.manifest.max_len == corpus.max_len
    for example in corpus.test:
        npt.assert_array_equal(loaded.model.forward(example).probs, model.forward(example).probs)


def test_manifest_round_trip(model_dir):
    path, _, _ = model_dir
    manifest = ModelManifest.load(path / MANIFEST_FILE)
    manifest.save(path / "copy.yaml")
    assert ModelManifest.load(path / "copy.yaml") == manifest
    assert manifest.tag_order[0] == "comment"


def test_vocabulary_mismatch_is_detected(model_dir):
    path, _, _ = model_dir
    with open(path / VOCAB_FILE, "a", encoding="utf-8") as f:
        f.write("intruder\n")
    with pytest.raises(VocabularyMismatchError):
        load_model_dir(path)


def test_missing_checkpoint_or_manifest(model_dir):
    path, _, _ = model_dir
    with pytest.raises(CheckpointError):
        load_model_dir(path, FINAL_CHECKPOINT)
    (path / MANIFEST_FILE).unlink()
    with pytest.raises(CheckpointError):
        load_model_dir(path)


def test_restore_rejects_mismatched_tensors(model_dir):
    _, model, _ = model_dir
    params = {name: p.copy() for name, p in model.parameters().items()}
    params["output.bias"] = np.zeros(7)
    with pytest.raises(CheckpointError, match="output.bias"):
        restore_parameters(model, params)
    del params["output.bias"]
    with pytest.raises(CheckpointError, match="missing"):
        restore_parameters(model, params)


def test_vocabulary_file_without_reserved_tokens(model_dir):
    path, _, _ = model_dir
    (path / VOCAB_FILE).write_text("only\nwords\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_model_dir(path)


def test_manifest_with_wrong_tag_order(model_dir):
    path, _, _ = model_dir
    manifest = ModelManifest.load(path / MANIFEST_FILE)
    manifest.tag_order = list(reversed(manifest.tag_order))
    manifest.save(path / MANIFEST_FILE)
    with pytest.raises(CheckpointError):
        load_model_dir(path)
    assert isinstance(Vocabulary.load(path / VOCAB_FILE), Vocabulary)

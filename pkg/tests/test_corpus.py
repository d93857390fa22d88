import numpy as np
import numpy.testing as npt
import pytest

from core.corpus import (
    PAD_INDEX, PAD_TOKEN, SYNTHETIC_LEXICONS, TAGS, UNK_INDEX, UNK_TOKEN, DatasetSplit, FeedbackRecord,
    Vocabulary, build_vocabulary, compute_max_len, encode_split, expand_multilabel, generate_synthetic,
    load_embeddings, load_tsv, pad_encode, random_embedding_table, tag_distribution, tokenize, write_tsv,
)
from core.errors import DataFormatError, EmbeddingDimensionError
from core.numerics import make_rng


def record(rid, text, *tags):
    return FeedbackRecord(id=rid, text=text, tags=frozenset(tags))


# ==================== TOKENIZATION ====================

def test_word_tokenizer_lowercases_and_detaches_punctuation():
    assert tokenize("The App crashes!") == ["the", "app", "crashes", "!"]
    assert tokenize("(hello)  world...") == ["(", "hello", ")", "world", ".", ".", "."]
    assert tokenize("don't stop") == ["don't", "stop"]
    assert tokenize("   ") == []


def test_char_tokenizer_drops_whitespace():
    assert tokenize("日本 語!", "char") == ["日", "本", "語", "!"]


def test_unknown_tokenizer_mode():
    with pytest.raises(ValueError):
        tokenize("x", "bpe")


# ==================== MULTI-LABEL EXPANSION ====================

def test_expand_multilabel_counts_one_copy_per_tag():
    records = [
        record("r0", "a", "comment"),
        record("r1", "b", "bug", "comment"),
        record("r2", "c", "complaint"),
        record("r3", "d", "request", "bug"),
        record("r4", "e", "meaningless"),
        record("r5", "f", "undetermined"),
        record("r6", "g", "comment", "complaint"),
        record("r7", "h", "bug"),
        record("r8", "i", "request", "complaint"),
        record("r9", "j", "comment"),
    ]
    assert sum(len(r.tags) for r in records) == 14
    expanded = expand_multilabel(records)
    assert len(expanded) == 14
    assert [r.sorted_tags for r in expanded if r.id == "r1"] == [["comment"], ["bug"]]
    assert all(len(r.tags) == 1 for r in expanded)


def test_record_rejects_unknown_tag():
    with pytest.raises(DataFormatError):
        record("x", "text", "praise")


# ==================== VOCABULARY ====================

def test_vocabulary_reserves_pad_and_unk_and_orders_by_frequency():
    vocab = build_vocabulary([record("a", "b a c a", "comment"), record("b", "b d", "bug")])
    assert vocab.tokens == [PAD_TOKEN, UNK_TOKEN, "a", "b", "c", "d"]
    assert vocab.encode("a") == 2
    assert vocab.encode("zzz") == UNK_INDEX
    assert vocab.decode(PAD_INDEX) == PAD_TOKEN


def test_vocabulary_min_count_filters_rare_tokens():
    vocab = build_vocabulary([record("a", "x x y", "comment")], min_count=2)
    assert vocab.tokens == [PAD_TOKEN, UNK_TOKEN, "x"]
    with pytest.raises(ValueError):
        build_vocabulary([], min_count=0)


def test_vocabulary_save_load_and_fingerprint(tmp_path):
    vocab = Vocabulary(["great", "app", "日本"])
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded == vocab
    assert loaded.fingerprint() == vocab.fingerprint()
    assert Vocabulary(["app", "great", "日本"]).fingerprint() != vocab.fingerprint()


def test_vocabulary_load_requires_reserved_tokens(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("great\napp\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        Vocabulary.load(path)


def test_pad_encode_pads_truncates_and_maps_oov():
    vocab = Vocabulary(["the", "app"])
    example = pad_encode(["the", "new", "app"], vocab, 5, label_index=3)
    npt.assert_array_equal(example.indices, [2, UNK_INDEX, 3, PAD_INDEX, PAD_INDEX])
    assert example.true_length == 3
    assert example.gold_set == frozenset({3})

    truncated = pad_encode(["the"] * 8, vocab, 4)
    assert truncated.max_len == 4 and truncated.true_length == 4


def test_literal_reserved_markers_encode_as_unknown():
    vocab = Vocabulary(["crash"])
    example = pad_encode(tokenize("<pad> crash <unk>"), vocab, 5)
    npt.assert_array_equal(example.indices, [UNK_INDEX, vocab.encode("crash"), UNK_INDEX, PAD_INDEX, PAD_INDEX])
    assert example.true_length == 3
    assert vocab.encode(PAD_TOKEN) == UNK_INDEX
    assert vocab.decode(PAD_INDEX) == PAD_TOKEN


def test_encode_split_keeps_gold_sets_for_scoring():
    split = DatasetSplit(role="test", records=(record("a", "crash great", "bug", "comment"),))
    vocab = build_vocabulary(split.records)
    (example,) = encode_split(split, vocab, 4)
    assert example.label_index == TAGS.index("comment")
    assert example.gold_set == frozenset({TAGS.index("comment"), TAGS.index("bug")})
    assert len(encode_split(split, vocab, 4, expand=True)) == 2


def test_compute_max_len():
    assert compute_max_len([record("a", "one two", "bug"), record("b", "one two three!", "bug")]) == 4
    assert compute_max_len([]) == 0


# ==================== TSV I/O ====================

def test_load_tsv_reads_multi_tag_records(tmp_path):
    path = tmp_path / "train.tsv"
    path.write_text("r1\tThe app is great\tcomment\nr2\tIt crashes, add undo\tbug, request\n", encoding="utf-8")
    split = load_tsv(path, "train")
    assert len(split) == 2
    assert split.records[1].tags == frozenset({"bug", "request"})


@pytest.mark.parametrize("content, line, message", [
    ("r1\tok\tcomment\nr2\tbad\tpraise\n", 2, "unknown tag"),
    ("r1\tonly two fields\n", 1, "3 tab-separated fields"),
    ("r1\tok\tcomment\nr1\tagain\tbug\n", 2, "duplicate id"),
    ("r1\t\tcomment\n", 1, "empty text"),
    ("r1\ttext\t\n", 1, "empty tag cell"),
])
def test_load_tsv_errors_carry_line_numbers(tmp_path, content, line, message):
    path = tmp_path / "bad.tsv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DataFormatError, match=message) as info:
        load_tsv(path, "train")
    assert info.value.line_number == line
    assert f":{line}:" in str(info.value)


def test_load_tsv_lenient_accepts_empty_text(tmp_path):
    path = tmp_path / "lenient.tsv"
    path.write_text("r1\t\tmeaningless\n", encoding="utf-8")
    assert load_tsv(path, "test", lenient=True).records[0].text == ""


def test_write_tsv_then_load_preserves_records(tmp_path, synthetic_splits):
    train, _, _ = synthetic_splits
    path = tmp_path / "train.tsv"
    write_tsv(train, path)
    assert load_tsv(path, "train") == train


def test_tag_distribution_counts_per_split(synthetic_splits):
    table = tag_distribution(list(synthetic_splits))
    assert list(table.index) == ["train", "dev", "test"]
    assert table.loc["train", "Total"] == 42
    assert table.loc["train", "CO"] == 7
    assert table.loc["test", "UD"] == 2


# ==================== EMBEDDINGS ====================

def test_random_embedding_table_has_zero_frozen_pad():
    table = random_embedding_table(Vocabulary(["a", "b"]), 6, make_rng(0))
    assert table.weights.shape == (4, 6)
    npt.assert_array_equal(table.weights[PAD_INDEX], 0.0)
    assert not table.trainable[PAD_INDEX] and table.trainable[1:].all()
    assert np.abs(table.weights).max() <= 0.25


def test_load_embeddings_copies_found_vectors(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("3 2\ngreat 0.5 -0.5\ngreat 9 9\nunused 1 1\n", encoding="utf-8")
    vocab = Vocabulary(["great", "app"])
    table = load_embeddings(path, vocab, 2, make_rng(0))
    npt.assert_array_equal(table.weights[vocab.encode("great")], [0.5, -0.5])
    npt.assert_array_equal(table.weights[PAD_INDEX], [0.0, 0.0])
    assert np.abs(table.weights[vocab.encode("app")]).max() <= 0.01
    assert np.abs(table.weights[UNK_INDEX]).max() <= 0.01


def test_load_embeddings_rejects_dimension_mismatch(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("1 3\ngreat 1 2 3\n", encoding="utf-8")
    with pytest.raises(EmbeddingDimensionError):
        load_embeddings(path, Vocabulary(["great"]), 2, make_rng(0))


def test_load_embeddings_reports_malformed_line(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("2 2\ngreat 1 2\napp 1 x\n", encoding="utf-8")
    with pytest.raises(DataFormatError) as info:
        load_embeddings(path, Vocabulary(["great", "app"]), 2, make_rng(0))
    assert info.value.line_number == 3


# ==================== SYNTHETIC CORPUS ====================

def test_generate_synthetic_sizes():
    train, dev, test = generate_synthetic(seed=7, n_per_class=100)
    assert (len(train), len(dev), len(test)) == (420, 90, 90)
    ids = {r.id for split in (train, dev, test) for r in split.records}
    assert len(ids) == 600


def test_generate_synthetic_is_deterministic():
    assert generate_synthetic(seed=5, n_per_class=6) == generate_synthetic(seed=5, n_per_class=6)
    assert generate_synthetic(seed=5, n_per_class=6) != generate_synthetic(seed=6, n_per_class=6)


def test_generate_synthetic_small_corpus_has_24_records():
    splits = generate_synthetic(seed=0, n_per_class=4)
    assert sum(len(s) for s in splits) == 24


def keyword_count_tag(text):
    words = text.split()
    counts = [sum(w in SYNTHETIC_LEXICONS[tag] for w in words) for tag in TAGS]
    return TAGS[int(np.argmax(counts))]


def test_synthetic_corpus_is_separable_by_keyword_counts():
    for split in generate_synthetic(seed=1, n_per_class=10, vocab_noise=2):
        for r in split.records:
            (tag,) = r.tags
            assert keyword_count_tag(r.text) == tag
            assert 3 <= len(r.text.split()) <= 5

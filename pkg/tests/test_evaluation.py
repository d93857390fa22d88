import json

import numpy as np
import numpy.testing as npt
import pytest

from core.corpus import TAGS
from core.evaluation import (
    UNDEFINED, EvalReport, confusion_matrix, format_report, parse_report, read_report, score, write_report,
)
from core.models import predict

# (predicted tag, gold tags) - 20 predictions, 13 correct under the membership rule
FIXTURE = [
    ("comment", {"comment"}),
    ("comment", {"comment"}),
    ("comment", {"complaint"}),
    ("complaint", {"complaint"}),
    ("complaint", {"complaint"}),
    ("complaint", {"request"}),
    ("bug", {"bug"}),
    ("bug", {"bug", "comment"}),
    ("bug", {"request"}),
    ("comment", {"comment", "request"}),
    ("meaningless", {"meaningless"}),
    ("meaningless", {"comment"}),
    ("comment", {"comment"}),
    ("complaint", {"bug"}),
    ("bug", {"bug"}),
    ("comment", {"meaningless"}),
    ("complaint", {"complaint", "bug"}),
    ("comment", {"comment"}),
    ("bug", {"complaint"}),
    ("meaningless", {"meaningless"}),
]


def brute_force_counts(pairs, tag):
    tp = sum(1 for p, gold in pairs if p == tag and tag in gold)
    fp = sum(1 for p, gold in pairs if p == tag and tag not in gold)
    fn = sum(1 for p, gold in pairs if p != tag and tag in gold)
    return tp, fp, fn


@pytest.fixture
def report():
    return score([p for p, _ in FIXTURE], [g for _, g in FIXTURE])


def row_tokens(text, tag):
    (line,) = [line for line in text.splitlines() if line.split() and line.split()[0] == tag]
    return line.split()[1:]


def test_counts_match_brute_force(report):
    for tag in TAGS:
        m = report.metrics(tag)
        assert (m.tp, m.fp, m.fn) == brute_force_counts(FIXTURE, tag), tag


def test_ratios_match_brute_force(report):
    for tag in TAGS:
        tp, fp, fn = brute_force_counts(FIXTURE, tag)
        m = report.metrics(tag)
        assert m.precision == (tp / (tp + fp) if tp + fp else -1)
        assert m.recall == (tp / (tp + fn) if tp + fn else -1)


def test_known_values(report):
    assert report.n_examples == 20
    assert report.exact_accuracy == pytest.approx(0.65)
    assert report.metrics("comment").precision == pytest.approx(5 / 7)
    assert report.metrics("comment").f1 == pytest.approx(5 / 7)
    assert report.metrics("complaint").f1 == pytest.approx(0.6)
    assert report.metrics("meaningless").recall == pytest.approx(2 / 3)
    assert sum(m.tp for m in report.tags) == 13


def test_sentinel_for_tags_never_predicted(report):
    request = report.metrics("request")
    assert (request.precision, request.recall, request.f1) == (UNDEFINED, 0.0, UNDEFINED)
    undetermined = report.metrics("undetermined")
    assert (undetermined.precision, undetermined.recall, undetermined.f1) == (-1, -1, -1)


def test_f1_is_zero_when_precision_and_recall_are_zero():
    report = score(["bug", "comment"], [{"comment"}, {"bug"}])
    bug = report.metrics("bug")
    assert (bug.precision, bug.recall, bug.f1) == (0.0, 0.0, 0.0)


def test_single_tag_gold_accounts_every_example():
    rng = np.random.default_rng(0)
    predictions = rng.integers(0, 6, size=50).tolist()
    gold = [{int(g)} for g in rng.integers(0, 6, size=50)]
    report = score(predictions, gold)
    assert sum(m.tp + m.fn for m in report.tags) == 50
    assert sum(m.tp + m.fp for m in report.tags) == 50
    assert report.confusion.sum() == 50
    assert np.trace(report.confusion) == sum(m.tp for m in report.tags)


def test_order_of_examples_does_not_matter(report):
    shuffled = FIXTURE[::-1]
    assert score([p for p, _ in shuffled], [g for _, g in shuffled]) == report


def test_confusion_matrix_counts_each_gold_tag():
    matrix = confusion_matrix([p for p, _ in FIXTURE], [g for _, g in FIXTURE])
    assert matrix.sum() == 23
    assert matrix[TAGS.index("request"), TAGS.index("complaint")] == 1
    assert matrix[TAGS.index("comment"), TAGS.index("bug")] == 1
    npt.assert_array_equal(matrix[:, TAGS.index("undetermined")], 0)


def test_accepts_predictions_and_indices():
    probs = np.array([0.1, 0.1, 0.1, 0.5, 0.1, 0.1])
    assert score([predict(probs)], [{3}]) == score(["bug"], [{"bug"}]) == score([3], [{"bug"}])


def test_score_rejects_bad_input():
    with pytest.raises(ValueError):
        score(["bug"], [])
    with pytest.raises(ValueError):
        score(["bug"], [set()])
    with pytest.raises(ValueError):
        score(["praise"], [{"bug"}])
    with pytest.raises(ValueError):
        score([6], [{"bug"}])


def test_text_table_formatting():
    predictions = ["comment"] * 7 + ["bug"] * 3
    gold = [{"comment"}] * 7 + [{"complaint"}] * 3
    text, _ = format_report(score(predictions, gold))
    assert "exact_accuracy 0.7000" in text.splitlines()
    assert "n_examples 10" in text.splitlines()
    assert row_tokens(text, "comment") == ["1.0000", "1.0000", "1.0000", "7", "0", "0"]
    assert row_tokens(text, "complaint") == ["-1", "0.0000", "-1", "0", "0", "3"]
    assert row_tokens(text, "undetermined") == ["-1", "-1", "-1", "0", "0", "0"]


def test_record_round_trip(report):
    _, record = format_report(report)
    assert parse_report(record) == report
    assert parse_report(json.loads(json.dumps(record))) == report


def test_parse_rejects_malformed_records(report):
    _, record = format_report(report)
    with pytest.raises(ValueError):
        parse_report({**record, "tag_order": list(reversed(TAGS))})
    with pytest.raises(ValueError):
        parse_report({k: v for k, v in record.items() if k != "tags"})


def test_write_report_creates_json_and_text(report, tmp_path):
    path = tmp_path / "reports" / "test.json"
    text = write_report(report, path)
    assert read_report(path) == report
    assert (tmp_path / "reports" / "test.txt").read_text(encoding="utf-8") == text + "\n"
    assert isinstance(report, EvalReport)

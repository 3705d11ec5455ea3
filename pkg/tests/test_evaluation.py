import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hand_confusion
from sits_tempo.data import SynthSpec, synth_generate
from sits_tempo.errors import DimensionError, LabelError, UndefinedMetricError
from sits_tempo.evaluation import (
    UNDEFINED,
    ConfusionMatrix,
    EvaluationReport,
    confusion_matrix,
    evaluate,
    f1_score,
    overall_accuracy,
    per_class_accuracy,
    per_class_f1,
    predict_in_shards,
)
from sits_tempo.models import ModelConfig, build_model

HAND = confusion_matrix([0, 1, 1], [0, 1, 0], 2)


def test_hand_counted_matrix():
    assert HAND.counts.tolist() == [[1, 1], [0, 1]]
    assert overall_accuracy(HAND) == pytest.approx(66.67, abs=0.01)
    assert per_class_f1(HAND).tolist() == pytest.approx([200 / 3, 200 / 3])
    assert f1_score(HAND, "macro") == pytest.approx(200 / 3)
    assert per_class_accuracy(HAND).tolist() == [50.0, 100.0]


def test_perfect_predictions():
    cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert (cm.counts == np.diag([1, 1, 2])).all()
    assert overall_accuracy(cm) == 100.0
    assert f1_score(cm, "macro") == f1_score(cm, "weighted") == 100.0
    assert per_class_accuracy(cm).tolist() == [100.0] * 3


def test_empty_input():
    cm = confusion_matrix([], [], 3)
    assert cm.n == 0 and not cm.counts.any()
    for metric in (overall_accuracy, lambda c: f1_score(c, "macro")):
        with pytest.raises(UndefinedMetricError):
            metric(cm)


def test_out_of_range_label_names_index():
    with pytest.raises(LabelError, match="label 5 at index 2"):
        confusion_matrix([0, 0, 0], [0, 1, 5], 3)
    with pytest.raises(LabelError, match="prediction -1 at index 0"):
        confusion_matrix([-1], [0], 3)


def test_unknown_f1_mode():
    with pytest.raises(ValueError):
        f1_score(HAND, "micro-ish")


def test_class_absent_everywhere_scores_zero_and_no_weight():
    cm = confusion_matrix([0, 1], [0, 1], 3)
    assert per_class_f1(cm)[2] == 0.0
    assert f1_score(cm, "weighted") == 100.0
    assert f1_score(cm, "macro") == pytest.approx(200 / 3)
    assert math.isnan(per_class_accuracy(cm)[2])


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 6), data=st.data())
def test_metrics_match_raw_recomputation(k, data):
    n = data.draw(st.integers(1, 80))
    labels = np.array(data.draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)))
    preds = np.array(data.draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)))
    cm = confusion_matrix(preds, labels, k)
    assert cm.counts.tolist() == hand_confusion(preds, labels, k)
    assert overall_accuracy(cm) == pytest.approx(100 * (preds == labels).mean(), abs=1e-9)
    f1s, supports = [], []
    for c in range(k):
        tp = ((preds == c) & (labels == c)).sum()
        fp = ((preds == c) & (labels != c)).sum()
        fn = ((preds != c) & (labels == c)).sum()
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(100 * 2 * precision * recall / (precision + recall) if precision + recall else 0.0)
        supports.append((labels == c).sum())
        acc = per_class_accuracy(cm)[c]
        if supports[-1]:
            assert acc == pytest.approx(100 * recall, abs=1e-9)
        else:
            assert math.isnan(acc)
    assert per_class_f1(cm) == pytest.approx(f1s, abs=1e-9)
    weighted = float(np.dot(f1s, supports) / sum(supports))
    assert f1_score(cm, "weighted") == pytest.approx(weighted, abs=1e-9)
    present = [f for f, s in zip(f1s, supports) if s]
    assert min(present) - 1e-9 <= f1_score(cm, "weighted") <= max(present) + 1e-9
    # consistent relabelling leaves OA unchanged
    perm = np.array(data.draw(st.permutations(list(range(k)))))
    assert overall_accuracy(confusion_matrix(perm[preds], perm[labels], k)) == pytest.approx(overall_accuracy(cm))


def test_confusion_merge_is_order_independent():
    rng = np.random.default_rng(0)
    labels, preds = rng.integers(0, 4, 90), rng.integers(0, 4, 90)
    whole = confusion_matrix(preds, labels, 4)
    parts = [confusion_matrix(preds[i:i + 30], labels[i:i + 30], 4) for i in (0, 30, 60)]
    assert ((parts[0] + parts[1] + parts[2]).counts == whole.counts).all()
    assert ((parts[2] + parts[0] + parts[1]).counts == whole.counts).all()


def test_confusion_invariants():
    with pytest.raises(DimensionError):
        ConfusionMatrix(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1, -1], [0, 0]]))


def test_report_serializations():
    cm = confusion_matrix([0, 1, 1], [0, 1, 0], 3, ["a", "b", "c"])
    report = EvaluationReport.from_confusion(cm, train_time_seconds=12.5)
    md = report.to_markdown("demo")
    assert "| 66.67 | 66.67 |" in md and f"| c | {UNDEFINED} |" in md
    csv_text = report.to_csv()
    assert "accuracy[c]," in csv_text and "train_time_seconds,12.5" in csv_text
    assert cm.to_csv().splitlines() == ["true\\pred,a,b,c", "a,1,1,0", "b,0,1,0", "c,0,0,0"]


# ----------------------------------------------------------- with a model

@pytest.fixture(scope="module")
def model_and_data():
    data = synth_generate(SynthSpec(n=120, seed=2))
    cfg = ModelConfig("temporal_cnn", 0.2, nb_conv_layers=2, nb_conv_units=4, nb_fc_units=8, filter_size=3)
    return build_model(cfg, 23, 10, 5, seed=1), data


def test_evaluate_batch_size_and_order_invariant(model_and_data):
    model, data = model_and_data
    a = evaluate(model, data, batch_size=32)
    b = evaluate(model, data, batch_size=256)
    perm = np.random.default_rng(0).permutation(data.n)
    c = evaluate(model, data.subset(perm), batch_size=7, workers=3)
    for other in (b, c):
        assert (other.confusion.counts == a.confusion.counts).all()
        assert other.overall_accuracy == a.overall_accuracy and other.f1 == a.f1


def test_evaluate_does_not_mutate_model(model_and_data):
    model, data = model_and_data
    model.train()
    before = model.state_dict()
    evaluate(model, data)
    assert model.mode == "train"
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)
    model.eval()


def test_evaluate_shape_checks(model_and_data):
    model, _ = model_and_data
    with pytest.raises(DimensionError, match="expects"):
        evaluate(model, synth_generate(SynthSpec(n=20, t=12)))
    with pytest.raises(DimensionError, match="classes"):
        evaluate(model, synth_generate(SynthSpec(n=20, k=4)))


def test_sharded_predictions_match_single_pass(model_and_data):
    model, data = model_and_data
    one = predict_in_shards(model, data.samples, batch_size=1000)
    many = predict_in_shards(model, data.samples, batch_size=9, workers=4)
    assert np.array_equal(one, many)

import json
import math

import numpy as np
import pytest

from compactssl import nncore as nn
from compactssl import synthetic
from compactssl.bench import pretrained
from compactssl.data import LabelledData
from compactssl.errors import DataError, NumericError, ParameterError
from compactssl.trainer import (
    EarlyStopping,
    TrainConfig,
    evaluate,
    evaluate_predictions,
    fit,
    lr_find,
    lr_range_test,
    two_stage_train,
)

from conftest import fast_config


def quadratic_step(curvature=1.0, w0=5.0):
    """One SGD step on 0.5 * c * w^2; returns the loss before the step."""
    state = {"w": w0}

    def step(lr):
        w = state["w"]
        loss = 0.5 * curvature * w * w
        state["w"] = w - lr * curvature * w
        return loss

    return step, state


def test_lr_range_test_toy_quadratic():
    step, _ = quadratic_step()
    lr, lrs, smoothed = lr_range_test(step, 1e-5, 1.0, 100)
    assert 1e-5 < lr < 1.0
    # retraining from the start at the chosen rate decreases the loss
    retrain, state = quadratic_step()
    first = retrain(lr)
    for _ in range(20):
        retrain(lr)
    assert 0.5 * state["w"] ** 2 < first


def test_lr_range_test_deterministic():
    a = lr_range_test(quadratic_step()[0], 1e-5, 1.0, 20)
    b = lr_range_test(quadratic_step()[0], 1e-5, 1.0, 20)
    assert a == b


def test_lr_range_test_divergent_clamps_to_lr_min():
    # curvature 1e6 diverges for any lr above 2e-6
    step, _ = quadratic_step(curvature=1e6)
    lr, _, _ = lr_range_test(step, 1e-3, 1.0, 30)
    assert lr == 1e-3


def test_lr_range_test_errors():
    step, _ = quadratic_step()
    with pytest.raises(ParameterError):
        lr_range_test(step, 1e-5, 1.0, 19)
    with pytest.raises(ParameterError):
        lr_range_test(step, 1.0, 0.1, 50)
    with pytest.raises(NumericError):
        lr_range_test(lambda lr: math.nan, 1e-5, 1.0, 20)


def test_lr_find_on_model_is_pure(small_split, small_spec):
    model = nn.init_model(small_spec, seed=0)
    before = model.copy()
    a = lr_find(model, small_split.labelled, steps=20, seed=3)
    b = lr_find(model, small_split.labelled, steps=20, seed=3)
    assert a == b and 1e-5 <= a <= 1.0
    assert model == before


def test_fit_all_frozen_leaves_model_unchanged(small_split, small_spec):
    model = nn.init_model(small_spec, seed=1)
    out, report = fit(model, small_split.labelled, fast_config(), frozen=set(model.params), lr=0.05, epochs=2,
                      early_stopping=False)
    assert out == model
    assert len(report.loss) == 2 and all(math.isfinite(v) for v in report.loss)


def test_fit_deterministic(small_split, small_spec):
    model = nn.init_model(small_spec, seed=2)
    cfg = fast_config()
    a, ra = fit(model, small_split.labelled, cfg, lr=0.01, epochs=2)
    b, rb = fit(model, small_split.labelled, cfg, lr=0.01, epochs=2)
    assert a == b and ra.loss == rb.loss


def test_fit_errors(small_split, small_spec):
    model = nn.init_model(small_spec)
    empty = small_split.labelled.subset([])
    with pytest.raises(DataError):
        fit(model, empty, fast_config())
    with pytest.raises(ParameterError):
        fit(model, small_split.labelled, fast_config(), frozen={"nope"})


def test_early_stopping_patience_one():
    stopper = EarlyStopping(patience=1)
    stops = [stopper.update(e, acc, state=f"w{e}") for e, acc in enumerate([0.5, 0.7, 0.6], start=1)]
    assert stops == [False, False, True]
    assert stopper.best_epoch == 2 and stopper.best_state == "w2"


def test_early_stopping_tie_breaks():
    s = EarlyStopping(patience=3)
    s.update(1, 0.8, "a", loss=0.5)
    s.update(2, 0.8, "b", loss=0.4)
    s.update(3, 0.8, "c", loss=0.4)
    assert s.best_epoch == 2


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.stage1_epochs, cfg.stage2_epochs) == (2, 50)
    for bad in (dict(patience=0), dict(stage2_epochs=-1), dict(batch_size=0)):
        with pytest.raises(ParameterError):
            TrainConfig(**bad)


def test_stage_one_keeps_body_bitwise(small_split, small_spec):
    model = nn.init_model(small_spec, seed=4)
    cfg = fast_config(stage1_epochs=2, stage2_epochs=0)
    out, report = two_stage_train(model, small_split.labelled, 3, cfg)
    body = model.body_names()
    assert nn.param_hash(out, body) == nn.param_hash(model, body)
    assert nn.param_hash(out, out.head_names()) != nn.param_hash(model, model.head_names())
    assert report.stage == [1, 1] and report.lr_stage1 is not None


def test_two_stage_changes_body_in_stage_two(small_split, small_spec):
    model = nn.init_model(small_spec, seed=4)
    out, report = two_stage_train(model, small_split.labelled, 3, fast_config())
    body = model.body_names()
    assert nn.param_hash(out, body) != nn.param_hash(model, body)
    assert set(report.stage) == {1, 2}


def test_two_stage_shape_mismatch(small_split):
    model = nn.init_model(nn.compact_net(3, (1, 32, 32)))
    with pytest.raises(DataError):
        two_stage_train(model, small_split.labelled, 3, fast_config())


def test_report_exports(small_split, small_spec):
    _, report = two_stage_train(nn.init_model(small_spec), small_split.labelled, 3, fast_config())
    lines = report.to_csv().splitlines()
    assert lines[0] == "epoch,stage,loss,accuracy,seconds"
    assert len(lines) == len(report.loss) + 1
    obj = json.loads(report.to_json())
    assert obj["loss"] == report.loss and obj["best_epoch"] == report.best_epoch


def _labelled(labels, k=2):
    labels = np.asarray(labels)
    return LabelledData(np.zeros((len(labels), 1, 4, 4), np.float32), labels, tuple("AB"[:k]))


def test_evaluate_predictions_examples():
    r = evaluate_predictions(np.array([0, 0, 1, 1]), np.array([0, 0, 1, 1]), 2)
    assert r.accuracy == 1.0 and r.f1 == 1.0
    r = evaluate_predictions(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), 2)
    assert r.f1 == pytest.approx(0.5)
    r = evaluate_predictions(np.array([1, 1, 1, 0, 0]), np.array([1, 1, 0, 1, 0]), 2, positive_class=1)
    assert r.f1 == pytest.approx(0.6667, abs=1e-4) and r.metric_name == "f1"
    assert r.confusion.tolist() == [[1, 1], [1, 2]]


def test_evaluate_unknown_positive_class(small_spec):
    model = nn.init_model(nn.conv_net((2,), 2, (1, 4, 4)))
    with pytest.raises(ParameterError):
        evaluate(model, _labelled([0, 1]), positive_class=5)
    with pytest.raises(DataError):
        evaluate(model, _labelled([]))


@pytest.mark.slow
def test_two_stage_desk_scale_accuracy():
    """Pretrained CompactNet, 50 labelled per class, 3 classes: mean test accuracy over 3 seeds."""
    body = pretrained("compact", (1, 32, 32))
    accs = []
    for seed in range(3):
        train = synthetic.generate(synthetic.TARGET_SHAPES[:3], 50, seed=100 + seed)
        test = synthetic.generate(synthetic.TARGET_SHAPES[:3], 60, seed=200 + seed)
        model, _ = two_stage_train(body, train, 3, TrainConfig(seed=seed))
        accs.append(evaluate(model, test).accuracy)
    assert np.mean(accs) > 0.8, accs

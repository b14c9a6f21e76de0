import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import pretrained_pair
from ncprobe.core import DatasetSplit, FeatureMatrix
from ncprobe.errors import CannotTargetClassifier, DimensionMismatch, InvalidSpec, LayerIndexOutOfRange, TargetTooLarge
from ncprobe.network import NetworkSpec, init_network, scl_combine
from ncprobe.synth import hard_task, make_classification_task
from ncprobe.training import desk_config
from ncprobe.transfer import (
    FineTuneMethod,
    accuracy_from_logits,
    adaptive_avg_pool,
    evaluate,
    layerwise_probe,
    make_plan,
    probe_layer,
    run_transfer,
)

LP = FineTuneMethod.linear_probe()


def small_net(depth=2):
    return init_network(NetworkSpec(4, [5] * depth, 3, seed=0))


def test_plans():
    net = small_net()
    assert make_plan(net, LP).trainable_mask == (False, False, True)
    assert make_plan(net, FineTuneMethod.layer_ft(1)).trainable_mask == (True, False, True)
    scl = make_plan(net, FineTuneMethod.scl_ft(2))
    assert scl.trainable_mask == (False, True, True) and scl.uses_skip and scl.skip_source_layer == 2
    assert make_plan(net, FineTuneMethod.full_ft()).trainable_mask == (True, True, True)
    assert not make_plan(net, LP).uses_skip


def test_plan_errors():
    net = small_net(3)
    with pytest.raises(LayerIndexOutOfRange):
        make_plan(net, FineTuneMethod.scl_ft(5))
    with pytest.raises(LayerIndexOutOfRange):
        make_plan(net, FineTuneMethod.layer_ft(0))
    with pytest.raises(CannotTargetClassifier):
        make_plan(net, FineTuneMethod.layer_ft(4))
    with pytest.raises(InvalidSpec):
        FineTuneMethod("layer")
    with pytest.raises(InvalidSpec):
        FineTuneMethod("linear", 2)


def test_pool_examples():
    assert adaptive_avg_pool([1, 2, 3, 4], 2).tolist() == [1.5, 3.5]
    assert adaptive_avg_pool([1, 2, 3], 2).tolist() == [1.0, 2.5]
    v = np.array([0.1, -3.0, 7.25])
    out = adaptive_avg_pool(v, 3)
    assert np.array_equal(out, v) and out is not v
    with pytest.raises(TargetTooLarge):
        adaptive_avg_pool(v, 4)
    with pytest.raises(TargetTooLarge):
        adaptive_avg_pool(v, 0)


@given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**31))
def test_pool_preserves_mean(m, q, seed):
    v = np.random.default_rng(seed).standard_normal((3, m * q))
    assert np.allclose(adaptive_avg_pool(v, m).mean(axis=-1), v.mean(axis=-1), rtol=0, atol=1e-12)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31))
def test_pool_block_sizes(d, m, seed):
    if m > d:
        return
    v = np.random.default_rng(seed).standard_normal(d)
    out = adaptive_avg_pool(v, m)
    bounds = [(b * d) // m for b in range(m + 1)]
    assert all(bounds[b + 1] - bounds[b] in (d // m, -(-d // m)) for b in range(m))
    assert np.allclose(out, [v[bounds[b]:bounds[b + 1]].mean() for b in range(m)], rtol=0, atol=1e-14)


def test_scl_examples():
    assert scl_combine(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])).tolist() == [[4.0, 6.0]]
    assert scl_combine(np.array([[1.0, 2.0]]), np.array([[10.0, 20.0, 30.0, 40.0]])).tolist() == [[11.0, 22.0, 30.0, 40.0]]
    h = np.array([[1.0, -2.0]])
    assert scl_combine(h, np.zeros((1, 3))).tolist() == [[1.0, -2.0, 0.0]]


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
def test_scl_symmetric(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, a)), rng.standard_normal((2, b))
    assert np.array_equal(scl_combine(x, y), scl_combine(y, x))


def test_accuracy_examples():
    labels = np.array([0, 2, 1, 1])
    eye = np.eye(3)
    assert accuracy_from_logits(eye[labels], labels) == 1.0
    assert accuracy_from_logits(eye[(labels + 1) % 3], labels) == 0.0
    assert accuracy_from_logits(np.zeros((4, 3)), np.zeros(4, int)) == 1.0
    with pytest.raises(DimensionMismatch):
        accuracy_from_logits(np.zeros((3, 3)), labels)


def _toy_split(rng, k=3, d=4, n=12):
    mk = lambda: FeatureMatrix.from_arrays(rng.standard_normal((n, d)), np.arange(n) % k, k)
    return DatasetSplit(mk(), mk())


def test_full_ft_zero_lr_is_noop(rng):
    net = small_net()
    split = _toy_split(rng)
    cfg = desk_config(epochs=1, lr_max=0.0, lr_min=0.0)
    res = run_transfer(net, split, FineTuneMethod.full_ft(), cfg)
    ref = run_transfer(net, split, LP, cfg)
    for a, b in zip(res.network.layers, ref.network.layers):
        assert a.weight.tobytes() == b.weight.tobytes()
    assert res.test_accuracy == ref.test_accuracy
    assert all(a.weight.tobytes() == b.weight.tobytes() for a, b in zip(res.network.layers[:2], net.layers[:2]))


@pytest.mark.parametrize("method", [LP, FineTuneMethod.layer_ft(1), FineTuneMethod.scl_ft(1), FineTuneMethod.layer_ft(2)])
def test_frozen_layers_untouched(rng, method):
    net = small_net()
    res = run_transfer(net, _toy_split(rng), method, desk_config(epochs=3, batch_size=4))
    mask = make_plan(res.network, method).trainable_mask
    for frozen, a, b in zip(mask[:-1], res.network.layers, net.layers):
        assert (a.weight.tobytes() == b.weight.tobytes()) == (not frozen)


def test_param_ordering():
    net = small_net(3)
    split = _toy_split(np.random.default_rng(0))
    cfg = desk_config(epochs=1)
    counts = {str(m): run_transfer(net, split, m, cfg) for m in
              [LP, FineTuneMethod.layer_ft(2), FineTuneMethod.scl_ft(2), FineTuneMethod.full_ft()]}
    p = [counts[k].params_trainable for k in ("linear", "layer(2)", "scl(2)", "full")]
    assert p[0] < p[1] == p[2] < p[3]
    assert p == [18, 48, 48, 103]
    assert counts["full"].percent_trainable == 100.0
    assert counts["linear"].percent_trainable == pytest.approx(100 * 18 / 103)


def test_result_shape_and_json(rng):
    net = small_net()
    res = run_transfer(net, _toy_split(rng), FineTuneMethod.scl_ft(1), desk_config(epochs=2))
    assert len(res.layer_metrics) == 3
    d = json.loads(json.dumps(res.to_dict()))
    assert set(d) == {"method", "layer", "test_accuracy", "penultimate_nc1", "combined_nc1", "params_trainable",
                      "params_total", "percent_trainable", "per_layer"}
    assert [row["layer"] for row in d["per_layer"]] == [1, 2, "combined"]
    assert set(d["per_layer"][0]) == {"layer", "nc1", "etf_deviation", "cdnv", "numerical_rank"}
    assert d["penultimate_nc1"] == d["per_layer"][1]["nc1"]
    lp = run_transfer(net, _toy_split(rng), LP, desk_config(epochs=2)).to_dict()
    assert lp["combined_nc1"] is None and lp["layer"] is None and len(lp["per_layer"]) == 2


def test_scl_non_uniform_widths(rng):
    net = init_network(NetworkSpec(4, [7, 3], 3, seed=1))
    res = run_transfer(net, _toy_split(rng), FineTuneMethod.scl_ft(1), desk_config(epochs=2))
    assert res.network.classifier.weight.shape == (3, 7)


def test_downstream_dim_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        run_transfer(small_net(), _toy_split(rng, d=5), LP, desk_config(epochs=1))


def test_evaluate_uses_skip(rng):
    net = small_net()
    split = _toy_split(rng)
    method = FineTuneMethod.scl_ft(1)
    res = run_transfer(net, split, method, desk_config(epochs=3))
    assert evaluate(res.network, split.test, plan=make_plan(res.network, method)) == res.test_accuracy


def test_pool_too_large(rng):
    with pytest.raises(TargetTooLarge):
        layerwise_probe(small_net(), _toy_split(rng), pool_dim=6, config=desk_config(epochs=1))


def test_identity_pool_unchanged(rng):
    split = _toy_split(rng)
    cfg = desk_config(epochs=3)
    a = probe_layer(small_net(), split, 2, None, cfg)
    b = probe_layer(small_net(), split, 2, 5, cfg)
    assert a == b


def test_probe_penultimate_equals_linear_probe():
    _, tgt, net, _ = pretrained_pair(0)
    cfg = desk_config(0, epochs=30)
    row = probe_layer(net, tgt, net.encoder_depth, None, cfg)
    res = run_transfer(net, tgt, LP, cfg)
    assert row.accuracy == res.test_accuracy
    assert row.nc1 == res.penultimate_nc1


def test_random_net_probe_near_chance():
    task = make_classification_task(hard_task(0))
    net = init_network(NetworkSpec(task.d, [64] * 5, task.n_classes, seed=0))
    rows = layerwise_probe(net, task, config=desk_config(0, epochs=50))
    chance = 1 / task.n_classes
    assert len(rows) == 5
    assert all(r.accuracy <= chance + 0.15 for r in rows)


@pytest.mark.slow
@pytest.mark.parametrize("layer", [3, 5])
def test_partial_ft_beats_linear_probe(layer):
    wins = {"layer": 0, "scl": 0}
    for seed in range(3):
        _, tgt, net, _ = pretrained_pair(seed)
        cfg = desk_config(seed)
        lp = run_transfer(net, tgt, LP, cfg)
        for kind in wins:
            r = run_transfer(net, tgt, FineTuneMethod(kind, layer), cfg)
            wins[kind] += r.test_accuracy >= lp.test_accuracy and r.penultimate_nc1 <= lp.penultimate_nc1
    assert all(w >= 2 for w in wins.values()), wins

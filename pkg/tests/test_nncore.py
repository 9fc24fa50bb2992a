import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compactssl import nncore as nn
from compactssl.errors import DimensionError, FormatError, NumericError, ParameterError, SpecError


def dense_net(n_in=4, n_out=2, hidden=None):
    head = [nn.flatten()]
    if hidden:
        head += [nn.dense(n_in, hidden), nn.relu(), nn.dense(hidden, n_out)]
    else:
        head += [nn.dense(n_in, n_out)]
    return nn.NetworkSpec((1, 1, n_in), [], head + [nn.softmax()], name="dense")


def small_conv_net(n_classes=3):
    return nn.conv_net((4, 6), n_classes, input_shape=(2, 8, 8), name="tiny")


def zero_model(spec):
    m = nn.init_model(spec, 0)
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    return m


# forward / softmax -----------------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    np.testing.assert_allclose(nn.softmax_rows(np.array([[1.0, 0.0]])), [[0.7311, 0.2689]], atol=1e-4)


def test_zero_weight_dense_gives_uniform():
    m = zero_model(dense_net(5, 4))
    x = np.random.default_rng(0).random((3, 1, 1, 5))
    np.testing.assert_allclose(nn.forward(m, x), np.full((3, 4), 0.25), atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(row, shift):
    logits = np.array([row])
    p = nn.softmax_rows(logits)
    assert abs(p.sum() - 1) < 1e-6
    assert np.all(p >= 0)
    np.testing.assert_allclose(nn.softmax_rows(logits + shift), p, atol=1e-6)


def test_forward_rows_are_distributions():
    m = nn.init_model(nn.compact_net(4), 3)
    x = np.random.default_rng(1).random((5, 1, 32, 32)).astype(np.float32)
    p = nn.forward(m, x)
    assert p.shape == (5, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)


def test_forward_shape_mismatch():
    m = nn.init_model(nn.compact_net(3), 0)
    with pytest.raises(DimensionError):
        nn.forward(m, np.zeros((2, 1, 16, 16), np.float32))


def test_forward_non_finite_input_is_numeric_error():
    m = nn.init_model(dense_net(), 0)
    x = np.zeros((1, 1, 1, 4))
    x[0, 0, 0, 1] = np.nan
    with pytest.raises(NumericError):
        nn.forward(m, x)


# loss --------------------------------------------------------------------------


def test_cross_entropy_examples():
    assert nn.cross_entropy(np.array([[1.0, 0.0]]), np.array([0])) <= 1e-11
    assert nn.cross_entropy(np.array([[0.5, 0.5]]), np.array([0])) == pytest.approx(0.69315, abs=1e-5)
    two = nn.cross_entropy(np.array([[1.0, 0.0], [0.5, 0.5]]), np.array([0, 0]))
    assert two == pytest.approx(0.34657, abs=1e-5)


def test_cross_entropy_clamps_zero_probability():
    loss = nn.cross_entropy(np.array([[0.0, 1.0]]), np.array([0]))
    assert loss == pytest.approx(-np.log(1e-12))


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        nn.cross_entropy(np.array([[0.5, 0.5]]), np.array([2]))


# backward ----------------------------------------------------------------------


def test_zero_dense_bias_gradient_sums_to_zero():
    m = zero_model(dense_net(4, 2))
    x = np.random.default_rng(2).random((4, 1, 1, 4))
    g = nn.backward(m, x, np.array([0, 1, 0, 1]))
    np.testing.assert_allclose(g["head.1.bias"].sum(), 0, atol=1e-12)


def test_duplicated_batch_gives_same_gradients():
    m = nn.init_model(small_conv_net(), 4, "float64")
    rng = np.random.default_rng(3)
    x, y = rng.random((3, 2, 8, 8)), np.array([0, 1, 2])
    g1 = nn.backward(m, x, y)
    g2 = nn.backward(m, np.concatenate([x, x]), np.concatenate([y, y]))
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-10, atol=1e-14)


def test_gradient_shapes_match_params():
    m = nn.init_model(nn.standard_net(5), 0)
    x = np.random.default_rng(0).random((2, 1, 32, 32)).astype(np.float32)
    g = nn.backward(m, x, np.array([1, 4]))
    assert {k: v.shape for k, v in g.items()} == {k: v.shape for k, v in m.params.items()}


def test_grad_check_dense_only():
    m = nn.init_model(dense_net(6, 3, hidden=5), 7, "float64")
    rng = np.random.default_rng(7)
    assert nn.grad_check(m, rng.random((4, 1, 1, 6)), rng.integers(0, 3, 4), h=1e-5) < 1e-6


def test_grad_check_conv_pool():
    m = nn.init_model(small_conv_net(), 7, "float64")
    rng = np.random.default_rng(7)
    assert nn.grad_check(m, rng.random((3, 2, 8, 8)), np.array([0, 1, 2]), h=1e-5) < 1e-5


def test_grad_check_with_relu_exactly_at_zero():
    # zero weights put every hidden pre-activation at exactly 0
    spec = dense_net(3, 2, hidden=4)
    m = nn.init_model(spec, 1, "float64")
    m.params["head.1.weight"][:] = 0
    m.params["head.1.bias"][:] = 0
    x = np.random.default_rng(1).random((2, 1, 1, 3))
    assert nn.grad_check(m, x, np.array([0, 1])) < 1e-5


def test_grad_check_preconditions():
    m = nn.init_model(dense_net(), 0)
    x = np.zeros((1, 1, 1, 4))
    with pytest.raises(ParameterError):
        nn.grad_check(m, x, np.array([0]))
    with pytest.raises(ParameterError):
        nn.grad_check(m.astype("float64"), x, np.array([0]), h=1e-2)


# optimizer ---------------------------------------------------------------------


def scalar_model(p0):
    m = nn.init_model(dense_net(1, 2), 0, "float64")
    m.params = {"head.1.weight": np.array([[p0, 0.0]]), "head.1.bias": np.zeros(2)}
    return m


def test_sgd_plain_step():
    m = scalar_model(1.0)
    nn.sgd_step(m, {"head.1.weight": np.array([[2.0, 0.0]])}, lr=0.1, momentum=0.0)
    assert m.params["head.1.weight"][0, 0] == pytest.approx(0.8)


def test_sgd_momentum_two_steps():
    m = scalar_model(0.0)
    g = {"head.1.weight": np.array([[1.0, 0.0]])}
    nn.sgd_step(m, g, 0.1, 0.9)
    assert m.params["head.1.weight"][0, 0] == pytest.approx(-0.1)
    nn.sgd_step(m, g, 0.1, 0.9)
    assert m.params["head.1.weight"][0, 0] == pytest.approx(-0.29)


def test_sgd_zero_lr_is_identity():
    m = nn.init_model(nn.compact_net(3), 5)
    before = nn.param_hash(m)
    x = np.random.default_rng(0).random((2, 1, 32, 32)).astype(np.float32)
    nn.sgd_step(m, nn.backward(m, x, np.array([0, 2])), 0.0, 0.9)
    assert nn.param_hash(m) == before


def test_sgd_non_finite_update():
    m = scalar_model(0.0)
    with pytest.raises(NumericError):
        nn.sgd_step(m, {"head.1.weight": np.array([[np.inf, 0.0]])}, 0.1)


def test_sgd_rejects_bad_hyperparameters():
    m = scalar_model(0.0)
    with pytest.raises(ParameterError):
        nn.sgd_step(m, {}, -0.1)
    with pytest.raises(ParameterError):
        nn.sgd_step(m, {}, 0.1, momentum=1.0)


# specs, heads, counting --------------------------------------------------------


def test_count_examples():
    assert nn.count_params([nn.dense(10, 5)]) == 55
    spec = nn.NetworkSpec((1, 1, 10), [nn.flatten()], [nn.dense(10, 5), nn.softmax()])
    assert nn.count_flops(spec) == 100
    assert nn.count_params([nn.conv2d(1, 4, 3)]) == 40
    assert nn.count_params([]) == 0


@pytest.mark.parametrize("make", [nn.compact_net, nn.standard_net])
def test_count_params_matches_serialized_elements(make):
    m = nn.init_model(make(6), 0)
    assert nn.count_params(m.spec) == sum(v.size for v in m.params.values())


def test_reference_sizes():
    assert nn.count_params(nn.compact_net(3)) < nn.count_params(nn.standard_net(3))
    assert nn.count_flops(nn.compact_net(3)) < nn.count_flops(nn.standard_net(3))


def test_spec_errors():
    with pytest.raises(SpecError):
        nn.infer_shapes(nn.NetworkSpec((1, 8, 8), [nn.conv2d(1, 2, kernel=2)], [nn.flatten(), nn.dense(128, 2), nn.softmax()]))
    with pytest.raises(SpecError):
        nn.infer_shapes(nn.NetworkSpec((1, 8, 8), [nn.conv2d(1, 2)], [nn.flatten(), nn.dense(128, 2)]))
    with pytest.raises(SpecError):
        nn.infer_shapes(nn.NetworkSpec((1, 8, 8), [nn.conv2d(3, 2)], [nn.flatten(), nn.dense(128, 2), nn.softmax()]))


def test_replace_head_keeps_body_bitwise():
    base = nn.init_model(nn.standard_net(10), 1)
    new = nn.replace_head(base, 4, seed=9)
    assert nn.param_hash(new, new.body_names()) == nn.param_hash(base, base.body_names())
    x = np.random.default_rng(0).random((3, 1, 32, 32)).astype(np.float32)
    assert nn.forward(new, x).shape == (3, 4)
    assert nn.replace_head(base, 4, seed=9) == new


def test_replace_head_same_classes_reinitializes_head():
    base = nn.init_model(nn.compact_net(3), 1)
    new = nn.replace_head(base, 3)
    assert nn.param_hash(new, new.head_names()) != nn.param_hash(base, base.head_names())
    with pytest.raises(ParameterError):
        nn.replace_head(base, 1)


def test_init_is_seeded():
    a, b, c = (nn.init_model(nn.compact_net(3), s) for s in (2, 2, 3))
    assert a == b
    assert a != c


# serialization -----------------------------------------------------------------


@pytest.mark.parametrize("precision", ["float32", "float64"])
def test_save_load_roundtrip(tmp_path, precision):
    m = nn.init_model(nn.compact_net(5), 11, precision)
    path = nn.save_model(m, tmp_path / "m.ssdm")
    back = nn.load_model(path)
    assert back == m
    assert back.rng_seed == 11 and back.precision == precision


def test_payload_size_is_four_bytes_per_param():
    spec = nn.NetworkSpec((1, 1, 99), [nn.flatten()], [nn.dense(99, 10), nn.softmax()])
    m = nn.init_model(spec, 0)
    assert nn.count_params(spec) == 1000
    _, _, payload, _ = nn.decode_container(nn.model_to_bytes(m))
    assert len(payload) == 4000


def test_corrupted_files():
    raw = nn.model_to_bytes(nn.init_model(nn.compact_net(3), 0))
    with pytest.raises(FormatError, match="offset 0"):
        nn.model_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        nn.model_from_bytes(raw[:-3])
    with pytest.raises(FormatError, match="trailing"):
        nn.model_from_bytes(raw + b"\0")
    bad_version = raw[:4] + (7).to_bytes(2, "little") + raw[6:]
    with pytest.raises(FormatError, match="version"):
        nn.model_from_bytes(bad_version)


def test_file_layout():
    m = nn.init_model(nn.compact_net(3), 0, "float64")
    raw = nn.model_to_bytes(m)
    assert raw[:4] == b"SSDM"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert raw[6] == 1

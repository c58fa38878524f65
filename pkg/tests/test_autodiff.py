import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cycnpf.autodiff import (
    Adam,
    Graph,
    ShapeError,
    Tensor,
    backward,
    grad_check,
    load_checkpoint,
    ops,
    save_checkpoint,
)

from oracles import cycle_loss_case, op_cases

TOL = 1e-4
CASES = op_cases(np.random.default_rng(20))


@pytest.mark.parametrize("name,fn,params", CASES, ids=[c[0] for c in CASES])
def test_op_gradient_matches_finite_differences(name, fn, params):
    assert grad_check(fn, params) < TOL


@pytest.mark.parametrize("rho", [0.7, 0.0])
def test_cycle_objective_gradient(rho):
    _, fn, params = cycle_loss_case(np.random.default_rng(5), rho=rho)
    assert grad_check(fn, params, per="tensor") < TOL


def test_cycle_objective_gradient_is_linear_in_rho():
    # at rho = 1e-8 the reverse-module gradient is far below finite-difference
    # resolution, so check the decomposition grad = grad_stot + rho * grad_cycle
    model, _, params = cycle_loss_case(np.random.default_rng(6))
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(5, 50)), rng.normal(size=(5, 50))
    parts = []
    for term in range(2):
        model.graph.zero_grad()
        parts.append(backward(model.loss_terms(a, b)[term], params))
    model.graph.zero_grad()
    full = backward(model.cycle_loss(a, b, rho=1e-8), params)
    for k in params:
        assert np.allclose(full[k], parts[0][k] + 1e-8 * parts[1][k], rtol=1e-12, atol=1e-300)


def test_ops_keep_float32():
    x = Tensor(np.ones((2, 3, 4), np.float32), requires_grad=True)
    w = Tensor(np.ones((2, 4, 5), np.float32), requires_grad=True)
    y = ops.tanh(ops.conv1d(x, w, causal=True))
    assert y.dtype == np.float32
    g = backward(ops.sum(y), {"x": x, "w": w})
    assert g["x"].dtype == np.float32


def test_causal_conv_ignores_future():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 12, 2))
    w = rng.normal(size=(2, 2, 3))
    base = ops.conv1d(x, w, dilation=4, causal=True).data
    x2 = x.copy()
    x2[0, 7:] += 5.0
    moved = ops.conv1d(x2, w, dilation=4, causal=True).data
    assert np.array_equal(base[0, :7], moved[0, :7])
    assert not np.allclose(base[0, 7:], moved[0, 7:])


def test_same_conv_keeps_length():
    y = ops.conv1d(np.zeros((1, 9, 2)), np.zeros((3, 2, 4)), dilation=3)
    assert y.shape == (1, 9, 4)


def test_gru_sequence_equals_chained_cells():
    rng = np.random.default_rng(1)
    hid = 4
    x = rng.normal(size=(2, 6, 3))
    h = rng.normal(size=(2, hid))
    w = [rng.normal(size=s) for s in ((3, 3 * hid), (hid, 3 * hid), (3 * hid,), (3 * hid,))]
    seq = ops.gru_sequence(x, h, *w).data
    for t in range(6):
        h = ops.gru_cell(x[:, t], h, *w).data
        assert np.allclose(seq[:, t], h, atol=1e-12)


def test_shape_errors_are_raised():
    with pytest.raises(ShapeError):
        ops.matmul(np.zeros((2, 3)), np.zeros((4, 5)))
    with pytest.raises(ShapeError):
        ops.add(np.zeros((2, 3)), np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        ops.embedding(np.array([7]), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        backward(Tensor(np.zeros(3), requires_grad=True))


def test_unreachable_parameter_gets_zero_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    g = backward(ops.sum(ops.square(a)), {"a": a, "b": b})
    assert np.array_equal(g["b"], np.zeros(3))
    assert np.array_equal(g["a"], 2 * np.ones(3))


def test_detach_blocks_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    g = backward(ops.sum(ops.mul(ops.detach(a), a)), {"a": a})
    assert np.array_equal(g["a"], np.ones(3))


def test_adam_first_step_moves_by_lr():
    graph = Graph(np.float64)
    p = graph.param("w", np.array([1.0, -2.0]))
    opt = Adam(graph.params, lr=0.1)
    opt.step({"w": np.array([3.0, -0.5])})
    assert np.allclose(p.data, [0.9, -1.9])


def test_adam_skips_nonfinite_update():
    graph = Graph(np.float64)
    p = graph.param("w", np.zeros(2))
    opt = Adam(graph.params)
    assert not opt.step({"w": np.array([np.nan, 1.0])})
    assert opt.state["nonfinite_skips"] == 1 and opt.state["step"] == 0
    assert np.array_equal(p.data, np.zeros(2))


def test_adam_eps_override_changes_small_gradient_steps():
    graph = Graph(np.float64)
    graph.param("a", np.zeros(1))
    graph.param("b", np.zeros(1))
    opt = Adam(graph.params, lr=1.0, eps=1e-8, eps_overrides={"b": 1e-16})
    opt.step({"a": np.array([1e-8]), "b": np.array([1e-8])})
    assert abs(graph["a"].data[0]) < 0.6
    assert abs(graph["b"].data[0] + 1.0) < 1e-6


@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(0, 1000))
def test_checkpoint_roundtrip_bit_exact(tmp_path_factory, shape, seed):
    rng = np.random.default_rng(seed)
    params = {"a": rng.normal(size=shape).astype(np.float32), "b": np.float32(rng.normal(size=(2,)))}
    stem = tmp_path_factory.mktemp("ck") / "model"
    save_checkpoint(stem, "toy", params, {"k": 1})
    manifest, back = load_checkpoint(stem, "toy")
    assert list(back) == ["a", "b"]
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()
    assert manifest["hyperparameters"] == {"k": 1}


def test_checkpoint_kind_mismatch(tmp_path):
    save_checkpoint(tmp_path / "m", "toy", {"a": np.zeros(2)})
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "m", "other")


def test_graph_load_state_is_strict():
    g = Graph()
    g.param("w", np.zeros((2, 2)))
    with pytest.raises(KeyError):
        g.load_state({"v": np.zeros((2, 2))})
    with pytest.raises(ShapeError):
        g.load_state({"w": np.zeros(3)})


def test_grad_check_refuses_large_problems():
    big = Tensor(np.zeros(10_001), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: ops.sum(big), {"x": big})

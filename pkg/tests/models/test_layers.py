import numpy as np
import pytest

from mtnet.autodiff import Tensor, grad_check
from mtnet.autodiff import functional as F
from mtnet.models import ModelParams
from mtnet.models.layers import (
    MeanPoolLinear,
    NaryTreeLSTM,
    PredictionHead,
    SiblingAttention,
)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def chain_lstm_step(x, h, c, W, U, b):
    """Plain LSTM step written against the raw parameter arrays."""
    i = _sigmoid(x @ W["i"] + h @ U["i"] + b["i"])
    f = _sigmoid(x @ W["f"] + h @ U["f"] + b["f"])
    o = _sigmoid(x @ W["o"] + h @ U["o"] + b["o"])
    u = np.tanh(x @ W["u"] + h @ U["u"] + b["u"])
    c = i * u + f * c
    return o * np.tanh(c), c


@pytest.fixture
def params():
    return ModelParams(rng=np.random.default_rng(0))


class TestNaryTreeLSTM:
    def test_unary_cell_is_a_chain_lstm(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=5, child_dim=6, hidden_size=6, fanout=1
        )
        for gate in ("i", "f", "o", "u"):
            cell.b[gate].data[...] = np.random.default_rng(1).normal(size=6)
        W = {g: t.data for g, t in cell.W.items()}
        U = {g: t.data for g, t in cell.U.items()}
        b = {g: t.data for g, t in cell.b.items()}

        rng = np.random.default_rng(2)
        h, c = np.zeros((100, 6)), np.zeros((100, 6))
        tree_h, tree_c = Tensor(h), Tensor(c)
        for _ in range(5):
            x = rng.normal(size=(100, 5))
            h, c = chain_lstm_step(x, h, c, W, U, b)
            tree_h, tree_c = cell(
                Tensor(x), F.reshape(tree_h, (100, 1, 6)), F.reshape(tree_c, (100, 1, 6))
            )
            np.testing.assert_allclose(tree_h.data, h, rtol=0, atol=1e-10)
            np.testing.assert_allclose(tree_c.data, c, rtol=0, atol=1e-10)

    def test_missing_children_are_zero(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=3, child_dim=4, hidden_size=4, fanout=3
        )
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3))
        child_h, child_c = rng.normal(size=(2, 2, 4)), rng.normal(size=(2, 2, 4))
        short_h, short_c = cell(Tensor(x), Tensor(child_h), Tensor(child_c))
        padded = lambda a: np.concatenate([a, np.zeros((2, 1, 4))], axis=1)  # noqa: E731
        full_h, full_c = cell(Tensor(x), Tensor(padded(child_h)), Tensor(padded(child_c)))
        np.testing.assert_allclose(short_h.data, full_h.data, atol=1e-14)
        np.testing.assert_allclose(short_c.data, full_c.data, atol=1e-14)

    def test_saturated_forget_gate_passes_child_cells(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=3, child_dim=4, hidden_size=4, fanout=2
        )
        cell.b["f"].data[...] = 20.0
        rng = np.random.default_rng(5)
        x = Tensor(0.1 * rng.normal(size=(6, 3)))
        child_h = Tensor(0.1 * rng.normal(size=(6, 1, 4)))
        child_c = rng.normal(size=(6, 1, 4))
        _, c = cell(x, child_h, Tensor(child_c))
        _, input_only = cell(x, child_h, Tensor(np.zeros_like(child_c)))
        # with the cell of the only child removed, c is i * u
        np.testing.assert_allclose(c.data - input_only.data, child_c[:, 0], atol=1e-6)

    def test_child_order_matters(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=3, child_dim=4, hidden_size=4, fanout=2
        )
        rng = np.random.default_rng(0)
        x, children = Tensor(rng.normal(size=(1, 3))), rng.normal(size=(1, 2, 4))
        h, _ = cell(x, Tensor(children))
        swapped, _ = cell(x, Tensor(children[:, ::-1]))
        assert not np.allclose(h.data, swapped.data)

    def test_without_cells_has_no_forget_gate(self, params):
        """"""
        NaryTreeLSTM(
            params,
            "leaf",
            input_dim=3,
            child_dim=4,
            hidden_size=4,
            fanout=2,
            with_cells=False,
        )
        assert "leaf.U_f" not in params
        assert "leaf.U_i" in params

    def test_too_many_children(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=3, child_dim=4, hidden_size=4, fanout=1
        )
        with pytest.raises(ValueError):
            cell(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 2, 4))))

    def test_gradients(self, params):
        """"""
        cell = NaryTreeLSTM(
            params, "irc", input_dim=3, child_dim=4, hidden_size=4, fanout=2
        )
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        child_h = Tensor(rng.normal(size=(3, 2, 4)), requires_grad=True)
        child_c = Tensor(rng.normal(size=(3, 2, 4)), requires_grad=True)

        def fn(x, child_h, child_c, *_):
            h, c = cell(x, child_h, child_c)
            return F.sum(F.mul(h, c))

        tensors = [x, child_h, child_c] + [params[name] for name in params]
        assert grad_check(fn, tensors, rng=rng).passed


class TestMeanPoolLinear:
    def test_mean_of_present_children(self, params):
        """"""
        pool = MeanPoolLinear(params, "pool", child_dim=2, hidden_size=2)
        pool.W.data[...] = np.eye(2)
        children = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]]]))
        h, c = pool(None, children, present=np.array([[True, True, False]]))
        np.testing.assert_allclose(h.data, [[2.0, 3.0]])
        np.testing.assert_array_equal(c.data, np.zeros((1, 2)))


class TestSiblingAttention:
    @pytest.fixture
    def attention(self, params):
        return SiblingAttention(params, "iac", width=6, n_layers=2, n_heads=2, ffn_dim=8)

    def test_permutation_equivariance(self, attention):
        """"""
        x = np.random.default_rng(0).normal(size=(1, 4, 6))
        perm = np.array([2, 0, 3, 1])
        out, _ = attention(Tensor(x))
        permuted, _ = attention(Tensor(x[:, perm]))
        np.testing.assert_allclose(permuted.data, out.data[:, perm], atol=1e-12)

    def test_padding_is_ignored(self, attention):
        """"""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 3, 6))
        padded = np.concatenate([x, rng.normal(size=(1, 2, 6)) * 100], axis=1)
        mask = np.array([[False, False, False, True, True]])
        out, _ = attention(Tensor(x))
        out_padded, _ = attention(Tensor(padded), mask)
        np.testing.assert_allclose(out_padded.data[:, :3], out.data, atol=1e-12)
        np.testing.assert_array_equal(out_padded.data[:, 3:], 0.0)

    def test_attention_weights(self, attention):
        """"""
        x = np.random.default_rng(0).normal(size=(2, 3, 6))
        mask = np.array([[False, False, True], [False, False, False]])
        _, weights = attention(Tensor(x), mask, return_attention=True)
        assert len(weights) == 2
        assert weights[0].shape == (2, 2, 3, 3)
        np.testing.assert_allclose(weights[0][1].sum(axis=-1), 1.0)
        np.testing.assert_allclose(weights[0][0, :, :2].sum(axis=-1), 1.0)
        np.testing.assert_allclose(weights[0][0, :, :, 2], 0.0, atol=1e-12)

    def test_single_member(self, attention):
        """"""
        out, _ = attention(Tensor(np.ones((1, 1, 6)) * np.arange(6)))
        assert out.shape == (1, 1, 6)
        assert np.isfinite(out.data).all()

    def test_heads_must_divide_width(self, params):
        """"""
        with pytest.raises(ValueError):
            SiblingAttention(params, "iac", width=5, n_heads=2)

    def test_fully_masked_group(self, attention):
        """"""
        with pytest.raises(ValueError):
            attention(Tensor(np.zeros((1, 2, 6))), np.array([[True, True]]))


class TestPredictionHead:
    def test_shape(self, params):
        """"""
        head = PredictionHead(params, "head.poi", in_dim=4, out_dim=9)
        assert head(Tensor(np.ones((3, 4)))).shape == (3, 9)
        with pytest.raises(ValueError):
            head(Tensor(np.ones((3, 5))))


class TestModelParams:
    def test_duplicate_name(self, params):
        """"""
        params.add("a", (2, 2))
        with pytest.raises(ValueError):
            params.add("a", (2, 2))

    def test_round_trip_and_shape_check(self, params):
        """"""
        params.add("a", (2, 3))
        arrays = params.to_arrays()
        other = ModelParams(rng=np.random.default_rng(5))
        other.add("a", (2, 3))
        other.load_arrays(arrays)
        np.testing.assert_array_equal(other["a"].data, params["a"].data)
        with pytest.raises(ValueError):
            bad = ModelParams()
            bad.add("a", (3, 2))
            bad.load_arrays(arrays)
        with pytest.raises(KeyError):
            missing = ModelParams()
            missing.add("b", (1,))
            missing.load_arrays(arrays)

    def test_initialization_is_seeded(self):
        """"""
        a = ModelParams(np.random.default_rng(3))
        b = ModelParams(np.random.default_rng(3))
        np.testing.assert_array_equal(a.add("w", (4, 4)).data, b.add("w", (4, 4)).data)
        assert a.n_parameters == 16

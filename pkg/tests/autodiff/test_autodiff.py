import numpy as np
import pytest

from mtnet.autodiff import Tape, Tensor, backward, grad_check, is_grad_enabled, no_grad
from mtnet.autodiff import functional as F
from mtnet.utils.errors import IdOutOfRangeError, ShapeError


def _tensor(rng, *shape, name=None):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestPrimitives:
    def test_matmul_forward(self):
        """"""
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(F.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])
        np.testing.assert_array_equal(
            F.matmul(a, b, transpose_b=True).data, [[17.0, 23.0], [39.0, 53.0]]
        )

    def test_matmul_shape_error(self):
        """"""
        with pytest.raises(ShapeError) as e:
            F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        assert e.value.primitive == "matmul"
        assert e.value.left == (2, 3)
        assert e.value.right == (2, 3)

    def test_add_shape_error(self):
        """"""
        with pytest.raises(ShapeError):
            F.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_softmax_rows_sum_to_one(self, rng):
        """"""
        out = F.softmax(Tensor(rng.normal(size=(4, 7)) * 50))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_layer_norm_statistics(self, rng):
        """"""
        x = Tensor(rng.normal(3.0, 2.0, size=(5, 16)))
        out = F.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-4)

    def test_gather_negative_index_is_zero_row(self):
        """"""
        table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        out = F.gather(table, np.array([2, -1, 0]))
        np.testing.assert_array_equal(out.data, [[4.0, 5.0], [0.0, 0.0], [0.0, 1.0]])
        backward(F.sum(out))
        np.testing.assert_array_equal(table.grad, [[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])

    def test_gather_out_of_range(self):
        """"""
        with pytest.raises(IdOutOfRangeError):
            F.gather(Tensor(np.zeros((3, 2)), name="E_poi"), np.array([3]))

    def test_masked_fill_blocks_gradient(self):
        """"""
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        mask = np.array([[True, False], [False, True]])
        backward(F.sum(F.masked_fill(x, mask, 0.0)))
        np.testing.assert_array_equal(x.grad, (~mask).astype(float))

    def test_uniform_cross_entropy_is_log_k(self):
        """"""
        loss = F.cross_entropy(Tensor(np.zeros((3, 11))), np.array([0, 5, 10]))
        assert abs(loss.item() - np.log(11)) < 1e-9

    def test_cross_entropy_target_out_of_range(self):
        """"""
        with pytest.raises(IdOutOfRangeError):
            F.cross_entropy(Tensor(np.zeros((1, 4))), np.array([4]))

    def test_dropout_is_identity_in_eval_mode(self, rng):
        """"""
        x = _tensor(rng, 3, 4)
        assert F.dropout(x, 0.5, rng=None, training=False) is x

    @pytest.mark.parametrize("p", [0.1, 0.2, 0.5])
    def test_dropout_is_unbiased_over_masks(self, rng, p):
        """"""
        values = rng.uniform(1.0, 2.0, size=50)
        # every row draws its own mask
        out = F.dropout(Tensor(np.tile(values, (10000, 1))), p, rng=rng, training=True)
        ratios = out.data / values
        assert np.all(np.isclose(ratios, 0.0) | np.isclose(ratios, 1.0 / (1.0 - p)))
        assert abs(ratios.mean() - 1.0) < 0.01


class TestTape:
    def test_no_grad_disables_recording(self, rng):
        """"""
        x = _tensor(rng, 2, 2)
        with no_grad():
            assert not is_grad_enabled()
            y = F.tanh(x)
        assert is_grad_enabled()
        assert y.is_leaf and not y.requires_grad

    def test_topological_order_and_counts(self, rng):
        """"""
        x = _tensor(rng, 3)
        y = F.sum(F.mul(F.tanh(x), F.sigmoid(x)))
        tape = Tape.from_tensor(y)
        assert len(tape) == 4
        assert tape.records[-1].op == "sum"
        assert tape.op_counts() == {"tanh": 1, "sigmoid": 1, "mul": 1, "sum": 1}

    def test_gradients_accumulate(self):
        """"""
        x = Tensor([2.0], requires_grad=True)
        backward(F.sum(F.mul(x, x)))
        backward(F.sum(F.mul(x, x)))
        np.testing.assert_allclose(x.grad, [8.0])
        x.zero_grad()
        assert x.grad is None

    def test_shared_subexpression(self):
        """"""
        x = Tensor([3.0], requires_grad=True)
        y = F.exp(x)
        backward(F.sum(F.add(y, y)))
        np.testing.assert_allclose(x.grad, 2 * np.exp([3.0]))

    def test_backward_needs_scalar(self, rng):
        """"""
        with pytest.raises(ShapeError):
            backward(F.tanh(_tensor(rng, 3)))

    def test_profile_table(self, rng):
        """"""
        x = _tensor(rng, 3)
        table = backward(F.sum(F.relu(x))).profile_table()
        assert "relu" in table and "backward ms" in table


class TestGradCheck:
    @pytest.mark.parametrize(
        "fn",
        [
            lambda a, b: F.sum(F.matmul(a, b)),
            lambda a, b: F.sum(F.mul(F.tanh(F.matmul(a, b)), F.sigmoid(F.matmul(a, b)))),
            lambda a, b: F.sum(F.softmax(F.matmul(a, b), axis=-1) * F.matmul(a, b)),
            lambda a, b: F.mean(F.log(F.add(F.exp(F.matmul(a, b)), 1.0))),
            lambda a, b: F.sum(F.relu(F.concat([a, F.reshape(b, (4, 3))]))),
        ],
    )
    def test_composite_functions(self, rng, fn):
        """"""
        a, b = _tensor(rng, 4, 3), _tensor(rng, 3, 4)
        report = grad_check(fn, [a, b], rng=rng)
        assert report.passed, report.get_table()

    def test_batched_attention_scores(self, rng):
        """"""
        q, k = _tensor(rng, 2, 3, 4), _tensor(rng, 2, 5, 4)
        mask = np.zeros((2, 3, 5), dtype=bool)
        mask[:, :, -1] = True

        def fn(q, k):
            scores = F.masked_fill(F.matmul(q, k, transpose_b=True), mask)
            return F.sum(F.mul(F.softmax(scores), F.matmul(q, k, transpose_b=True)))

        assert grad_check(fn, [q, k], rng=rng).passed

    def test_layer_norm_and_cross_entropy(self, rng):
        """"""
        x, gain, bias = _tensor(rng, 5, 6), _tensor(rng, 6), _tensor(rng, 6)
        targets = np.array([0, 1, 2, 3, 5])

        def fn(x, gain, bias):
            return F.cross_entropy(F.layer_norm(x, gain, bias), targets)

        assert grad_check(fn, [x, gain, bias], rng=rng).passed

    def test_broadcast_gradient(self, rng):
        """"""
        x, bias = _tensor(rng, 4, 3), _tensor(rng, 3)
        assert grad_check(lambda x, b: F.sum(F.tanh(F.add(x, b))), [x, bias]).passed

    def test_detects_wrong_gradient(self, rng):
        """"""
        x = _tensor(rng, 3)

        def wrong(x):
            out = F.sum(F.tanh(x))
            if out._record is not None:
                out._record.backward = lambda grad: (np.zeros_like(x.data),)
            return out

        assert not grad_check(wrong, [x]).passed

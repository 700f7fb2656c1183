"""Tests for tensors, tapes and backward passes."""

import numpy as np
import pytest

from uses_se.exceptions import ContractError, DimensionError, NumericError
from uses_se.numerics.tensor import Tape, Tensor, backward, concat, is_recording, stack, tensor


class TestTensorBasics:
    """Tests for tensor construction and introspection."""

    def test_integer_input_promoted_to_float64(self):
        """Test integer arrays become float64."""
        t = Tensor([1, 2, 3])
        assert t.dtype == np.float64
        assert t.shape == (3,)

    def test_named_dtype(self):
        """Test the tensor() helper honours the f32 dtype name."""
        assert tensor([1.0], dtype="f32").dtype == np.float32

    def test_item_requires_single_element(self):
        """Test item() rejects multi-element tensors."""
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_check_finite_names_tensor(self):
        """Test check_finite reports the tensor's name."""
        t = Tensor([np.nan], name="weights")
        with pytest.raises(NumericError, match="weights"):
            t.check_finite()

    def test_mixed_dtypes_rejected(self):
        """Test binary ops refuse to mix f32 and f64."""
        with pytest.raises(DimensionError, match="mixed dtypes"):
            tensor([1.0], dtype="f32") + tensor([1.0], dtype="f64")

    def test_no_implicit_broadcasting(self):
        """Test elementwise ops require equal shapes."""
        with pytest.raises(DimensionError, match="broadcast explicitly"):
            Tensor(np.ones((2, 3))) + Tensor(np.ones(3))

    def test_explicit_broadcast(self):
        """Test broadcast_to makes shapes compatible."""
        out = Tensor(np.ones((2, 3))) + Tensor(np.arange(3.0)).broadcast_to((2, 3))
        np.testing.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])


class TestTape:
    """Tests for recording and backward."""

    def test_nothing_recorded_outside_tape(self):
        """Test operations outside a tape do not build a graph."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = (x * x).sum()
        assert not y.requires_grad
        assert not is_recording()

    def test_simple_gradient(self):
        """Test d/dx sum(x^2) = 2x."""
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            loss = (x * x).sum()
        backward(tape, loss)
        np.testing.assert_allclose(x.grad, [2.0, -4.0, 6.0])

    def test_gradient_accumulates_for_reused_input(self):
        """Test a tensor used twice receives both contributions."""
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = (x * x + x * 2.0).sum()
        tape.backward(loss)
        np.testing.assert_allclose(x.grad, [8.0])

    def test_nested_tapes_rejected(self):
        """Test only one tape may record at a time."""
        with Tape(), pytest.raises(ContractError), Tape():
            pass

    def test_non_scalar_loss_rejected(self):
        """Test backward refuses a vector loss."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with pytest.raises(ContractError, match="scalar"):
            tape.backward(y)

    def test_tape_consumed_once(self):
        """Test a tape cannot be replayed."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            loss = (x * x).sum()
        tape.backward(loss)
        with pytest.raises(ContractError, match="already"):
            tape.backward(loss)

    def test_loss_without_grad_rejected(self):
        """Test a loss that does not depend on trainable tensors is rejected."""
        with Tape() as tape:
            loss = Tensor([1.0, 2.0]).sum()
        with pytest.raises(ContractError):
            tape.backward(loss)

    def test_non_finite_loss_raises(self):
        """Test a NaN loss is reported before backward runs."""
        x = Tensor([-1.0], requires_grad=True)
        with np.errstate(invalid="ignore"), Tape() as tape:
            loss = x.sqrt().sum()
        with pytest.raises(NumericError, match="loss"):
            tape.backward(loss)


class TestShapeOps:
    """Tests for slicing, concatenation and reshaping gradients."""

    def test_slice_gradient_scatters(self):
        """Test slicing routes gradient only to the selected entries."""
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            loss = x[:, 1:].sum()
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [[0, 1, 1], [0, 1, 1]])

    def test_advanced_indexing_rejected(self):
        """Test fancy indexing is not differentiable."""
        with pytest.raises(ContractError):
            Tensor(np.ones(4))[[0, 1]]  # type: ignore[index]

    def test_concat_and_stack(self):
        """Test concat joins along an axis and stack adds one."""
        a, b = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 2)))
        assert concat([a, b], axis=1).shape == (2, 4)
        assert stack([a, b], axis=0).shape == (2, 2, 2)

    def test_transpose_gradient(self):
        """Test transpose backward applies the inverse permutation."""
        x = Tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
        w = Tensor(np.arange(24.0).reshape(4, 2, 3))
        with Tape() as tape:
            loss = (x.transpose(2, 0, 1) * w).sum()
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, np.transpose(w.data, (1, 2, 0)))

    def test_bad_reshape(self):
        """Test impossible reshapes raise DimensionError."""
        with pytest.raises(DimensionError):
            Tensor(np.ones(5)).reshape(2, 3)

    def test_broadcast_gradient_sums(self):
        """Test broadcast backward sums over the expanded axes."""
        x = Tensor(np.ones((1, 3)), requires_grad=True)
        with Tape() as tape:
            loss = x.broadcast_to((4, 3)).sum()
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [[4.0, 4.0, 4.0]])

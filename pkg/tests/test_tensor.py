import numpy as np
import pytest

from canopy import ShapeError, Tensor, as_f32


def test_wraps_nested_lists_as_float64():
    t = Tensor([[1, 2], [3, 4]])
    assert t.shape == (2, 2)
    assert t.data.dtype == np.float64
    assert t.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_size_is_product_of_shape():
    t = Tensor(np.ones((2, 3, 4, 5)))
    assert t.size == 2 * 3 * 4 * 5
    assert t.data.size == t.size


def test_rank_bounds():
    with pytest.raises(ShapeError):
        Tensor(np.float64(3.0))
    with pytest.raises(ShapeError):
        Tensor(np.ones((1, 1, 1, 1, 1)))
    assert Tensor(np.ones(3)).shape == (3,)
    assert Tensor(np.ones((1, 2, 3, 4))).shape == (1, 2, 3, 4)


def test_zero_dimension_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 0)))


def test_non_finite_rejected():
    with pytest.raises(ShapeError):
        Tensor([1.0, float("nan")])
    with pytest.raises(ShapeError):
        Tensor([1.0, float("inf")])


def test_data_is_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0
    with pytest.raises(AttributeError):
        t.data = np.zeros(2)


def test_constructor_copies_its_input():
    source = np.array([1.0, 2.0])
    t = Tensor(source)
    source[0] = 99.0
    assert t.tolist() == [1.0, 2.0]


def test_factories():
    assert Tensor.zeros((2, 2)).tolist() == [[0.0, 0.0], [0.0, 0.0]]
    assert Tensor.full((2,), 3.5).tolist() == [3.5, 3.5]


def test_as_f32_rounds_to_float32_grid():
    rounded = as_f32(0.1)
    assert rounded == float(np.float32(0.1))
    assert rounded != 0.1
    # idempotent: already-representable values pass through
    again = as_f32(rounded)
    assert np.array_equal(np.asarray(again), np.asarray(rounded))


def test_as_f32_array_rounding_matches_elementwise():
    values = np.array([0.1, 0.2, 1.0, -3.7])
    rounded = as_f32(values)
    assert rounded.dtype == np.float64
    assert np.array_equal(rounded, values.astype(np.float32).astype(np.float64))

import numpy as np
import pytest

from viewmark.geometry import (
    BinaryLayer,
    CellSpec,
    FactorPair,
    ViewSpec,
    default_margin,
    layer_to_vector,
    periodic_pad,
    reshape_vector_to_layer,
    view_offset_table,
)


class TestReshape:
    def test_two_by_two(self):
        layer = reshape_vector_to_layer(np.array([0, 1, 1, 0]), 2, 2)
        assert layer.pixels.tolist() == [[0, 1], [1, 0]]

    def test_identity_case(self):
        assert reshape_vector_to_layer(np.array([1]), 1, 1).pixels.tolist() == [[1]]

    def test_dimension_mismatch_reports_sizes(self):
        with pytest.raises(ValueError, match=r"5.*2x2"):
            reshape_vector_to_layer(np.ones(5), 2, 2)

    def test_unknown_order_rejected(self):
        with pytest.raises(ValueError, match="order"):
            reshape_vector_to_layer(np.array([1]), 1, 1, order="column-major")

    @pytest.mark.parametrize("seed", range(10))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        rows, cols = rng.integers(1, 9, size=2)
        v = rng.integers(0, 2, rows * cols)
        layer = reshape_vector_to_layer(v, rows, cols)
        np.testing.assert_array_equal(layer_to_vector(layer), v)


class TestPeriodicPad:
    def test_single_cell_wrap(self):
        out = periodic_pad(np.array([[1]], dtype=np.uint8), 1)
        np.testing.assert_array_equal(out, np.ones((3, 3), dtype=np.uint8))

    def test_two_by_two_torus(self):
        inp = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        out = periodic_pad(inp, 1)
        # independent index oracle: out[i, j] = inp[(i-1) % 2, (j-1) % 2]
        expected = np.empty((4, 4), dtype=np.uint8)
        for i in range(4):
            for j in range(4):
                expected[i, j] = inp[(i - 1) % 2, (j - 1) % 2]
        np.testing.assert_array_equal(out, expected)
        assert out[0, 0] == inp[1, 1] == 1

    def test_margin_zero_identity(self):
        inp = np.array([[1, 0], [1, 1]], dtype=np.uint8)
        np.testing.assert_array_equal(periodic_pad(inp, 0), inp)

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            periodic_pad(np.ones((2, 2)), -1)

    @pytest.mark.parametrize("margin", [0, 1, 2, 3])
    def test_central_window_equals_input(self, margin):
        rng = np.random.default_rng(margin)
        inp = rng.integers(0, 2, (3, 4)).astype(np.uint8)
        out = periodic_pad(inp, margin)
        assert out.shape == (3 + 2 * margin, 4 + 2 * margin)
        np.testing.assert_array_equal(
            out[margin : margin + 3, margin : margin + 4], inp
        )

    def test_layer_in_layer_out(self):
        layer = BinaryLayer(np.array([[1, 0], [0, 1]]), role="rear")
        out = periodic_pad(layer, 2)
        assert isinstance(out, BinaryLayer)
        assert out.role == "rear"
        assert out.pixels.shape == (6, 6)


class TestViewSpec:
    def test_center_view_is_five(self):
        view = ViewSpec(grid_k=3)
        assert view.offset(5) == (0, 0)
        assert view.center_index == 5

    def test_index_six_is_unit_u_shift(self):
        assert ViewSpec(grid_k=3).offset(6) == (1, 0)

    def test_degenerate_grid(self):
        assert view_offset_table(ViewSpec(grid_k=1)) == [(1, (0, 0))]

    @pytest.mark.parametrize("grid_k", [3, 5])
    def test_bijection_and_negation_symmetry(self, grid_k):
        view = ViewSpec(grid_k=grid_k)
        table = view_offset_table(view)
        assert [i for i, _ in table] == list(range(1, grid_k**2 + 1))
        offsets = [uv for _, uv in table]
        assert len(set(offsets)) == grid_k**2
        assert sorted(offsets) == sorted((-u, -v) for u, v in offsets)

    @pytest.mark.parametrize("grid_k,step", [(3, 1), (5, 1), (3, 2), (5, 3)])
    def test_shifts_bounded_by_default_margin(self, grid_k, step):
        view = ViewSpec(grid_k=grid_k, shift_step=step)
        margin = default_margin(grid_k, step)
        assert view.max_shift == margin
        assert all(max(abs(u), abs(v)) <= margin for u, v in view.offsets)

    def test_even_grid_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            ViewSpec(grid_k=4)

    def test_bad_step_rejected(self):
        with pytest.raises(ValueError, match="shift_step"):
            ViewSpec(grid_k=3, shift_step=0)

    def test_out_of_range_index(self):
        with pytest.raises(ValueError, match="1..9"):
            ViewSpec(grid_k=3).offset(10)


class TestCellSpec:
    def test_cell_side(self):
        assert CellSpec(scale=100, margin=1).cell_side == 102

    def test_scale_too_small(self):
        with pytest.raises(ValueError, match="scale"):
            CellSpec(scale=1, margin=0)

    def test_margin_must_absorb_shifts(self):
        cell = CellSpec(scale=10, margin=1)
        cell.validate_against(ViewSpec(grid_k=3))
        with pytest.raises(ValueError, match="margin"):
            cell.validate_against(ViewSpec(grid_k=5))


class TestValidation:
    def test_layer_rejects_non_binary(self):
        with pytest.raises(ValueError, match="0 or 1"):
            BinaryLayer(np.array([[0, 2]]))

    def test_layer_rejects_bad_role(self):
        with pytest.raises(ValueError, match="role"):
            BinaryLayer(np.array([[0, 1]]), role="middle")

    def test_relaxed_pair_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            FactorPair(np.array([-0.1, 1.0]), np.array([1.0]), "relaxed")

    def test_binary_pair_rejects_fractional(self):
        with pytest.raises(ValueError, match="binary"):
            FactorPair(np.array([0.5]), np.array([1.0]), "binary")

    def test_binary_pair_accepts_bits(self):
        pair = FactorPair(np.array([0.0, 1.0]), np.array([1.0]), "binary")
        assert pair.mode == "binary"

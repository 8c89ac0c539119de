import numpy as np
import pytest

from viewmark.geometry import BinaryLayer, CellSpec, FactorPair, ViewSpec, periodic_pad
from viewmark.imaging import (
    DownsampleOp,
    GrayTarget,
    WeightMask,
    downsample,
    edge_weighted_mask,
    objective,
    render_view,
    rms_error,
    superpose,
    uniform_mask,
    upsample,
)


class TestGrayTarget:
    def test_accepts_two_levels(self):
        t = GrayTarget(np.array([[0.2, 0.5], [0.5, 0.2]]))
        np.testing.assert_array_equal(t.bits(), [[0, 1], [1, 0]])

    def test_rejects_other_values(self):
        with pytest.raises(ValueError, match="0.2 or 0.5"):
            GrayTarget(np.array([[0.3]]))

    def test_rejects_bad_level_order(self):
        with pytest.raises(ValueError, match="low < high"):
            GrayTarget(np.array([[0.5]]), level_low=0.5, level_high=0.2)

    def test_from_bits(self):
        t = GrayTarget.from_bits(np.array([[1, 0]]))
        np.testing.assert_allclose(t.values, [[0.5, 0.2]])


class TestWeightMask:
    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            WeightMask(np.array([[-1.0]]))

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError, match="zero"):
            WeightMask(np.zeros((2, 2)))

    def test_factories(self):
        assert uniform_mask((2, 3)).weights.shape == (2, 3)
        m = edge_weighted_mask((4, 4), edge_weight=0.25)
        assert m.weights[0, 0] == 0.25
        assert m.weights[1, 1] == 1.0


class TestSuperpose:
    def test_all_ones_identity(self):
        ones = BinaryLayer(np.ones((4, 4), dtype=np.uint8))
        for shift in [(0, 0), (1, 0), (-1, 1)]:
            np.testing.assert_array_equal(superpose(ones, ones, shift), np.ones((4, 4)))

    def test_zero_front_absorbs(self):
        front = BinaryLayer(np.zeros((3, 3), dtype=np.uint8))
        rear = BinaryLayer(np.ones((3, 3), dtype=np.uint8), role="rear")
        np.testing.assert_array_equal(superpose(front, rear, (1, 1)), np.zeros((3, 3)))

    def test_hand_unrolled_shift(self):
        core = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        front = periodic_pad(core, 1)
        rear = np.ones_like(front)
        out = superpose(front, rear, (0, 1), margin=1)
        expected = np.empty_like(front, dtype=np.float64)
        rows, cols = front.shape
        for i in range(rows):
            for j in range(cols):
                expected[i, j] = front[i % rows, (j + 1) % cols] * rear[i, j]
        np.testing.assert_array_equal(out, expected)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="(3, 3).*(4, 4)"):
            superpose(np.ones((3, 3)), np.ones((4, 4)), (0, 0))

    def test_shift_beyond_margin(self):
        with pytest.raises(ValueError, match="margin"):
            superpose(np.ones((4, 4)), np.ones((4, 4)), (2, 0), margin=1)

    def test_commutes_with_shift_for_ones_rear(self):
        rng = np.random.default_rng(7)
        front = rng.integers(0, 2, (6, 6)).astype(np.float64)
        rear = np.ones((6, 6))
        shifted_then = superpose(np.roll(front, (-1, -2), axis=(0, 1)), rear, (0, 0))
        then_shifted = superpose(front, rear, (1, 2))
        np.testing.assert_array_equal(shifted_then, then_shifted)


class TestDownsample:
    def test_constant(self):
        op = DownsampleOp(scale=2)
        np.testing.assert_array_equal(downsample(op, np.ones((2, 2))), [[1.0]])

    def test_quarter(self):
        op = DownsampleOp(scale=2)
        np.testing.assert_array_equal(
            downsample(op, np.array([[1.0, 0.0], [0.0, 0.0]])), [[0.25]]
        )

    def test_fig3_cell_geometry(self):
        # one low-res pixel at downsampling scale 100 lives in a 102x102 cell
        op = DownsampleOp(scale=100, margin=1)
        assert op.cell_side == 102
        rng = np.random.default_rng(0)
        hi = rng.integers(0, 2, (102, 102)).astype(np.float64)
        out = downsample(op, hi)
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(hi[1:101, 1:101].mean(), abs=1e-15)

    def test_incompatible_dims_reports_shapes(self):
        with pytest.raises(ValueError, match=r"\(5, 4\).*side 4"):
            downsample(DownsampleOp(scale=2, margin=1), np.ones((5, 4)))

    def test_linear(self):
        rng = np.random.default_rng(1)
        op = DownsampleOp(scale=3, margin=1)
        x = rng.standard_normal((10, 15))
        y = rng.standard_normal((10, 15))
        a, b = 1.7, -0.4
        np.testing.assert_allclose(
            downsample(op, a * x + b * y),
            a * downsample(op, x) + b * downsample(op, y),
            atol=1e-12,
        )

    def test_binary_input_stays_in_unit_interval(self):
        rng = np.random.default_rng(2)
        op = DownsampleOp(scale=4)
        out = downsample(op, rng.integers(0, 2, (8, 12)).astype(float))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_constant_preservation_with_margin(self):
        op = DownsampleOp(scale=3, margin=2)
        c = 0.37
        hi = np.full((op.cell_side * 2, op.cell_side * 3), c)
        np.testing.assert_allclose(downsample(op, hi), c, atol=1e-15)


class TestUpsampleAdjoint:
    @pytest.mark.parametrize("margin", [0, 1, 2])
    def test_adjointness(self, margin):
        rng = np.random.default_rng(margin)
        op = DownsampleOp(scale=3, margin=margin)
        x = rng.standard_normal((2 * op.cell_side, 3 * op.cell_side))
        y = rng.standard_normal((2, 3))
        lhs = float(np.sum(downsample(op, x) * y))
        rhs = float(np.sum(x * upsample(op, y)))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_margins_zero(self):
        op = DownsampleOp(scale=2, margin=1)
        hi = upsample(op, np.array([[1.0]]))
        assert hi.shape == (4, 4)
        assert hi[0, :].sum() == 0.0 and hi[:, 0].sum() == 0.0
        np.testing.assert_allclose(hi[1:3, 1:3], 0.25)


class TestRenderView:
    def test_all_ones(self):
        view = ViewSpec(grid_k=3)
        cell = CellSpec(scale=4, margin=1)
        ones = BinaryLayer(np.ones((cell.cell_side * 2,) * 2, dtype=np.uint8))
        for idx in range(1, 10):
            np.testing.assert_array_equal(
                render_view(ones, ones, view, idx, cell), np.ones((2, 2))
            )

    def test_zero_rear(self):
        view = ViewSpec(grid_k=3)
        cell = CellSpec(scale=4, margin=1)
        front = BinaryLayer(np.ones((cell.cell_side,) * 2, dtype=np.uint8))
        rear = BinaryLayer(np.zeros_like(front.pixels), role="rear")
        np.testing.assert_array_equal(render_view(front, rear, view, 5, cell), [[0.0]])

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(3)
        view = ViewSpec(grid_k=3)
        cell = CellSpec(scale=5, margin=1)
        shape = (cell.cell_side * 2, cell.cell_side * 2)
        front = BinaryLayer(rng.integers(0, 2, shape).astype(np.uint8))
        rear = BinaryLayer(rng.integers(0, 2, shape).astype(np.uint8), role="rear")
        for idx in (1, 5, 9):
            out = render_view(front, rear, view, idx, cell)
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestObjective:
    def _pair(self):
        return FactorPair(np.zeros(2), np.zeros(2), "relaxed")

    def test_exact_fit_is_zero(self):
        t = GrayTarget(np.full((2, 2), 0.5))
        assert objective(t, uniform_mask((2, 2)), t.values, self._pair(), 0, 0) == 0.0

    def test_zero_mask_annihilates(self):
        t = GrayTarget(np.full((2, 2), 0.5))
        rendered = np.zeros((2, 2))
        assert objective(t, np.zeros((2, 2)), rendered, self._pair(), 0, 0) == 0.0

    def test_hand_arithmetic(self):
        t = GrayTarget(np.array([[0.5]]))
        val = objective(t, np.array([[2.0]]), np.array([[0.3]]), self._pair(), 0, 0)
        assert val == pytest.approx(0.08, abs=1e-15)

    def test_l2_terms(self):
        t = GrayTarget(np.array([[0.5]]))
        pair = FactorPair(np.array([2.0]), np.array([3.0]), "relaxed")
        val = objective(t, np.ones((1, 1)), t.values, pair, 0.5, 0.1)
        assert val == pytest.approx(0.5 * 4 + 0.1 * 9, abs=1e-15)

    def test_shape_mismatch(self):
        t = GrayTarget(np.full((2, 2), 0.2))
        with pytest.raises(ValueError, match="shape mismatch"):
            objective(t, np.ones((2, 2)), np.zeros((3, 3)), self._pair(), 0, 0)

    def test_negative_lambda_rejected(self):
        t = GrayTarget(np.array([[0.2]]))
        with pytest.raises(ValueError, match="nonnegative"):
            objective(t, np.ones((1, 1)), t.values, self._pair(), -1, 0)


class TestRms:
    def test_identical(self):
        x = np.full((3, 3), 0.5)
        assert rms_error(x, x) == 0.0

    def test_constant_difference(self):
        target = np.full((4, 5), 0.5)
        rendered = np.full((4, 5), 0.2)
        assert rms_error(target, rendered) == pytest.approx(0.3, abs=1e-15)

    def test_recompute_oracle(self):
        rng = np.random.default_rng(9)
        t = rng.random((6, 7))
        r = rng.random((6, 7))
        expected = float(np.sqrt(np.mean((t - r) ** 2)))
        assert rms_error(t, r) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            rms_error(np.zeros((2, 2)), np.zeros((2, 3)))

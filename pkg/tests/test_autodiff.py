import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import check_op_gradients, finite_diff, rel_error
from urwkv import autodiff as ad
from urwkv.autodiff import Tensor

rng = np.random.default_rng(42)


class TestElementwiseForward:
    def test_known_values(self):
        x = Tensor([0.0, 1.0, -1.0])
        np.testing.assert_allclose(x.sigmoid().data, [0.5, 1 / (1 + np.e**-1), 1 / (1 + np.e)])
        np.testing.assert_allclose(x.tanh().data, np.tanh([0, 1, -1]))
        np.testing.assert_array_equal(x.relu().data, [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(x.abs().data, [0.0, 1.0, 1.0])

    def test_sigmoid_extremes_do_not_overflow(self):
        x = Tensor([-1000.0, 1000.0])
        s = x.sigmoid().data
        assert s[0] == 0.0 and s[1] == 1.0

    def test_clamp_boundaries(self):
        x = Tensor([-0.5, 0.0, 0.5, 1.0, 1.5])
        np.testing.assert_array_equal(x.clamp(0.0, 1.0).data, [0.0, 0.0, 0.5, 1.0, 1.0])

    def test_arithmetic_with_scalars(self):
        x = Tensor([2.0, 4.0])
        np.testing.assert_array_equal((1.0 - x).data, [-1.0, -3.0])
        np.testing.assert_array_equal((x / 2).data, [1.0, 2.0])
        np.testing.assert_array_equal((3 / x).data, [1.5, 0.75])


class TestBackwardMechanics:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2).backward()

    def test_grad_accumulates_across_backward_calls(self):
        x = Tensor([3.0], requires_grad=True)
        y = (x * x).sum()
        y.backward()
        first = x.grad.copy()
        y2 = (x * x).sum()
        y2.backward()
        np.testing.assert_allclose(x.grad, 2 * first)

    def test_shared_subexpression(self):
        # z = s*s + s with s = x*2: dz/dx = (2s + 1) * 2
        x = Tensor([1.5], requires_grad=True)
        s = x * 2.0
        z = (s * s + s).sum()
        z.backward()
        np.testing.assert_allclose(x.grad, (2 * 3.0 + 1) * 2)

    def test_no_grad_blocks_graph(self):
        x = Tensor([1.0], requires_grad=True)
        with ad.no_grad():
            y = x * 3.0
        assert y._backward is None and not y.requires_grad

    def test_deep_chain_iterative_topo(self):
        # thousands of nodes would blow a recursive traversal
        x = Tensor([1.0], requires_grad=True)
        y = x
        for _ in range(5000):
            y = y + 1.0
        y.sum().backward()
        np.testing.assert_allclose(x.grad, 1.0)

    def test_broadcast_gradient_reduces_to_source_shape(self):
        a = Tensor(rng.normal(size=(3, 1, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        (a * b).sum().backward()
        assert a.grad.shape == (3, 1, 4)
        assert b.grad.shape == (5, 4)
        # each source element receives the summed sensitivity of its copies
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (3, 5, 4)).sum(axis=1, keepdims=True))


def _rand(*shape):
    return rng.normal(size=shape)


GRAD_CASES = [
    ("add", lambda t: (t["a"] + t["b"]).sum(), lambda: {"a": _rand(3, 4), "b": _rand(3, 4)}),
    ("add_broadcast", lambda t: (t["a"] + t["b"]).sum(), lambda: {"a": _rand(3, 1), "b": _rand(3, 5)}),
    ("mul", lambda t: (t["a"] * t["b"]).mean(), lambda: {"a": _rand(2, 6), "b": _rand(2, 6)}),
    ("div", lambda t: (t["a"] / (t["b"].abs() + 0.5)).sum(), lambda: {"a": _rand(4, 3), "b": _rand(4, 3)}),
    ("sub_neg", lambda t: (-(t["a"] - t["b"])).sum(), lambda: {"a": _rand(5,), "b": _rand(5,)}),
    ("exp", lambda t: t["a"].exp().sum(), lambda: {"a": _rand(3, 3)}),
    ("sqrt", lambda t: (t["a"].abs() + 1.0).sqrt().sum(), lambda: {"a": _rand(6,)}),
    ("tanh", lambda t: t["a"].tanh().sum(), lambda: {"a": _rand(4, 2)}),
    ("sigmoid", lambda t: t["a"].sigmoid().sum(), lambda: {"a": _rand(7,)}),
    ("relu", lambda t: t["a"].relu().sum(), lambda: {"a": _rand(9,) + 0.1}),
    ("clamp", lambda t: t["a"].clamp(-0.5, 0.5).sum(), lambda: {"a": _rand(8,) * 2}),
    ("abs", lambda t: t["a"].abs().sum(), lambda: {"a": _rand(6,) + 0.3}),
    ("sum_axis", lambda t: (t["a"].sum(axis=1) * t["a"].sum(axis=1)).sum(), lambda: {"a": _rand(3, 4)}),
    ("mean_axes", lambda t: (t["a"].mean(axis=(1, 2)) * t["a"].mean(axis=(1, 2))).sum(), lambda: {"a": _rand(2, 3, 4)}),
    ("matmul", lambda t: ad.matmul(t["a"], t["b"]).sum(), lambda: {"a": _rand(3, 4), "b": _rand(4, 2)}),
    ("reshape_transpose", lambda t: t["a"].reshape(6, 2).transpose(1, 0).sum(axis=1).mean(), lambda: {"a": _rand(3, 4)}),
    ("concat", lambda t: ad.concat([t["a"], t["b"]], axis=1).mean(), lambda: {"a": _rand(2, 3), "b": _rand(2, 5)}),
    ("narrow", lambda t: ad.narrow(t["a"], 1, 1, 2).sum(), lambda: {"a": _rand(3, 5)}),
]


@pytest.mark.parametrize("name,build,make", GRAD_CASES, ids=[c[0] for c in GRAD_CASES])
def test_op_gradients_match_finite_differences(name, build, make):
    tensors = {k: Tensor(v, requires_grad=True) for k, v in make().items()}
    check_op_gradients(lambda: build(tensors), tensors)


class TestConv2d:
    def test_forward_matches_direct_convolution(self):
        x = Tensor(_rand(2, 6, 5))
        w = Tensor(_rand(3, 2, 3, 3))
        b = Tensor(_rand(3))
        out = ad.conv2d(x, w, b, stride=1, padding=1).data
        ref = np.zeros_like(out)
        xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
        for co in range(3):
            for i in range(6):
                for j in range(5):
                    ref[co, i, j] = np.sum(xp[:, i : i + 3, j : j + 3] * w.data[co]) + b.data[co]
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_rejects_non_integral_geometry(self):
        x = Tensor(np.zeros((1, 5, 5)))
        w = Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ValueError, match="integral"):
            ad.conv2d(x, w, stride=2)

    def test_rejects_channel_mismatch(self):
        with pytest.raises(ValueError, match="channel"):
            ad.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 1, 1))))

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, (1, 2)), (2, 1)])
    def test_gradients(self, stride, padding):
        tensors = {
            "x": Tensor(_rand(2, 6, 6), requires_grad=True),
            "w": Tensor(_rand(3, 2, 3, 3), requires_grad=True),
            "b": Tensor(_rand(3), requires_grad=True),
        }
        if padding == (1, 2):
            # widen so the asymmetric pad keeps geometry integral
            tensors["x"] = Tensor(_rand(2, 6, 5), requires_grad=True)
        if stride == 2:
            # 3x3 s2 p1 needs odd extents to stay integral
            tensors["x"] = Tensor(_rand(2, 7, 7), requires_grad=True)
        check_op_gradients(
            lambda: ad.conv2d(tensors["x"], tensors["w"], tensors["b"], stride=stride, padding=padding).sum(),
            tensors,
        )


class TestSpatialOps:
    def test_avg_pool_matches_block_mean(self):
        x = Tensor(_rand(3, 8, 6))
        out = ad.avg_pool2d(x, 2).data
        np.testing.assert_allclose(out, x.data.reshape(3, 4, 2, 3, 2).mean(axis=(2, 4)))

    def test_avg_pool_rejects_ragged(self):
        with pytest.raises(ValueError):
            ad.avg_pool2d(Tensor(np.zeros((1, 7, 8))), 2)

    def test_upsample_nearest_repeats(self):
        x = Tensor(np.arange(6.0).reshape(1, 2, 3))
        out = ad.upsample_nearest2(x).data
        np.testing.assert_array_equal(out, np.repeat(np.repeat(x.data, 2, 1), 2, 2))

    def test_bilinear_constant_preserved(self):
        x = Tensor(np.full((2, 3, 3), 0.7))
        np.testing.assert_allclose(ad.upsample_bilinear(x, 4).data, 0.7)

    def test_bilinear_midpoints(self):
        # 1-D ramp doubled: interior outputs interpolate neighbor centers
        x = Tensor(np.array([[[0.0, 1.0]]]))
        out = ad.upsample_bilinear(x, 2).data[0, 0]
        np.testing.assert_allclose(out, [0.0, 0.25, 0.75, 1.0])

    def test_pad_reflect_matches_numpy(self):
        x = Tensor(_rand(2, 5, 4))
        out = ad.pad_reflect_br(x, 2, 3).data
        np.testing.assert_array_equal(out, np.pad(x.data, ((0, 0), (0, 2), (0, 3)), mode="reflect"))

    def test_pad_reflect_bounds(self):
        with pytest.raises(ValueError):
            ad.pad_reflect_br(Tensor(np.zeros((1, 3, 3))), 3, 0)

    def test_token_round_trip(self):
        x = Tensor(_rand(4, 3, 5), requires_grad=True)
        back = ad.from_tokens(ad.to_tokens(x), 3, 5)
        np.testing.assert_array_equal(back.data, x.data)

    @pytest.mark.parametrize(
        "name,build,shape",
        [
            ("avg_pool", lambda x: ad.avg_pool2d(x, 2).sum(), (2, 4, 6)),
            ("up_nearest", lambda x: ad.upsample_nearest2(x).mean(), (2, 3, 4)),
            ("up_bilinear", lambda x: ad.upsample_bilinear(x, 2).sum(), (2, 3, 4)),
            ("pad_reflect", lambda x: ad.pad_reflect_br(x, 2, 1).sum(), (2, 4, 4)),
            ("crop", lambda x: ad.crop_tl(x, 3, 2).sum(), (2, 4, 4)),
        ],
    )
    def test_gradients(self, name, build, shape):
        # weight the output so the gradient is not a trivial constant field
        weight = rng.normal(size=1)[0]
        tensors = {"x": Tensor(_rand(*shape), requires_grad=True)}
        check_op_gradients(lambda: build(tensors["x"]) * weight, tensors)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sum_then_mean_agrees_with_numpy(seed):
    r = np.random.default_rng(seed)
    arr = r.normal(size=(3, 4, 2))
    t = Tensor(arr)
    np.testing.assert_allclose(t.sum(axis=1).data, arr.sum(axis=1))
    np.testing.assert_allclose(t.mean(axis=(0, 2)).data, arr.mean(axis=(0, 2)), atol=1e-12)
    np.testing.assert_allclose(t.mean().item(), arr.mean(), atol=1e-12)


def test_finite_diff_helper_self_check():
    # the oracle itself: gradient of sum(x^2) is 2x
    arr = _rand(5)
    fd = finite_diff(lambda: float((arr**2).sum()), arr)
    assert rel_error(fd, 2 * arr) < 1e-8

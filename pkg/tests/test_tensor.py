import math

import numpy as np
import pytest

from src.modules.utils import DimensionError, LabelError, Parameter, ParameterError, Tensor, get_default_dtype, set_default_dtype
from src.modules.utils._ops import (
    add,
    batch_norm,
    conv2d,
    global_avg_pool,
    linear,
    matmul,
    mean,
    mul,
    node_mix,
    relu,
    reshape,
    softmax_cross_entropy,
    transpose,
)

GRAD_TOL = 1e-5
# every differentiable op is checked on this many random draws
SEEDS = range(100)


def param(rng, *shape):
    return Parameter(rng.standard_normal(shape))


def conv_oracle(x, w, stride_t, pad_t, pad_v):
    x = np.pad(x, ((0, 0), (0, 0), (pad_t, pad_t), (pad_v, pad_v)))
    n, c, t, v = x.shape
    c_out, _, kt, kv = w.shape
    out_t = (t - kt) // stride_t + 1
    out_v = v - kv + 1
    out = np.zeros((n, c_out, out_t, out_v))
    for b in range(n):
        for o in range(c_out):
            for i in range(out_t):
                for j in range(out_v):
                    patch = x[b, :, i * stride_t:i * stride_t + kt, j:j + kv]
                    out[b, o, i, j] = np.sum(patch * w[o])
    return out


class TestTensor:
    def test_copies_input(self):
        source = np.array([1.0, 2.0])
        tensor = Tensor(source)
        source[0] = 9.0
        assert tensor.data[0] == 1.0

    def test_rejects_empty_extent(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((2, 0)))

    def test_backward_needs_scalar_seed(self):
        x = Parameter(np.ones(3))
        with pytest.raises(DimensionError):
            add(x, x).backward()

    def test_backward_without_grad_rejected(self):
        with pytest.raises(ParameterError):
            Tensor(1.0).backward()

    def test_shared_node_accumulates(self):
        x = Parameter(np.array([3.0]))
        mean(add(x, x), axis=0).backward()
        assert x.grad.tolist() == [2.0]

    def test_long_chain_does_not_recurse(self):
        x = Parameter(np.array([1.0]))
        out = x
        for _ in range(5000):
            out = add(out, 1.0)
        mean(out, axis=0).backward()
        assert x.grad.tolist() == [1.0]

    def test_precision_switch(self):
        set_default_dtype("float32")
        assert Tensor([1.0]).data.dtype == np.float32
        assert get_default_dtype() is np.float32
        set_default_dtype("float64")
        assert Tensor([1.0]).data.dtype == np.float64
        with pytest.raises(ParameterError):
            set_default_dtype("float16")


class TestElementwise:
    def test_relu_values_and_zero_subgradient(self):
        x = Parameter(np.array([-1.0, 0.0, 2.0]))
        out = relu(x)
        assert out.data.tolist() == [0.0, 0.0, 2.0]
        mean(out, axis=0).backward()
        assert x.grad.tolist() == pytest.approx([0.0, 0.0, 1 / 3])

    def test_add_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_ops_do_not_mutate_inputs(self):
        rng = np.random.default_rng(0)
        a, b = param(rng, 3, 4), param(rng, 4)
        before = a.data.copy(), b.data.copy()
        mean(relu(mul(add(a, b), b)), axis=(0, 1)).backward()
        assert np.array_equal(a.data, before[0])
        assert np.array_equal(b.data, before[1])

    def test_global_avg_pool_constant(self):
        out = global_avg_pool(Tensor(np.full((2, 3, 4, 5), 7.0)))
        assert out.shape == (2, 3)
        assert np.all(out.data == 7.0)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_broadcast_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        a, b, c = param(rng, 2, 3, 1), param(rng, 3, 4), param(rng, 4)
        w = rng.standard_normal((2, 3, 4))
        assert grad_check(lambda: weighted(mul(add(a, c), b), w), [a, b, c]) < GRAD_TOL

    @pytest.mark.parametrize("seed", SEEDS)
    def test_relu_mean_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x = param(rng, 4, 5)
        w = rng.standard_normal(5)
        assert grad_check(lambda: weighted(mean(relu(x), axis=0), w), [x]) < GRAD_TOL

    @pytest.mark.parametrize("seed", SEEDS)
    def test_reshape_transpose_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x = param(rng, 2, 3, 4)
        w = rng.standard_normal((4, 6))
        assert grad_check(lambda: weighted(transpose(reshape(x, (6, 4)), (1, 0)), w), [x]) < GRAD_TOL


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a).data, a)
        assert np.array_equal(matmul(a, np.eye(2)).data, a)

    def test_dot_product(self):
        assert matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        a, b = param(rng, 3, 4), param(rng, 4, 2)
        w = rng.standard_normal((3, 2))
        assert grad_check(lambda: weighted(matmul(a, b), w), [a, b]) < GRAD_TOL

    @pytest.mark.parametrize("seed", SEEDS)
    def test_linear_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x, weight, bias = param(rng, 4, 3), param(rng, 3, 2), param(rng, 2)
        w = rng.standard_normal((4, 2))
        assert grad_check(lambda: weighted(linear(x, weight, bias), w), [x, weight, bias]) < GRAD_TOL

    def test_node_mix_matches_loop(self):
        rng = np.random.default_rng(3)
        x, a = rng.standard_normal((2, 3, 4, 5)), rng.standard_normal((5, 5))
        expected = np.zeros_like(x)
        for i in range(5):
            for j in range(5):
                expected[..., i] += a[i, j] * x[..., j]
        assert np.allclose(node_mix(x, a).data, expected, atol=1e-12)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_node_mix_gradients(self, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x, a = param(rng, 1, 2, 2, 3), param(rng, 3, 3)
        w = rng.standard_normal((1, 2, 2, 3))
        assert grad_check(lambda: weighted(node_mix(x, a), w), [x, a]) < GRAD_TOL


class TestConv2d:
    def test_identity_kernel(self):
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3, 1)
        out = conv2d(x, np.ones((1, 1, 1, 1)))
        assert out.data.reshape(-1).tolist() == [1.0, 2.0, 3.0]

    def test_hand_convolution(self):
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3, 1)
        out = conv2d(x, np.ones((1, 1, 2, 1)))
        assert out.data.reshape(-1).tolist() == [3.0, 5.0]

    def test_kernel_larger_than_input(self):
        with pytest.raises(DimensionError):
            conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 1)))

    def test_output_time_extent(self):
        out = conv2d(np.ones((1, 2, 8, 5)), np.ones((3, 2, 3, 1)), stride_t=2, pad_t=1)
        assert out.shape == (1, 3, 4, 5)

    @pytest.mark.parametrize("stride_t,pad_t,pad_v,kernel", [(1, 0, 0, (3, 1)), (2, 1, 1, (3, 3)), (1, 2, 0, (5, 1))])
    def test_matches_loop_oracle(self, stride_t, pad_t, pad_v, kernel):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 8, 5))
        w = rng.standard_normal((4, 3) + kernel)
        expected = conv_oracle(x, w, stride_t, pad_t, pad_v)
        assert np.allclose(conv2d(x, w, stride_t, pad_t, pad_v).data, expected, atol=1e-12)

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("stride_t,pad_t,pad_v,kernel", [(1, 0, 0, (3, 1)), (2, 1, 1, (3, 3))])
    def test_gradients(self, stride_t, pad_t, pad_v, kernel, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x = param(rng, 1, 2, 5, 3)
        w = param(rng, 2, 2, *kernel)
        out_shape = conv2d(x, w, stride_t, pad_t, pad_v).shape
        weights = rng.standard_normal(out_shape)
        assert grad_check(lambda: weighted(conv2d(x, w, stride_t, pad_t, pad_v), weights), [x, w]) < GRAD_TOL


class TestBatchNorm:
    @staticmethod
    def state(channels, gamma=1.0, beta=0.0):
        return (
            Parameter(np.full(channels, gamma)),
            Parameter(np.full(channels, beta)),
            np.zeros(channels),
            np.ones(channels),
        )

    def test_constant_input_maps_to_zero(self):
        gamma, beta, mu, var = self.state(2)
        out = batch_norm(np.full((2, 2, 3, 4), 4.0), gamma, beta, mu, var, training=True)
        assert np.all(out.data == 0.0)

    def test_standardizes_batch(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((8, 2, 5, 6))
        z = (z - z.mean(axis=(0, 2, 3), keepdims=True)) / z.std(axis=(0, 2, 3), keepdims=True)
        gamma, beta, mu, var = self.state(2)
        out = batch_norm(5.0 + 2.0 * z, gamma, beta, mu, var, training=True).data
        assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-9
        assert np.abs(out.std(axis=(0, 2, 3)) - 2.0 / math.sqrt(4.0 + 1e-5)).max() < 1e-9
        assert np.abs(out.std(axis=(0, 2, 3)) - 1.0).max() < 1e-5

    def test_running_statistics(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 3, 2, 5))
        gamma, beta, mu, var = self.state(3)
        batch_norm(x, gamma, beta, mu, var, training=True)
        count = 4 * 2 * 5
        assert np.allclose(mu, 0.1 * x.mean(axis=(0, 2, 3)))
        assert np.allclose(var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * count / (count - 1))

    def test_eval_affine(self):
        gamma, beta, mu, var = self.state(1, gamma=2.0, beta=3.0)
        out = batch_norm(np.ones((1, 1, 1, 1)), gamma, beta, mu, var, training=False)
        assert out.data.item() == pytest.approx(5.0, abs=1e-4)
        assert mu.tolist() == [0.0] and var.tolist() == [1.0]

    def test_width_mismatch(self):
        gamma, beta, mu, var = self.state(3)
        with pytest.raises(DimensionError):
            batch_norm(np.ones((1, 2, 1, 1)), gamma, beta, mu, var, training=True)

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("training", [True, False])
    def test_gradients(self, training, seed, grad_check, weighted):
        rng = np.random.default_rng(seed)
        x = param(rng, 2, 2, 3, 2)
        gamma, beta = Parameter(rng.uniform(0.5, 1.5, 2)), Parameter(rng.standard_normal(2))
        mu, var = rng.standard_normal(2), rng.uniform(0.5, 2.0, 2)
        w = rng.standard_normal((2, 2, 3, 2))
        build = lambda: weighted(batch_norm(x, gamma, beta, mu.copy(), var.copy(), training=training), w)
        assert grad_check(build, [x, gamma, beta]) < GRAD_TOL


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert softmax_cross_entropy([[0.0, 0.0]], np.array([0])).item() == pytest.approx(math.log(2))

    def test_confident_logits(self):
        loss = softmax_cross_entropy([[10.0, -10.0]], np.array([0])).item()
        assert loss == pytest.approx(2.06e-9, rel=1e-2)

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy([[0.0, 0.0]], np.array([2]))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed, grad_check):
        rng = np.random.default_rng(seed)
        logits = param(rng, 4, 3)
        labels = rng.integers(0, 3, 4)
        assert grad_check(lambda: softmax_cross_entropy(logits, labels), [logits]) < GRAD_TOL

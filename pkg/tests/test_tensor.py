"""Tensor core: op semantics, tape behavior, and gradients vs central differences."""
import numpy as np
import pytest

from sasanet import nn
from sasanet.nn import GraphError, ShapeError, Tensor


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def check_op(build, *shapes, seed=0, tol=1e-6):
    """Gradcheck a scalar-valued composite against central differences."""
    rng = np.random.default_rng(seed)
    tensors = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    loss = build(*tensors)
    nn.backward(loss)
    for t in tensors:
        num = numeric_grad(lambda: build(*[x.detach() for x in tensors]).item(), t.data)
        assert t.grad is not None
        np.testing.assert_allclose(t.grad, num, rtol=tol, atol=tol)


class TestForwardSemantics:
    def test_softmax_symmetry(self):
        out = nn.softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_leaky_relu_definition(self):
        assert nn.leaky_relu(Tensor(-1.0), slope=0.01).item() == -0.01
        assert nn.leaky_relu(Tensor(2.0), slope=0.01).item() == 2.0

    def test_masked_softmax_matches_unmasked_prefix(self):
        logits = Tensor([[1.0, 2.0, 3.0]])
        masked = nn.softmax(nn.masked_fill(logits, np.array([[False, False, True]]), -np.inf))
        plain = nn.softmax(Tensor([[1.0, 2.0]]))
        np.testing.assert_allclose(masked.data[0, :2], plain.data[0], atol=1e-15)
        assert masked.data[0, 2] == 0.0
        assert abs(masked.data[0].sum() - 1.0) < 1e-15

    def test_softmax_stability_extreme_logits(self):
        for scale in (1e4, -1e4):
            out = nn.softmax(Tensor([scale, 0.0, -scale]))
            assert np.all(np.isfinite(out.data))
            assert abs(out.data.sum() - 1.0) < 1e-12

    def test_sigmoid_extremes_finite(self):
        out = nn.sigmoid(Tensor([-1e4, 0.0, 1e4]))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0], atol=1e-15)

    def test_matmul_shape_error_names_op(self):
        with pytest.raises(ShapeError, match="matmul.*\\(2, 3\\).*\\(2, 3\\)"):
            nn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_shape_error(self):
        with pytest.raises(ShapeError, match="add"):
            nn.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_embedding_rejects_bad_index(self):
        table = Tensor(np.ones((3, 2)))
        with pytest.raises(ShapeError, match="embedding_lookup"):
            nn.embedding_lookup(table, np.array([0, 3]))

    def test_cumsum(self):
        out = nn.cumsum(Tensor([[1.0, 2.0, 3.0]]), axis=1)
        np.testing.assert_allclose(out.data, [[1.0, 3.0, 6.0]])


class TestBackwardContract:
    def test_quadratic_gradient(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        nn.backward(nn.reduce_sum(nn.mul(w, w)))
        np.testing.assert_allclose(w.grad, [2.0, 4.0])

    def test_constant_loss_leaves_params_untouched(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        loss = nn.reduce_sum(nn.mul(w, w))
        nn.backward(loss)
        # a parameter not on the tape keeps a None gradient
        other = Tensor([5.0], requires_grad=True)
        assert other.grad is None

    def test_non_scalar_loss_rejected(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError, match="scalar"):
            nn.backward(nn.mul(w, w))

    def test_double_backward_rejected(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        loss = nn.reduce_sum(nn.mul(w, w))
        nn.backward(loss)
        with pytest.raises(GraphError, match="backward"):
            nn.backward(loss)

    def test_shared_subgraph_visited_once(self):
        # diamond: y = a*a; loss = y + y; d/da = 4a
        a = Tensor([3.0], requires_grad=True)
        y = nn.mul(a, a)
        nn.backward(nn.reduce_sum(nn.add(y, y)))
        np.testing.assert_allclose(a.grad, [12.0])

    def test_detach_blocks_gradient(self):
        a = Tensor([2.0], requires_grad=True)
        loss = nn.reduce_sum(nn.mul(a, nn.mul(a, 1.0).detach()))
        nn.backward(loss)
        np.testing.assert_allclose(a.grad, [2.0])  # only the live factor

    def test_no_grad_skips_tape(self):
        a = Tensor([2.0], requires_grad=True)
        with nn.no_grad():
            out = nn.mul(a, a)
        assert out.requires_grad is False and out._parents == ()


class TestGradientsAgainstFiniteDifferences:
    def test_add_mul_broadcast(self):
        check_op(lambda a, b: nn.reduce_sum(nn.mul(nn.add(a, b), a)), (3, 4), (1, 4))

    def test_matmul_batched(self):
        check_op(lambda a, b: nn.reduce_sum(nn.matmul(a, b)), (2, 3, 4), (4, 5))

    def test_softmax_masked(self):
        mask = np.zeros((2, 5), dtype=bool)
        mask[:, -1] = True
        weights = Tensor(np.arange(10.0).reshape(2, 5))

        def build(a):
            probs = nn.softmax(nn.masked_fill(a, mask, -np.inf), axis=-1)
            return nn.reduce_sum(nn.mul(probs, weights))

        check_op(build, (2, 5))

    def test_sigmoid_softplus_leaky(self):
        check_op(lambda a: nn.reduce_sum(nn.sigmoid(a)), (7,))
        check_op(lambda a: nn.reduce_sum(nn.softplus(a)), (7,))
        check_op(lambda a: nn.reduce_sum(nn.leaky_relu(a, 0.01)), (7,), seed=3)

    def test_exp_log(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.uniform(0.5, 2.0, size=5), requires_grad=True)
        loss = nn.reduce_sum(nn.mul(nn.log(a), nn.exp(a)))
        nn.backward(loss)
        num = numeric_grad(lambda: nn.reduce_sum(
            nn.mul(nn.log(a.detach()), nn.exp(a.detach()))).item(), a.data)
        np.testing.assert_allclose(a.grad, num, rtol=1e-6, atol=1e-8)

    def test_concat_narrow_transpose_reshape(self):
        def build(a, b):
            c = nn.concat([a, b], axis=1)
            c = nn.transpose(c, (1, 0))
            c = nn.reshape(c, (2, 6))
            return nn.reduce_sum(nn.mul(nn.narrow(c, 1, 1, 4), 2.0))

        check_op(build, (3, 2), (3, 2))

    def test_cumsum_sum_mean(self):
        check_op(lambda a: nn.reduce_sum(nn.mul(nn.cumsum(a, 1), nn.reduce_mean(a, axis=0, keepdims=True))),
                 (3, 4))

    def test_embedding_and_scatter(self):
        rng = np.random.default_rng(0)
        table = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        idx = np.array([0, 2, 2, 4])

        def build_loss():
            rows = nn.embedding_lookup(table, idx)
            base = Tensor(np.zeros((6, 3)))
            out = nn.scatter_add_rows(base, np.array([0, 1, 1, 5]), rows)
            return nn.reduce_sum(nn.mul(out, out))

        loss = build_loss()
        nn.backward(loss)
        num = numeric_grad(lambda: build_loss().item(), table.data)
        np.testing.assert_allclose(table.grad, num, rtol=1e-6, atol=1e-8)

    def test_gather_take_along(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        idx = np.array([[1], [0], [4], [4]])

        def build_loss():
            picked = nn.take_along(a, idx, axis=1)
            rows = nn.gather_rows(a, np.array([0, 0, 3]))
            return nn.reduce_sum(picked) + nn.reduce_sum(nn.mul(rows, rows))

        loss = build_loss()
        nn.backward(loss)
        num = numeric_grad(lambda: build_loss().item(), a.data)
        np.testing.assert_allclose(a.grad, num, rtol=1e-6, atol=1e-8)


class TestAttentionBlock:
    def test_causal_attention_gradcheck(self):
        rng = np.random.default_rng(0)
        store = nn.ParamStore(rng, init_std=0.4)
        attn = nn.MultiHeadAttention(store, "attn", 6, n_heads=2, d_key=3)
        x = Tensor(rng.standard_normal((2, 4, 6)), requires_grad=False)
        mask = nn.causal_block_mask(4)
        target = rng.standard_normal((2, 4, 6))

        def loss_fn():
            diff = nn.sub(attn(x, x, mask), Tensor(target))
            return nn.reduce_sum(nn.mul(diff, diff))

        loss = loss_fn()
        nn.backward(loss)
        for name, p in store.params.items():
            num = numeric_grad(lambda: loss_fn().item(), p.data)
            np.testing.assert_allclose(p.grad, num, rtol=1e-5, atol=1e-7, err_msg=name)

    def test_causal_mask_blocks_future(self):
        rng = np.random.default_rng(0)
        store = nn.ParamStore(rng, init_std=0.4)
        attn = nn.MultiHeadAttention(store, "attn", 6, n_heads=2, d_key=3)
        x = rng.standard_normal((1, 4, 6))
        y = x.copy()
        y[0, 3] += 10.0  # disturb the last position only
        with nn.no_grad():
            a = attn(Tensor(x), Tensor(x), nn.causal_block_mask(4)).data
            b = attn(Tensor(y), Tensor(y), nn.causal_block_mask(4)).data
        np.testing.assert_allclose(a[0, :3], b[0, :3], atol=1e-15)
        assert np.max(np.abs(a[0, 3] - b[0, 3])) > 1e-6


class TestDtypeConfig:
    def test_float32_mode(self):
        nn.set_default_dtype(np.float32)
        try:
            t = nn.Tensor([1.0, 2.0])
            assert t.data.dtype == np.float32
        finally:
            nn.set_default_dtype(np.float64)

    def test_rejects_other_dtypes(self):
        with pytest.raises(ValueError):
            nn.set_default_dtype(np.int32)

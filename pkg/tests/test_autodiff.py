"""Engine tests: every primitive against an independent oracle plus
finite-difference gradient checks."""

import numpy as np
import pytest

from decidenet import autodiff as ad
from decidenet.autodiff import Tape, Tensor


def loop_conv2d(x, k, b, padding):
    """Naive quadruple-loop cross-correlation oracle. x (H,W,C), k (kh,kw,C,O)."""
    h, w, c = x.shape
    kh, kw, _, co = k.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
        xp = np.zeros((h + 2 * ph, w + 2 * pw, c))
        xp[ph:ph + h, pw:pw + w] = x
        oh, ow = h, w
    else:
        xp = x
        oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((oh, ow, co))
    for y in range(oh):
        for xx in range(ow):
            for o in range(co):
                acc = b[o]
                for i in range(kh):
                    for j in range(kw):
                        for ch in range(c):
                            acc += xp[y + i, xx + j, ch] * k[i, j, ch, o]
                out[y, xx, o] = acc
    return out


def fd_gradient(f, arr, idx, h=1e-5):
    """Central finite difference of scalar f() w.r.t. arr[idx]."""
    old = arr[idx]
    arr[idx] = old + h
    fp = f()
    arr[idx] = old - h
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2.0 * h)


def check_gradients(make_loss, params, rng, n_checks=12, h=1e-5, tol=1e-4):
    """Analytic grads of make_loss() vs central differences on random entries."""
    tape = Tape()
    loss = make_loss(tape)
    ad.backward(loss, tape)
    for p in params:
        assert p.grad is not None, "parameter missed by backward"
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_checks, flat.size), replace=False)
        for i in picks:
            num = fd_gradient(lambda: float(make_loss(None).data), flat, i, h)
            ana = gflat[i]
            denom = max(abs(num), abs(ana), 1e-8)
            assert abs(num - ana) / denom < tol, \
                f"grad mismatch at {i}: analytic {ana} vs numeric {num}"


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.arange(9.0).reshape(3, 3, 1))
        k = Tensor(np.ones((1, 1, 1, 1)))
        b = Tensor(np.zeros(1))
        y = ad.conv2d(x, k, b, "same")
        np.testing.assert_array_equal(y.data, x.data)

    def test_all_ones_valid(self):
        x = Tensor(np.ones((3, 3, 1)))
        k = Tensor(np.ones((3, 3, 1, 1)))
        y = ad.conv2d(x, k, Tensor(np.zeros(1)), "valid")
        assert y.data.shape == (1, 1, 1)
        assert y.data[0, 0, 0] == 9.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((5, 5, 2))
        k = rng.standard_normal((3, 3, 2, 3))
        b = rng.standard_normal(3)
        for padding in ("same", "valid"):
            got = ad.conv2d(Tensor(x), Tensor(k), Tensor(b), padding).data
            want = loop_conv2d(x, k, b, padding)
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(8)
        xs = rng.standard_normal((4, 6, 6, 2))
        k = rng.standard_normal((3, 3, 2, 5))
        b = rng.standard_normal(5)
        batched = ad.conv2d(Tensor(xs), Tensor(k), Tensor(b), "same").data
        for i in range(4):
            single = ad.conv2d(Tensor(xs[i]), Tensor(k), Tensor(b), "same").data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 6, 2))
        y = rng.standard_normal((6, 6, 2))
        k = Tensor(rng.standard_normal((3, 3, 2, 4)))
        b = Tensor(np.zeros(4))
        a, c = 1.7, -0.6
        lhs = ad.conv2d(Tensor(a * x + c * y), k, b, "same").data
        rhs = a * ad.conv2d(Tensor(x), k, b, "same").data \
            + c * ad.conv2d(Tensor(y), k, b, "same").data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_channel_mismatch_named(self):
        x = Tensor(np.zeros((4, 4, 3)))
        k = Tensor(np.zeros((3, 3, 5, 2)))
        with pytest.raises(ValueError, match="3 channels.*expect.*5"):
            ad.conv2d(x, k, Tensor(np.zeros(2)), "same")

    def test_even_kernel_same_rejected(self):
        x = Tensor(np.zeros((4, 4, 1)))
        k = Tensor(np.zeros((2, 2, 1, 1)))
        with pytest.raises(ValueError, match="odd kernel"):
            ad.conv2d(x, k, Tensor(np.zeros(1)), "same")

    def test_gradients(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.standard_normal((5, 6, 2)), requires_grad=True)
        k = Tensor(rng.standard_normal((3, 3, 2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        target = Tensor(rng.standard_normal((5, 6, 3)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.conv2d(x, k, b, "same", tape), target, tape)

        check_gradients(make_loss, [x, k, b], rng)


class TestMaxpool2:
    def test_two_by_two(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None])
        y = ad.maxpool2(x)
        assert y.data.shape == (1, 1, 1)
        assert y.data[0, 0, 0] == 4.0

    def test_constant_grid(self):
        x = Tensor(np.full((4, 6, 2), 3.25))
        np.testing.assert_array_equal(ad.maxpool2(x).data, np.full((2, 3, 2), 3.25))

    def test_matches_window_scan(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((6, 6, 1))
        got = ad.maxpool2(Tensor(x)).data
        for r in range(3):
            for c in range(3):
                assert got[r, c, 0] == x[2 * r:2 * r + 2, 2 * c:2 * c + 2, 0].max()

    def test_odd_extent_replicates(self):
        x = np.array([[1.0, 2.0, 9.0],
                      [3.0, 4.0, 0.0],
                      [7.0, 1.0, 5.0]])[:, :, None]
        y = ad.maxpool2(Tensor(x)).data[:, :, 0]
        # replicated col3 = col2, row3 = row2
        np.testing.assert_array_equal(y, [[4.0, 9.0], [7.0, 5.0]])

    def test_gradient_routes_to_argmax(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None], requires_grad=True)
        tape = Tape()
        y = ad.maxpool2(x, tape)
        loss = ad.tensor_sum(y, tape)
        ad.backward(loss, tape)
        np.testing.assert_array_equal(x.grad[:, :, 0], [[0.0, 0.0], [0.0, 1.0]])

    def test_gradients(self):
        rng = np.random.default_rng(12)
        x = Tensor(rng.standard_normal((6, 6, 2)), requires_grad=True)
        target = Tensor(rng.standard_normal((3, 3, 2)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.maxpool2(x, tape), target, tape)

        check_gradients(make_loss, [x], rng)

    def test_gradients_odd_extents(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.standard_normal((5, 7, 1)), requires_grad=True)
        target = Tensor(rng.standard_normal((3, 4, 1)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.maxpool2(x, tape), target, tape)

        check_gradients(make_loss, [x], rng)


class TestPointwise:
    def test_relu_values(self):
        y = ad.relu(Tensor(np.array([-1.0, 2.0])))
        np.testing.assert_array_equal(y.data, [0.0, 2.0])

    def test_sigmoid_half(self):
        assert ad.sigmoid(Tensor(np.zeros(1))).data[0] == 0.5

    def test_sigmoid_range_strict(self):
        y = ad.sigmoid(Tensor(np.array([-1e4, -50.0, 0.0, 50.0, 1e4]))).data
        assert (y > 0).all() and (y < 1).all()

    def test_sigmoid_gradient_fd(self):
        rng = np.random.default_rng(14)
        xs = rng.uniform(-4, 4, size=10)
        for v in xs:
            x = Tensor(np.array([v]), requires_grad=True)
            tape = Tape()
            y = ad.sigmoid(x, tape)
            ad.backward(ad.tensor_sum(y, tape), tape)
            h = 1e-6
            sig = lambda t: 1.0 / (1.0 + np.exp(-t))
            num = (sig(v + h) - sig(v - h)) / (2 * h)
            assert abs(x.grad[0] - num) < 1e-7

    def test_relu_gradients(self):
        rng = np.random.default_rng(15)
        # keep away from the kink at 0
        data = rng.standard_normal((4, 4, 2))
        data[np.abs(data) < 0.05] = 0.5
        x = Tensor(data, requires_grad=True)
        target = Tensor(rng.standard_normal((4, 4, 2)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.relu(x, tape), target, tape)

        check_gradients(make_loss, [x], rng)


class TestUpsample:
    def test_constant_from_single_cell(self):
        y = ad.upsample_bilinear(Tensor(np.full((1, 1, 1), 2.5)), (4, 5))
        np.testing.assert_array_equal(y.data, np.full((4, 5, 1), 2.5))

    def test_identity_target(self):
        x = np.random.default_rng(16).standard_normal((3, 4, 2))
        y = ad.upsample_bilinear(Tensor(x), (3, 4))
        np.testing.assert_array_equal(y.data, x)

    def test_hand_interpolated_2x2_to_4x4(self):
        # corners [[0,1],[2,3]]: value at (r,c) is 2r/3 + c/3
        x = Tensor(np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None])
        y = ad.upsample_bilinear(x, (4, 4)).data[:, :, 0]
        expected = np.array([[2.0 * r + c for c in range(4)] for r in range(4)]) / 3.0
        np.testing.assert_allclose(y, expected, atol=1e-12)

    def test_downscale_rejected(self):
        with pytest.raises(ValueError, match="smaller than input"):
            ad.upsample_bilinear(Tensor(np.zeros((4, 4, 1))), (2, 4))

    def test_gradients(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.standard_normal((3, 4, 2)), requires_grad=True)
        target = Tensor(rng.standard_normal((7, 9, 2)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.upsample_bilinear(x, (7, 9), tape), target, tape)

        check_gradients(make_loss, [x], rng)

    def test_conserving_keeps_sum_and_gradients(self):
        rng = np.random.default_rng(18)
        data = rng.uniform(0.1, 1.0, size=(3, 3, 1))
        x = Tensor(data, requires_grad=True)
        y = ad.upsample_conserving(x, (7, 7))
        np.testing.assert_allclose(y.data.sum(), data.sum(), atol=1e-12)
        target = Tensor(rng.standard_normal((7, 7, 1)))

        def make_loss(tape):
            return ad.sq_diff_sum(ad.upsample_conserving(x, (7, 7), tape), target, tape)

        check_gradients(make_loss, [x], rng)


class TestBackwardAndSgd:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.random.default_rng(19).standard_normal((3, 3)), requires_grad=True)
        tape = Tape()
        ad.backward(ad.tensor_sum(x, tape), tape)
        np.testing.assert_array_equal(x.grad, np.ones((3, 3)))

    def test_half_square_gradient_is_x(self):
        data = np.random.default_rng(20).standard_normal(5)
        x = Tensor(data, requires_grad=True)
        tape = Tape()
        loss = ad.scale(ad.tensor_sum(ad.mul(x, x, tape), tape), 0.5, tape)
        ad.backward(loss, tape)
        np.testing.assert_allclose(x.grad, data, atol=1e-14)

    def test_nonscalar_loss_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(x, Tape())

    def test_fresh_tapes_are_independent(self):
        x = Tensor(np.ones(4), requires_grad=True)
        for _ in range(2):
            tape = Tape()
            ad.backward(ad.tensor_sum(x, tape), tape)
            np.testing.assert_array_equal(x.grad, np.ones(4))
            x.zero_grad()

    def test_disjoint_losses_on_one_tape(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.full(3, 2.0), requires_grad=True)
        tape = Tape()
        la = ad.tensor_sum(ad.mul(a, a, tape), tape)
        lb = ad.tensor_sum(b, tape)
        ad.backward(la, tape)
        ad.backward(lb, tape)
        np.testing.assert_array_equal(a.grad, 2.0 * np.ones(3))
        np.testing.assert_array_equal(b.grad, np.ones(3))

    def test_grad_aliasing_safe(self):
        # two sums of the same tensor must not share grad buffers
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        tape = Tape()
        s = ad.add(a, b, tape)
        loss = ad.tensor_sum(s, tape)
        ad.backward(loss, tape)
        a.grad += 5.0
        np.testing.assert_array_equal(b.grad, np.ones(3))

    def test_sgd_basic(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([2.0])
        ad.sgd_step([p], 0.5)
        assert p.data[0] == 0.0
        assert p.grad is None

    def test_sgd_zero_lr(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        p.grad = np.array([2.0])
        ad.sgd_step([p], 0.0)
        assert p.data[0] == 3.0

    def test_sgd_missing_grad_rejected(self):
        with pytest.raises(ValueError, match="no gradient"):
            ad.sgd_step([Tensor(np.zeros(2), requires_grad=True)], 0.1)

    def test_sgd_converges_on_quadratic(self):
        # f(p) = 0.5*(p0-3)^2 + 2*(p1+1)^2, minimiser (3, -1)
        p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
        for _ in range(100):
            tape = Tape()
            shifted = ad.sub(p, Tensor(np.array([3.0, -1.0])), tape)
            sq = ad.mul(shifted, shifted, tape)
            loss = ad.tensor_sum(ad.mul(sq, Tensor(np.array([0.5, 2.0])), tape), tape)
            ad.backward(loss, tape)
            ad.sgd_step([p], 0.2)
        np.testing.assert_allclose(p.data, [3.0, -1.0], atol=1e-6)


class TestDeterminism:
    def test_forward_backward_bit_identical(self):
        def run():
            rng = np.random.default_rng(21)
            x = Tensor(rng.standard_normal((6, 8, 3)))
            k = Tensor(rng.standard_normal((5, 5, 3, 4)), requires_grad=True)
            b = Tensor(rng.standard_normal(4), requires_grad=True)
            tape = Tape()
            y = ad.relu(ad.conv2d(x, k, b, "same", tape), tape)
            y = ad.maxpool2(y, tape)
            loss = ad.sq_diff_sum(y, Tensor(np.zeros(y.data.shape)), tape)
            ad.backward(loss, tape)
            return y.data.copy(), k.grad.copy(), b.grad.copy()

        y1, kg1, bg1 = run()
        y2, kg2, bg2 = run()
        assert np.array_equal(y1, y2)
        assert np.array_equal(kg1, kg2)
        assert np.array_equal(bg1, bg2)

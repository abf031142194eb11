#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: tests/test_nullspace.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: 截断选择、投影构建、闭式 α 与梯度下降对照的单元测试。
'''

import numpy as np
import pytest
import scipy.linalg

from q2n.calibgen import CounterStream, SpectrumSpec, gen_activations, gen_weights
from q2n.errors import AlphaSignError, ArgumentError, DimensionError, NumericalError
from q2n.linalg import EigenBasis, Projector, gram, projector_from_basis, sym_eig
from q2n.nullspace import (
    AlphaVector,
    RatioSelection,
    apply_alpha,
    bp_oracle,
    build_projection,
    prefix_suffix_ratio,
    projected_target,
    q2n_objective,
    select,
    select_rank_index,
    select_rank_nscl_style,
    select_rank_torch_style,
    solve_alpha,
)
from q2n.quantizer import QuantConfig, gptq_quantize, rtn_quantize


def _instance(seed: int, n: int = 16, m: int = 32, c: int = 96):
    """Quantized layer with a decaying activation spectrum and its psr projector."""
    W = gen_weights(n, m, seed=seed).data
    X = gen_activations(SpectrumSpec.decay(m, c, rate=0.8, seed=seed)).data
    q = gptq_quantize(W, X, QuantConfig(bits=2))
    basis = sym_eig(gram(X))
    delta = build_projection(basis, select_rank_index(basis.values)).delta
    return W, X, q, delta


class TestSelectRankIndex:
    """测试前后缀和比值选择"""

    def test_reference_spectrum(self):
        sel = select_rank_index([100.0, 10.0, 1.0, 0.5, 0.01], t=0.1, excluded_top=1)
        assert sel.k == 3
        assert sel.ratio_at_k == pytest.approx(0.51 / 11.0)
        assert sel.method == "psr"

    def test_zero_tail(self):
        assert select_rank_index([5.0, 1.0, 0.0, 0.0], t=0.1, excluded_top=1).k == 2

    def test_all_zero_gives_empty_basis(self):
        sel = select_rank_index([0.0, 0.0, 0.0], t=0.1)
        assert sel.k == 3
        assert sel.ratio_at_k == float("inf")

    def test_single_value(self):
        assert select_rank_index([3.0], t=0.1, excluded_top=0).k == 1

    def test_ratio_invariant(self):
        basis = sym_eig(gram(gen_activations(SpectrumSpec.decay(24, 64, rate=0.7, seed=2))))
        for t in (0.05, 0.1, 0.2):
            sel = select_rank_index(basis.values, t=t)
            assert sel.k < basis.m
            assert sel.ratio_at_k <= t
            assert prefix_suffix_ratio(basis.values, sel.k, 1) == pytest.approx(sel.ratio_at_k)

    def test_larger_t_never_increases_k(self):
        v = sym_eig(gram(gen_activations(SpectrumSpec.decay(32, 64, rate=0.9, seed=1)))).values
        ks = [select_rank_index(v, t=t).k for t in (0.01, 0.05, 0.1, 0.2, 0.5)]
        assert ks == sorted(ks, reverse=True)

    @pytest.mark.parametrize("t", [0.0, -0.1])
    def test_invalid_t(self, t):
        with pytest.raises(ArgumentError):
            select_rank_index([2.0, 1.0], t=t)

    def test_invalid_excluded_top(self):
        with pytest.raises(ArgumentError):
            select_rank_index([2.0, 1.0], excluded_top=2)

    def test_unsorted_values(self):
        with pytest.raises(ArgumentError):
            select_rank_index([1.0, 2.0])


class TestAlternativeSelectors:
    """测试两种对照截断规则"""

    def test_torch_style(self):
        assert select_rank_torch_style([4.0, 2.0, 1e-18]).k == 2
        assert select_rank_torch_style([1.0, 1e-3, 1e-9], rel_cutoff=1e-6).k == 2
        assert select_rank_torch_style([2.0, 2.0, 2.0]).k == 3

    def test_torch_style_zero_spectrum(self):
        assert select_rank_torch_style([0.0, 0.0]).k == 2

    def test_nscl_style(self):
        assert select_rank_nscl_style([100.0, 60.0, 1.0]).k == 2
        assert select_rank_nscl_style([100.0, 40.0, 1.0]).k == 1
        assert select_rank_nscl_style([100.0, 100.0]).k == 1

    def test_nscl_zero_minimum_falls_back(self):
        assert select_rank_nscl_style([4.0, 2.0, 0.0]).k == 2

    def test_dispatch(self):
        v = [100.0, 10.0, 1.0, 0.5, 0.01]
        assert select(v, "psr").k == 3
        assert select(v, "torch").method == "torch"
        assert select(v, "nscl").method == "nscl"
        with pytest.raises(ArgumentError):
            select(v, "svd")


class TestProjection:
    """测试投影构建与目标矩阵"""

    def test_trace_matches(self):
        basis = sym_eig(gram(gen_activations(SpectrumSpec.decay(20, 40, rate=0.6, seed=0))))
        proj = build_projection(basis, select_rank_index(basis.values))
        assert abs(proj.delta.trace - (basis.m - proj.k)) <= 0.5

    def test_k_equals_m(self):
        basis = EigenBasis(values=np.zeros(3), vectors=np.eye(3))
        proj = build_projection(basis, select_rank_index(basis.values))
        np.testing.assert_array_equal(proj.delta.matrix, np.zeros((3, 3)))

    def test_rejects_non_orthonormal_basis(self):
        # 迹仍接近 m − k，但 Δ 不再幂等
        basis = EigenBasis(values=np.array([2.0, 1.0]), vectors=np.array([[0.0, 1.2], [1.0, 0.0]]))
        selection = RatioSelection(k=1, ratio_at_k=0.5, excluded_top=0, threshold_t=0.1)
        with pytest.raises(NumericalError) as exc:
            build_projection(basis, selection)
        assert exc.value.residual > 1e-8

    def test_projected_target_limits(self):
        W = gen_weights(4, 6, seed=0).data
        Wq = rtn_quantize(W, QuantConfig(bits=2)).w_q
        np.testing.assert_allclose(projected_target(W, Wq, np.zeros((6, 6))), W)
        np.testing.assert_allclose(projected_target(W, Wq, np.eye(6)), Wq, atol=1e-14)

    def test_projected_target_shape_mismatch(self):
        with pytest.raises(DimensionError):
            projected_target(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((4, 4)))
        with pytest.raises(DimensionError):
            projected_target(np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((3, 3)))


class TestSolveAlpha:
    """测试闭式 α"""

    def test_identity_when_exact(self):
        W = np.array([[0.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0, 0.0]])
        alpha = solve_alpha(W, W, np.eye(4) * 0.0, lambda_reg=0.2)
        np.testing.assert_array_equal(alpha.values, [1.0, 1.0])

    def test_zero_delta_is_ridge_fit(self):
        W = np.array([[2.0, 0.0]])
        Wq = np.array([[1.0, 0.0]])
        alpha = solve_alpha(W, Wq, np.zeros((2, 2)), lambda_reg=0.2)
        assert alpha.values[0] == pytest.approx((2.0 + 0.2) / (1.0 + 0.2))

    def test_improves_objective(self):
        for seed in range(10):
            W, _, q, delta = _instance(seed)
            alpha = solve_alpha(W, q.w_q, delta, 0.2)
            assert not alpha.opted_out
            assert q2n_objective(W, q.w_q, delta, alpha, 0.2) <= q2n_objective(W, q.w_q, delta, np.ones(len(alpha)), 0.2)

    def test_stationary_point(self):
        W, _, q, delta = _instance(4)
        alpha = solve_alpha(W, q.w_q, delta, 0.2).values
        base = q2n_objective(W, q.w_q, delta, alpha, 0.2)
        for i in (0, 7):
            for step in (1e-4, -1e-4):
                nudged = alpha.copy()
                nudged[i] += step
                assert q2n_objective(W, q.w_q, delta, nudged, 0.2) >= base

    def test_large_lambda_pulls_to_one(self):
        for seed in range(10):
            W, _, q, delta = _instance(seed)
            spreads = [np.max(np.abs(solve_alpha(W, q.w_q, delta, lam).values - 1.0)) for lam in (0.2, 2.0, 20.0, 200.0)]
            assert all(a >= b for a, b in zip(spreads, spreads[1:]))

    def test_negative_optimum_opts_out(self):
        W = np.array([[-1.0, 0.0], [1.0, 1.0]])
        Wq = np.array([[1.0, 0.0], [1.0, 1.0]])
        alpha = solve_alpha(W, Wq, np.zeros((2, 2)), lambda_reg=0.2)
        assert alpha.opted_out == (0,)
        assert alpha.values[0] == 1.0
        assert alpha.values[1] == pytest.approx(1.0)

    def test_invalid_lambda(self):
        with pytest.raises(ArgumentError):
            solve_alpha(np.ones((1, 2)), np.ones((1, 2)), np.zeros((2, 2)), lambda_reg=0.0)


class TestBpOracle:
    """测试梯度下降对照"""

    def test_converges_on_scalar_problem(self):
        W, Wq, delta = np.array([[2.0]]), np.array([[1.0]]), np.zeros((1, 1))
        bp = bp_oracle(W, Wq, delta, lambda_reg=0.2, epochs=200, lr=0.3)
        closed = solve_alpha(W, Wq, delta, lambda_reg=0.2)
        assert bp.values[0] == pytest.approx(closed.values[0], rel=1e-9)
        assert not bp.diverged

    def test_closed_form_never_worse(self):
        W, _, q, delta = _instance(9)
        closed = q2n_objective(W, q.w_q, delta, solve_alpha(W, q.w_q, delta, 0.2), 0.2)
        for epochs in (20, 50, 100):
            for lr in (5e-4, 1e-3, 2e-3):
                bp = bp_oracle(W, q.w_q, delta, 0.2, epochs=epochs, lr=lr)
                assert q2n_objective(W, q.w_q, delta, bp, 0.2) >= closed - 1e-9

    def test_matches_closed_form_per_channel(self):
        stream = CounterStream(9)
        W = stream.gaussian(48).reshape(6, 8)
        Wq = W + 0.1 * stream.gaussian(48).reshape(6, 8)
        Q, _ = scipy.linalg.qr(stream.gaussian(64).reshape(8, 8))
        delta = projector_from_basis(Q, 3)
        closed = solve_alpha(W, Wq, delta, lambda_reg=0.2)
        lr = 0.5 / (float(np.max(np.sum(Wq * Wq, axis=1))) + 0.2)
        bp = bp_oracle(W, Wq, delta, lambda_reg=0.2, epochs=2000, lr=lr)
        assert not closed.opted_out
        np.testing.assert_allclose(bp.values, closed.values, rtol=0, atol=1e-6)

    def test_divergence_is_flagged(self):
        W, Wq, delta = np.array([[2.0]]), np.array([[1.0]]), np.zeros((1, 1))
        bp = bp_oracle(W, Wq, delta, lambda_reg=0.2, epochs=30, lr=5.0)
        assert bp.diverged

    @pytest.mark.parametrize("epochs,lr", [(0, 1e-3), (10, 0.0)])
    def test_invalid_arguments(self, epochs, lr):
        with pytest.raises(ArgumentError):
            bp_oracle(np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), epochs=epochs, lr=lr)


class TestApplyAlpha:
    """测试 α 并入 scale"""

    def test_scales_rows(self):
        q = rtn_quantize(gen_weights(3, 8, seed=0), QuantConfig(bits=2, group_size=4))
        alpha = AlphaVector(values=np.array([1.0, 0.5, 2.0]), lambda_reg=0.2)
        out = apply_alpha(q, alpha)
        np.testing.assert_array_equal(out.codes, q.codes)
        np.testing.assert_array_equal(out.zeros, q.zeros)
        np.testing.assert_allclose(out.w_q, q.w_q * alpha.values[:, None])

    def test_identity_alpha(self):
        q = rtn_quantize(gen_weights(2, 4, seed=1), QuantConfig(bits=2))
        out = apply_alpha(q, AlphaVector(values=np.ones(2), lambda_reg=0.2))
        np.testing.assert_array_equal(out.w_q, q.w_q)

    def test_length_mismatch(self):
        q = rtn_quantize(gen_weights(2, 4, seed=1), QuantConfig(bits=2))
        with pytest.raises(DimensionError):
            apply_alpha(q, AlphaVector(values=np.ones(3), lambda_reg=0.2))

    def test_non_positive(self):
        q = rtn_quantize(gen_weights(2, 4, seed=1), QuantConfig(bits=2))
        with pytest.raises(AlphaSignError) as exc:
            apply_alpha(q, AlphaVector(values=np.array([1.0, -0.5]), lambda_reg=0.2))
        assert exc.value.channels == [1]


class TestLowRankLimit:
    """零空间精确时 (W − W_q)ΔX 消失"""

    def test_exact_rank_residual_vanishes(self):
        for seed in range(20):
            m, r = 32, 12
            X = gen_activations(SpectrumSpec.exact_rank(m=m, c=64, r=r, seed=seed)).data
            W = gen_weights(16, m, seed=seed).data
            q = gptq_quantize(W, X, QuantConfig(bits=2))
            basis = sym_eig(gram(X))
            sel = select_rank_index(basis.values, t=1e-6)
            assert sel.k == r
            delta = projector_from_basis(basis.vectors, sel.k).matrix
            E = W - q.w_q
            assert np.linalg.norm(E @ delta @ X) <= 1e-6 * np.linalg.norm(E) * np.linalg.norm(X)

    def test_projector_type_accepted(self):
        W = np.eye(2)
        alpha = solve_alpha(W, W, Projector(matrix=np.zeros((2, 2))))
        np.testing.assert_array_equal(alpha.values, [1.0, 1.0])

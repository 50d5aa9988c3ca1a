"""Graph convolution against brute-force oracles, adjacency invariants."""

import numpy as np
import pytest

from ptgnn.errors import DimensionError
from ptgnn.graph import (AdjacencyParam, GraphConv, gcn_forward,
                         init_adjacency, temporal_pool)
from ptgnn.numerics import SGD, Tensor, grad_check, tsum


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestGcnForward:
    def test_identity_propagation(self):
        # A=I, W1=W2=I, non-negative E: relu is a no-op, Z_t = E_t
        e = Tensor(np.abs(_rng(1).normal(size=(1, 2, 3, 3))))
        adj = AdjacencyParam(Tensor(np.eye(3)))
        eye = Tensor(np.eye(3))
        out = gcn_forward(e, adj, eye, eye)
        np.testing.assert_allclose(out.data, e.data, rtol=1e-6)

    def test_two_node_swap(self):
        # A swaps the two nodes; applying it twice returns the original
        e = Tensor(np.eye(2)[None, None])  # B=1, T=1, N=2, D=2
        adj = AdjacencyParam(Tensor(np.array([[0.0, 1.0], [1.0, 0.0]])))
        eye = Tensor(np.eye(2))
        out = gcn_forward(e, adj, eye, eye)
        np.testing.assert_allclose(out.data[0, 0], np.eye(2), atol=1e-7)

    def test_zero_embeddings(self):
        e = Tensor(np.zeros((2, 3, 4, 5)))
        adj = init_adjacency(4, _rng(0))
        w1 = Tensor(_rng(1).normal(size=(5, 6)))
        w2 = Tensor(_rng(2).normal(size=(6, 2)))
        np.testing.assert_array_equal(gcn_forward(e, adj, w1, w2).data,
                                      np.zeros((2, 3, 4, 2)))

    def test_node_mismatch(self):
        e = Tensor(np.zeros((1, 2, 3, 4)))
        adj = init_adjacency(5, _rng(0))
        with pytest.raises(DimensionError, match="node count"):
            gcn_forward(e, adj, Tensor(np.eye(4)), Tensor(np.eye(4)))

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_per_node_summation_oracle(self, seed):
        # explicit double loop over nodes, graphs with N <= 4
        rng = _rng(seed)
        n = int(rng.integers(1, 5))
        d, h, do = (int(v) for v in rng.integers(1, 4, size=3))
        b, t = 2, 3
        e = rng.normal(size=(b, t, n, d))
        raw = rng.normal(size=(n, n))
        w1 = rng.normal(size=(d, h))
        w2 = rng.normal(size=(h, do))
        a = 0.5 * (raw + raw.T)

        want = np.zeros((b, t, n, do))
        for bi in range(b):
            for ti in range(t):
                hidden = np.zeros((n, h))
                for i in range(n):
                    acc = np.zeros(h)
                    for j in range(n):
                        acc += a[i, j] * (e[bi, ti, j] @ w1)
                    hidden[i] = np.maximum(acc, 0.0)
                for i in range(n):
                    acc = np.zeros(do)
                    for j in range(n):
                        acc += a[i, j] * (hidden[j] @ w2)
                    want[bi, ti, i] = acc

        got = gcn_forward(Tensor(e, dtype=np.float64),
                          AdjacencyParam(Tensor(raw, dtype=np.float64)),
                          Tensor(w1, dtype=np.float64), Tensor(w2, dtype=np.float64))
        np.testing.assert_allclose(got.data, want, atol=1e-5)


class TestTemporalPool:
    def test_constant_sequence(self):
        z = Tensor(np.full((1, 5, 2, 3), 7.0))
        np.testing.assert_allclose(temporal_pool(z).data, np.full((1, 2, 3), 7.0))

    def test_single_step_identity(self):
        z = Tensor(_rng(0).normal(size=(2, 1, 3, 4)))
        np.testing.assert_allclose(temporal_pool(z).data, z.data[:, 0])

    def test_arithmetic_mean(self):
        z = np.zeros((1, 2, 1, 1))
        z[0, 0], z[0, 1] = 1.0, 3.0
        assert temporal_pool(Tensor(z)).item() == pytest.approx(2.0)

    def test_empty_time_axis(self):
        with pytest.raises(DimensionError):
            temporal_pool(Tensor(np.zeros((1, 0, 2, 2))))

    def test_commutes_with_scaling(self):
        z = _rng(3).normal(size=(2, 4, 3, 2))
        a = temporal_pool(Tensor(z * 2.5)).data
        b = temporal_pool(Tensor(z)).data * 2.5
        np.testing.assert_allclose(a, b, rtol=1e-6)


class TestAdjacency:
    def test_init_near_identity(self):
        adj = init_adjacency(1, _rng(0))
        assert adj.effective().data[0, 0] == pytest.approx(1.0, abs=0.05)

    def test_same_seed_identical(self):
        a = init_adjacency(6, _rng(42)).raw.data
        b = init_adjacency(6, _rng(42)).raw.data
        np.testing.assert_array_equal(a, b)

    def test_symmetry_bitwise(self):
        adj = init_adjacency(8, _rng(1))
        eff = adj.effective().data
        assert np.max(np.abs(eff - eff.T)) == 0.0

    def test_symmetry_after_gradient_steps(self):
        adj = init_adjacency(5, _rng(2))
        opt = SGD({"adj": adj.raw}, lr=0.05)
        x = Tensor(_rng(3).normal(size=(1, 2, 5, 3)))
        w = Tensor(_rng(4).normal(size=(3, 3)))
        for _ in range(100):
            opt.zero_grad()
            loss = tsum(gcn_forward(x, adj, w, w) ** 2.0) * 1e-3
            loss.backward()
            opt.step()
        eff = adj.effective().data
        assert np.max(np.abs(eff - eff.T)) == 0.0

    def test_normalized_variant_rows_bounded(self):
        adj = init_adjacency(4, _rng(5), normalized=True)
        eff = adj.effective().data
        assert np.isfinite(eff).all()
        assert np.max(np.abs(eff - eff.T)) == 0.0


def test_graphconv_grad_check():
    rng = _rng(7)
    gc = GraphConv(3, 2, 4, 2, rng)
    e = Tensor(rng.uniform(-1, 1, size=(2, 3, 3, 2)), requires_grad=True)

    def f():
        return tsum(gc(e) * 0.1)

    report = grad_check(f, [e, gc.adj.raw, gc.w1.w, gc.w2.w], tol=1e-3,
                        max_entries=10)
    assert report.passed, (report.max_rel_err, report.worst)

import numpy as np
import pytest
from cvxopt import matrix, solvers

from slipgrasp import svm
from slipgrasp.errors import DimensionMismatchError, EmptyInputError

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-10
solvers.options["reltol"] = 1e-10
solvers.options["feastol"] = 1e-10


def qp_dual_oracle(K, y, C):
    """Brute-force dual solve with a generic QP solver."""
    n = len(y)
    P = matrix(np.outer(y, y) * K)
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), np.full(n, C)]))
    A = matrix(np.asarray(y, dtype=float)[None, :])
    b = matrix(np.zeros(1))
    sol = solvers.qp(P, q, G, h, A, b)
    alpha = np.array(sol["x"]).ravel()
    return alpha, svm.dual_objective(K, y, alpha)


class TestKernels:
    def test_linear_is_dot_product(self, rng):
        X = rng.normal(size=(5, 3))
        assert np.allclose(svm.linear_kernel(X), X @ X.T)

    def test_rbf_diagonal_ones(self, rng):
        X = rng.normal(size=(6, 4))
        K = svm.rbf_kernel(X, gamma=0.7)
        assert np.allclose(np.diag(K), 1.0)
        assert np.all((K > 0) & (K <= 1.0))

    def test_rbf_matches_direct_formula(self, rng):
        X = rng.normal(size=(4, 3))
        Y = rng.normal(size=(3, 3))
        K = svm.rbf_kernel(X, Y, gamma=0.5)
        for i in range(4):
            for j in range(3):
                expect = np.exp(-0.5 * np.sum((X[i] - Y[j]) ** 2))
                assert K[i, j] == pytest.approx(expect, abs=1e-12)


class TestSmo:
    def test_two_point_analytic_solution(self):
        # -1 at x=-1, +1 at x=+1, linear C=1: f(x) = x, alphas 0.5
        X = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        res = svm.smo_train(svm.linear_kernel(X), y, C=1.0, tol=1e-6)
        assert res.converged
        assert np.allclose(res.alpha, [0.5, 0.5], atol=1e-6)
        assert res.bias == pytest.approx(0.0, abs=1e-6)
        # decision at x=0.5 is positive: f(x) = sum alpha_i y_i x_i x + b = x
        w = res.alpha * y
        assert w @ (X[:, 0] * 0.5) + res.bias == pytest.approx(0.5, abs=1e-6)

    def test_dual_matches_qp_oracle_random_problems(self, rng):
        for trial in range(6):
            n = int(rng.integers(6, 21))
            X = rng.normal(size=(n, 3))
            y = np.where(rng.random(n) > 0.5, 1.0, -1.0)
            if np.all(y == y[0]):
                y[0] = -y[0]
            K = svm.linear_kernel(X) if trial % 2 == 0 else \
                svm.rbf_kernel(X, gamma=0.8)
            C = [1.0, 10.0][trial % 2]
            res = svm.smo_train(K, y, C=C, tol=1e-8, max_iter=200_000)
            _, obj_ref = qp_dual_oracle(K, y, C)
            assert res.converged
            assert res.objective == pytest.approx(obj_ref, abs=1e-6)

    def test_kkt_residual_small_at_convergence(self, rng):
        X = rng.normal(size=(30, 4))
        y = np.where(X[:, 0] + 0.2 * rng.normal(size=30) > 0, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        K = svm.linear_kernel(X)
        res = svm.smo_train(K, y, C=1.0, tol=1e-3)
        assert res.converged
        assert svm.kkt_residual(K, y, res.alpha, 1.0) < 1e-3

    def test_objective_monotone_nondecreasing(self, rng):
        X = rng.normal(size=(25, 3))
        y = np.where(rng.random(25) > 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        res = svm.smo_train(svm.rbf_kernel(X, gamma=1.0), y, C=5.0,
                            tol=1e-8, track_objective=True)
        hist = res.objective_history
        assert hist is not None and hist.size > 2
        assert np.all(np.diff(hist) >= -1e-12)

    def test_equality_constraint_maintained(self, rng):
        X = rng.normal(size=(20, 3))
        y = np.where(rng.random(20) > 0.4, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        res = svm.smo_train(svm.linear_kernel(X), y, C=2.0, tol=1e-6)
        assert abs(np.dot(res.alpha, y)) < 1e-9
        assert np.all(res.alpha >= -1e-12)
        assert np.all(res.alpha <= 2.0 + 1e-12)

    def test_single_class_rejected(self):
        K = np.eye(3)
        with pytest.raises(EmptyInputError):
            svm.smo_train(K, np.ones(3))

    def test_nonconvergence_flagged_not_raised(self, rng):
        X = rng.normal(size=(40, 2))
        y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        res = svm.smo_train(svm.linear_kernel(X), y, C=1e6, tol=1e-12,
                            max_iter=5)
        assert not res.converged
        assert res.iterations == 5


class TestPairwiseSVC:
    def test_two_point_predictions(self):
        clf = svm.PairwiseSVC(kernel="linear", C=1.0)
        clf.fit(np.array([[-1.0], [1.0]]), np.array([0, 1]))
        assert clf.predict([[0.5]])[0] == 1
        assert clf.predict([[-0.5]])[0] == 0
        # pair decision is positive for the first class of the pair (class 0)
        dec = clf.decision_function([[0.5]])
        assert dec[0, 0] < 0
        assert clf.decision_function([[-0.5]])[0, 0] > 0

    def test_xor_with_rbf(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        clf = svm.PairwiseSVC(kernel="rbf", C=1e3, gamma=1.0).fit(X, y)
        assert np.array_equal(clf.predict(X), y)

    def test_three_class_blobs(self, rng):
        centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
        X = np.concatenate(
            [rng.normal(c, 0.4, size=(30, 2)) for c in centers])
        y = np.repeat([0, 1, 2], 30)
        clf = svm.PairwiseSVC(kernel="linear", C=1.0).fit(X, y)
        assert len(clf.pair_models_) == 3
        assert (clf.predict(X) == y).mean() > 0.97
        probe = rng.normal(centers[2], 0.2, size=(10, 2))
        assert np.all(clf.predict(probe) == 2)

    def test_duplicate_interior_point_stable(self, rng):
        centers = np.array([[0.0, 0.0], [5.0, 0.0]])
        X = np.concatenate(
            [rng.normal(c, 0.3, size=(25, 2)) for c in centers])
        y = np.repeat([0, 1], 25)
        probe = rng.normal(size=(30, 2)) + np.array([2.5, 0.0])
        base = svm.PairwiseSVC(kernel="linear").fit(X, y).predict(probe)
        X2 = np.vstack([X, centers[0]])   # deep inside class 0
        y2 = np.append(y, 0)
        again = svm.PairwiseSVC(kernel="linear").fit(X2, y2).predict(probe)
        assert np.array_equal(base, again)

    def test_rbf_support_vector_self_decision(self):
        X = np.array([[0.0], [2.0]])
        y = np.array([0, 1])
        clf = svm.PairwiseSVC(kernel="rbf", C=1e3, gamma=1.0).fit(X, y)
        m = clf.pair_models_[0]
        dec = m.decision(X[:1], "rbf", 1.0)[0]
        k_self = 1.0  # exp(0)
        expect = m.dual_weights[0] * k_self + \
            m.dual_weights[1] * np.exp(-4.0) + m.bias
        assert dec == pytest.approx(expect, abs=1e-12)

    def test_gamma_scale_rule(self, rng):
        X = rng.normal(size=(20, 5)) * 3.0
        y = np.where(X[:, 0] > 0, 1, 0)
        y[0], y[1] = 0, 1
        clf = svm.PairwiseSVC(kernel="rbf").fit(X, y)
        assert clf.gamma_ == pytest.approx(1.0 / (5 * X.var()))

    def test_estimator_params_roundtrip(self):
        clf = svm.PairwiseSVC(kernel="rbf", C=7.0, gamma=0.3)
        params = clf.get_params()
        clone = svm.PairwiseSVC(**params)
        assert clone.get_params() == params

    def test_dimension_mismatch_raises(self, rng):
        clf = svm.PairwiseSVC().fit(rng.normal(size=(10, 3)),
                                    np.array([0] * 5 + [1] * 5))
        with pytest.raises(DimensionMismatchError):
            clf.predict(rng.normal(size=(2, 4)))

    def test_deterministic_fit(self, rng):
        X = rng.normal(size=(40, 4))
        y = np.where(X[:, 0] + X[:, 1] > 0, 1, 0)
        y[0], y[1] = 0, 1
        m1 = svm.PairwiseSVC(kernel="rbf", C=10.0, gamma=0.5).fit(X, y)
        m2 = svm.PairwiseSVC(kernel="rbf", C=10.0, gamma=0.5).fit(X, y)
        for a, b in zip(m1.pair_models_, m2.pair_models_):
            assert np.array_equal(a.dual_weights, b.dual_weights)
            assert a.bias == b.bias

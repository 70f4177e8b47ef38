import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from qmalware.errors import DegenerateLabelsError
from qmalware.featuremaps import FeatureMapConfig, encode_state
from qmalware.qkernel import (
    ClassicalKernelSpec,
    KernelMatrix,
    SvmModel,
    classical_gram,
    classical_kernel,
    cross_gram,
    dual_objective,
    evaluate_metrics,
    gram_matrix,
    quantum_kernel,
    svm_fit,
    svm_predict,
    svm_predict_many,
)

MAPS = ["z", "zz", "zzphi", "pauli"]


def blobs(n, seed, gap=2.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-gap, 0.4, (n // 2, 2)), rng.normal(gap, 0.4, (n - n // 2, 2))])
    y = np.array([-1] * (n // 2) + [1] * (n - n // 2))
    return X, y


def identity_model():
    return svm_fit(np.eye(2), [1, -1], C=1.0)


class TestQuantumKernel:
    @pytest.mark.parametrize("kind", MAPS)
    def test_self_kernel(self, kind):
        x = [0.3, 1.0, 2.2]
        assert quantum_kernel(FeatureMapConfig(kind, 3), x, x) == pytest.approx(1.0, abs=1e-12)

    def test_z_single_qubit_closed_form(self):
        cfg = FeatureMapConfig("z", 1, depth=1)
        assert quantum_kernel(cfg, [0.9], [0.9]) == pytest.approx(1.0)
        assert quantum_kernel(cfg, [0.9], [0.2]) == pytest.approx(np.cos(0.7) ** 2, abs=1e-12)

    def test_zz_matches_dense_states(self):
        rng = np.random.default_rng(8)
        cfg = FeatureMapConfig("zz", 2, depth=2)
        x, y = rng.uniform(0, np.pi, 2), rng.uniform(0, np.pi, 2)
        a, b = encode_state(cfg, x).amplitudes, encode_state(cfg, y).amplitudes
        assert quantum_kernel(cfg, x, y) == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), kind=st.sampled_from(MAPS))
    def test_symmetric(self, seed, kind):
        rng = np.random.default_rng(seed)
        cfg = FeatureMapConfig(kind, 3)
        x, y = rng.uniform(0, np.pi, 3), rng.uniform(0, np.pi, 3)
        assert abs(quantum_kernel(cfg, x, y) - quantum_kernel(cfg, y, x)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            quantum_kernel(FeatureMapConfig("zz", 2), [0.1, 0.2], [0.1])

    def test_shot_estimate(self):
        cfg = FeatureMapConfig("zz", 2)
        x, y = [0.4, 1.3], [0.9, 0.2]
        exact = quantum_kernel(cfg, x, y)
        est = quantum_kernel(cfg, x, y, shots=20_000, seed=3)
        assert abs(est - exact) < 4 * np.sqrt(exact * (1 - exact) / 20_000) + 1e-3
        assert est == quantum_kernel(cfg, x, y, shots=20_000, seed=3)
        assert quantum_kernel(cfg, x, x, shots=100, seed=0) == 1.0


class TestGram:
    def test_single_sample(self):
        G = gram_matrix(FeatureMapConfig("zz", 2), [[0.1, 0.2]])
        np.testing.assert_array_equal(G.values, [[1.0]])

    def test_empty(self):
        with pytest.raises(ValueError):
            gram_matrix(FeatureMapConfig("zz", 2), np.empty((0, 2)))

    @pytest.mark.parametrize("kind", MAPS)
    def test_mercer_properties(self, kind):
        rng = np.random.default_rng(hash(kind) % 1000)
        cfg = FeatureMapConfig(kind, 3)
        for _ in range(20):
            G = gram_matrix(cfg, rng.uniform(0, np.pi, (6, 3))).values
            assert np.max(np.abs(G - G.T)) <= 1e-10
            assert np.max(np.abs(np.diag(G) - 1)) <= 1e-10
            assert np.linalg.eigvalsh(G).min() >= -1e-8

    def test_z_map_closed_form(self):
        X = np.array([[0.1, 0.5], [1.2, 0.3], [2.0, 2.9]])
        G = gram_matrix(FeatureMapConfig("z", 2, depth=1), X).values
        want = np.prod(np.cos(X[:, None, :] - X[None, :, :]) ** 2, axis=2)
        np.testing.assert_allclose(G, want, atol=1e-12)

    def test_entries_match_pairwise_kernel(self):
        rng = np.random.default_rng(2)
        cfg = FeatureMapConfig("pauli", 2)
        X = rng.uniform(0, np.pi, (4, 2))
        G = gram_matrix(cfg, X).values
        for i in range(4):
            for j in range(4):
                assert G[i, j] == pytest.approx(quantum_kernel(cfg, X[i], X[j]), abs=1e-12)

    def test_worker_count_bit_identical(self):
        rng = np.random.default_rng(6)
        cfg = FeatureMapConfig("zz", 3)
        X = rng.uniform(0, np.pi, (9, 3))
        np.testing.assert_array_equal(gram_matrix(cfg, X, workers=1).values, gram_matrix(cfg, X, workers=4).values)

    def test_cross_gram_consistent(self):
        rng = np.random.default_rng(1)
        cfg = FeatureMapConfig("zz", 2)
        A, B = rng.uniform(0, np.pi, (3, 2)), rng.uniform(0, np.pi, (5, 2))
        K = cross_gram(cfg, A, B, ["a", "b", "c"]).values
        assert K.shape == (3, 5)
        assert K[1, 4] == pytest.approx(quantum_kernel(cfg, A[1], B[4]), abs=1e-12)

    def test_csv_round_trip(self, tmp_path):
        G = gram_matrix(FeatureMapConfig("zz", 2), [[0.1, 0.2], [0.7, 1.4]], ids=["s1", "s2"])
        G.to_csv(tmp_path / "k.csv")
        lines = (tmp_path / "k.csv").read_text().splitlines()
        assert lines[0] == "id,s1,s2"
        back = KernelMatrix.from_csv(tmp_path / "k.csv")
        assert back.row_ids == ["s1", "s2"]
        np.testing.assert_array_equal(back.values, G.values)


class TestClassical:
    def test_rbf_self(self):
        assert classical_kernel(ClassicalKernelSpec("rbf"), [1, 2], [1, 2]) == 1.0

    def test_linear(self):
        assert classical_kernel(ClassicalKernelSpec("linear"), [1, 2], [3, 4]) == 11.0

    def test_poly(self):
        spec = ClassicalKernelSpec("poly", degree=2, gamma=1.0, coef0=0.0)
        assert classical_kernel(spec, [1, 0], [1, 0]) == 1.0

    def test_default_gamma(self):
        spec = ClassicalKernelSpec("rbf")
        assert classical_kernel(spec, [0, 0], [1, 1]) == pytest.approx(np.exp(-1.0))
        sig = ClassicalKernelSpec("sigmoid")
        assert classical_kernel(sig, [1, 1], [1, 1]) == pytest.approx(np.tanh(1.0))

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_bad_gamma(self, gamma):
        with pytest.raises(ValueError):
            ClassicalKernelSpec("rbf", gamma=gamma)

    def test_gram_symmetric(self):
        X = np.random.default_rng(0).normal(size=(7, 3))
        for kind in ("linear", "poly", "rbf", "sigmoid"):
            K = classical_gram(ClassicalKernelSpec(kind), X).values
            np.testing.assert_array_equal(K, K.T)


def qp_dual_optimum(K, y, C):
    """Reference dual maximum from a general-purpose constrained solver."""
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    res = minimize(
        lambda a: 0.5 * a @ Q @ a - a.sum(),
        np.zeros(n),
        jac=lambda a: Q @ a - 1,
        bounds=[(0, C)] * n,
        constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y.astype(float)}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 1000},
    )
    return -res.fun


class TestSvm:
    def test_identity_kernel_by_hand(self):
        m = identity_model()
        np.testing.assert_allclose(m.alphas, [1.0, 1.0], atol=1e-9)
        assert m.bias == pytest.approx(0.0, abs=1e-9)
        assert svm_predict(m, [1, 0]) == (1, pytest.approx(1.0))
        assert svm_predict(m, [0, 1]) == (-1, pytest.approx(-1.0))

    def test_tie_goes_positive(self):
        label, value = svm_predict(identity_model(), [0.5, 0.5])
        assert value == pytest.approx(0.0, abs=1e-12) and label == 1

    def test_separable_blobs_linear(self):
        X, y = blobs(20, 0)
        K = classical_gram(ClassicalKernelSpec("linear"), X)
        m = svm_fit(K, y)
        assert np.all(svm_predict_many(m, K) == y)

    def test_degenerate_labels(self):
        with pytest.raises(DegenerateLabelsError):
            svm_fit(np.eye(3), [1, 1, 1])

    @pytest.mark.parametrize("labels", [[0, 1], [2, -1]])
    def test_labels_must_be_signed(self, labels):
        with pytest.raises(ValueError):
            svm_fit(np.eye(2), labels)

    @pytest.mark.parametrize("seed", range(5))
    def test_kkt_and_box(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, np.pi, (16, 2))
        y = np.where(rng.random(16) < 0.5, -1, 1)
        y[:2] = [-1, 1]
        m = svm_fit(gram_matrix(FeatureMapConfig("zz", 2), X), y, C=0.7)
        assert np.all(m.alphas >= 0) and np.all(m.alphas <= 0.7)
        assert abs(m.alphas @ y) < 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_dual_history_monotone(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(25, 3))
        y = np.where(X[:, 0] + 0.3 * rng.normal(size=25) > 0, 1, -1)
        m = svm_fit(classical_gram(ClassicalKernelSpec("rbf"), X), y)
        assert np.all(np.diff(m.dual_history) >= -1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_reaches_qp_optimum(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(12, 2))
        y = np.where(X[:, 0] - X[:, 1] + 0.5 * rng.normal(size=12) > 0, 1, -1)
        y[:2] = [-1, 1]
        K = classical_gram(ClassicalKernelSpec("rbf"), X).values
        m = svm_fit(K, y, C=1.0, tol=1e-6)
        assert dual_objective(m.alphas, m.labels, K) == pytest.approx(qp_dual_optimum(K, y, 1.0), abs=1e-5)

    @pytest.mark.parametrize("scale", [0.25, 4.0])
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, np.pi, (20, 2))
        y = np.where(X[:, 0] > X[:, 1], 1, -1)
        K = gram_matrix(FeatureMapConfig("zz", 2), X).values
        Xt = rng.uniform(0, np.pi, (15, 2))
        Kt = cross_gram(FeatureMapConfig("zz", 2), Xt, X).values
        base = svm_fit(K, y, C=1.0, tol=1e-6)
        scaled = svm_fit(K * scale, y, C=1.0 / scale, tol=1e-6)
        np.testing.assert_array_equal(svm_predict_many(base, Kt), svm_predict_many(scaled, Kt * scale))

    def test_predict_length_mismatch(self):
        with pytest.raises(ValueError):
            svm_predict(identity_model(), [1, 0, 0])

    def test_model_round_trip(self, tmp_path):
        X, y = blobs(10, 1)
        m = svm_fit(classical_gram(ClassicalKernelSpec("linear"), X), y)
        m.save(tmp_path / "m.json")
        back = SvmModel.load(tmp_path / "m.json")
        np.testing.assert_array_equal(back.alphas, m.alphas)
        assert back.bias == m.bias and back.C == m.C
        np.testing.assert_array_equal(back.labels, m.labels)


class TestMetrics:
    def test_perfect(self):
        assert evaluate_metrics([1, 1, -1], [1, 1, -1]) == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}

    def test_two_thirds(self):
        m = evaluate_metrics([1, 1, -1, -1], [1, -1, -1, -1])
        assert m["accuracy"] == 0.75
        assert m["precision"] == 0.5
        assert m["recall"] == 1.0
        assert m["f1"] == 2 / 3

    def test_zero_recall_guard(self):
        assert evaluate_metrics([-1, -1, -1], [1, -1, 1])["f1"] == 0.0

    def test_zero_one_encoding(self):
        assert evaluate_metrics([1, 1, 0, 0], [1, 0, 0, 0])["f1"] == 2 / 3

    @pytest.mark.parametrize("p,t", [([], []), ([1], [1, 0])])
    def test_bad_lengths(self, p, t):
        with pytest.raises(ValueError):
            evaluate_metrics(p, t)

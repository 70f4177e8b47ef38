"""Headline acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (also collected in the terminal summary)
and then asserts, so a failing criterion fails the run.
"""

import itertools
import time

import numpy as np
import pytest

import kron_oracle
from qmalware import experiment as ex
from qmalware.featuremaps import FeatureMapConfig
from qmalware.qkernel import evaluate_metrics, gram_matrix, quantum_kernel
from qmalware.qnn import (
    QnnConfig,
    QnnParams,
    batch_loss,
    circuit_gates,
    gradient_parameter_shift,
    qnn_forward,
    spsb_estimate,
)
from qmalware.simcore import Circuit, Gate, GateKind, run_circuit


def central_difference(f, theta, h):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def random_qnn(rng):
    cfg = QnnConfig(int(rng.integers(1, 4)), int(rng.integers(1, 3)), reupload=bool(rng.integers(2)))
    params = QnnParams.from_flat(cfg, rng.uniform(-np.pi, np.pi, cfg.n_params))
    return cfg, params, rng.uniform(0, np.pi / 2, cfg.n_data_qubits), int(rng.integers(2))


def test_simulator_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(120):
        n = int(rng.integers(1, 5))
        circuit = kron_oracle.random_circuit(rng, n, int(rng.integers(1, 31)))
        got = run_circuit(Circuit(n, [Gate(k, q, a) for k, q, a in circuit])).amplitudes
        worst = max(worst, float(np.max(np.abs(got - kron_oracle.run(circuit, n)))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 10
    criterion("simulator oracle equivalence", ok, f"120 circuits, max error {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_gram_matrix_properties(criterion):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    sym = diag = 0.0
    min_eig = np.inf
    for kind in ("z", "zz", "zzphi", "pauli"):
        cfg = FeatureMapConfig(kind, 3)
        for _ in range(20):
            G = gram_matrix(cfg, rng.uniform(0, np.pi, (6, 3))).values
            sym = max(sym, float(np.max(np.abs(G - G.T))))
            diag = max(diag, float(np.max(np.abs(np.diag(G) - 1))))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(G).min()))
    elapsed = time.perf_counter() - start
    ok = sym <= 1e-10 and diag <= 1e-10 and min_eig >= -1e-8 and elapsed < 30
    criterion(
        "gram matrix properties",
        ok,
        f"4 maps x 20 sets, asym {sym:.1e}, diag {diag:.1e}, min eig {min_eig:.2e}, {elapsed:.2f} s",
    )
    assert ok


def test_z_feature_map_factorizes(criterion):
    rng = np.random.default_rng(11)
    full, single = FeatureMapConfig("z", 4), FeatureMapConfig("z", 1)
    worst = 0.0
    for _ in range(50):
        x, y = rng.uniform(0, np.pi, 4), rng.uniform(0, np.pi, 4)
        product = np.prod([quantum_kernel(single, [a], [b]) for a, b in zip(x, y)])
        worst = max(worst, abs(quantum_kernel(full, x, y) - product))
    ok = worst <= 1e-10
    criterion("z feature map factorization", ok, f"50 pairs, max error {worst:.2e}")
    assert ok


def test_parameter_shift_matches_finite_differences(criterion):
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        cfg, params, x, label = random_qnn(rng)
        batch = [(x, label)]
        loss = lambda t: batch_loss(cfg, QnnParams.from_flat(cfg, t), batch)
        fd = central_difference(loss, params.flat(), 1e-5)
        worst = max(worst, float(np.max(np.abs(gradient_parameter_shift(cfg, params, batch).flat() - fd))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 60
    criterion("parameter-shift gradient", ok, f"50 instances, max error {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_spsb_estimator_is_unbiased(criterion):
    rng = np.random.default_rng(5)
    eps = 1e-3
    worst = 0.0
    cases = 0
    for p in (1, 2, 3, 4):
        for _ in range(5):
            cfg, params, x, label = random_qnn(rng)
            idx = np.sort(rng.choice(cfg.n_params, size=p, replace=False))
            base = params.flat()

            def loss(sub):
                t = base.copy()
                t[idx] = sub
                return batch_loss(cfg, QnnParams.from_flat(cfg, t), [(x, label)])

            theta = base[idx]
            deltas = [np.array(d) for d in itertools.product((-1.0, 1.0), repeat=p)]
            mean = np.mean([spsb_estimate(loss, theta, d, eps) for d in deltas], axis=0)
            worst = max(worst, float(np.max(np.abs(mean - central_difference(loss, theta, eps)))))
            cases += 1
    ok = worst < 1e-4
    criterion("spsb unbiasedness", ok, f"{cases} cases with P <= 4, max error {worst:.2e} at eps {eps}")
    assert ok


def test_reupload_structure(criterion):
    rng = np.random.default_rng(3)
    counts_ok = True
    for n, layers in itertools.product((1, 2, 3), (1, 2, 3, 4)):
        x = rng.uniform(0, np.pi / 2, n)
        for reupload, blocks in ((False, 1), (True, layers)):
            cfg = QnnConfig(n, layers, reupload=reupload)
            gates, _ = circuit_gates(cfg, QnnParams.zeros(cfg), x)
            counts_ok &= sum(g.kind is GateKind.INPUT_PREP for g in gates) == blocks * n
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        plain, re = QnnConfig(n, 1), QnnConfig(n, 1, reupload=True)
        params = QnnParams.from_flat(plain, rng.uniform(-np.pi, np.pi, plain.n_params))
        x = rng.uniform(0, np.pi / 2, n)
        worst = max(worst, float(np.max(np.abs(np.subtract(qnn_forward(plain, params, x), qnn_forward(re, params, x))))))
    ok = counts_ok and worst <= 1e-12
    criterion("data reuploading structure", ok, f"block counts {'ok' if counts_ok else 'WRONG'}, L=1 max diff {worst:.1e}")
    assert ok


def blob_config(model):
    return {
        "version": 1,
        "seed": 0,
        "dataset": {"source": "synthetic", "generator": "angular_blobs", "n_samples": 140},
        "split": {"train_size": 100, "test_size": 40},
        "model": model,
    }


QNN_REGIMES = {
    "parameter_shift": {"gradient_method": "parameter_shift", "learning_rate": 0.1},
    "spsb": {"gradient_method": "spsb", "batch_size": 32, "learning_rate": 0.5},
    "reupload": {"gradient_method": "parameter_shift", "learning_rate": 0.1, "reupload": True},
}


@pytest.fixture(scope="module")
def blob_runs():
    start = time.perf_counter()
    rows = {"qsvm": ex.run_experiment(blob_config({"family": "qsvm", "feature_map": "zz", "depth": 2})).rows[0]}
    for name, opts in QNN_REGIMES.items():
        model = {"family": "qnn", "n_layers": 2, "epochs": 5, **opts}
        rows[name] = ex.run_experiment(blob_config(model)).rows[0]
    return rows, time.perf_counter() - start


def test_desk_scale_learning(criterion, blob_runs):
    rows, elapsed = blob_runs
    qsvm = rows["qsvm"]["metrics"]["test_accuracy"]
    ps = rows["parameter_shift"]["metrics"]["test_accuracy"]
    spsb = rows["spsb"]["metrics"]["test_accuracy"]
    ok = qsvm >= 0.90 and ps >= 0.85 and spsb >= 0.85 and abs(ps - spsb) <= 0.05 and elapsed < 300
    criterion(
        "desk-scale learning",
        ok,
        f"qsvm zz {qsvm:.3f}, qnn shift {ps:.3f}, qnn spsb {spsb:.3f}, {elapsed:.1f} s for all runs",
    )
    assert ok


def test_epoch_history_trend(criterion, blob_runs):
    rows, _ = blob_runs
    parts, ok = [], True
    for name in QNN_REGIMES:
        h = rows[name]["history"]
        ok &= len(h) == 5 and h[-1]["loss"] <= h[0]["loss"]
        parts.append(f"{name} {h[0]['loss']:.3f} -> {h[-1]['loss']:.3f}")
    criterion("epoch loss trend", ok, ", ".join(parts))
    assert ok


def test_metrics_exact(criterion):
    m = evaluate_metrics([1, 1, -1, -1], [1, -1, -1, -1])
    perfect = evaluate_metrics([1, 1, -1], [1, 1, -1])
    ok = (
        m == {"accuracy": 0.75, "precision": 0.5, "recall": 1.0, "f1": 2 / 3}
        and perfect["accuracy"] == 1.0
        and perfect["f1"] == 1.0
    )
    criterion("metrics", ok, f"accuracy {m['accuracy']}, precision {m['precision']}, recall {m['recall']}, f1 {m['f1']!r}")
    assert ok


def test_reports_deterministic_across_threads(criterion, tmp_path):
    raw = {
        "version": 1,
        "seed": 13,
        "dataset": {"source": "synthetic", "generator": "noisy_xor", "n_samples": 60},
        "split": {"train_size": 40, "test_size": 20},
        "model": {"family": "qnn", "n_layers": 1, "epochs": 2, "gradient_method": "spsb", "batch_size": 8},
        "sweep": [
            {"model.n_layers": 1},
            {"model.n_layers": 2, "model.reupload": True},
            {"model.gradient_method": "parameter_shift", "model.epochs": 1},
        ],
    }
    qsvm = dict(raw, model={"family": "qsvm", "feature_map": "pauli"}, sweep={"model.depth": [1, 2]})
    same = True
    for name, cfg in (("qnn", raw), ("qsvm", qsvm)):
        for fmt in ("json", "csv"):
            files = []
            for run, threads in enumerate((1, 4, 1)):
                path = tmp_path / f"{name}-{run}.{fmt}"
                ex.run_experiment(cfg, threads=threads, out=str(path), fmt=fmt)
                files.append(path.read_bytes())
            same &= len(set(files)) == 1
    criterion("report determinism", same, "json and csv bytes identical for threads 1, 4 and a rerun")
    assert same

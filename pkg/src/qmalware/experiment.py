"""Declarative experiment runs: config validation, the preprocess -> model ->
metrics pipeline, sweeps, and report rendering.

A config is one JSON document (schema ``version: 1``). Unknown keys are
errors. Sweeps are either a list of override objects or an object mapping
dotted keys to value lists (expanded as a cartesian product); each
override key names an existing config key, e.g. ``"model.n_layers"``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qmalware import __version__
from qmalware.errors import ConfigError, SchemaError
from qmalware.featuremaps import Entanglement, FeatureMapConfig, FeatureMapKind
from qmalware.preprocess import (
    Dataset,
    PcaModel,
    ScalerModel,
    SyntheticKind,
    generate_synthetic,
    load_binaries_dir,
    load_csv,
    pca_fit,
    pca_transform,
    scale_fit,
    scale_transform,
    stratified_split,
)
from qmalware import qkernel, qnn

SCHEMA_VERSION = 1
THREADS_ENV = "QMALWARE_THREADS"
HALF_PI = float(np.pi / 2)

_DATASET_KEYS = {
    "synthetic": {"source": None, "generator": "angular_blobs", "n_samples": 200, "n_features": 2, "seed": None},
    "csv": {"source": None, "path": None, "label_column": "label"},
    "binaries": {"source": None, "path": None},
}
_MODEL_KEYS = {
    "qsvm": {
        "family": None,
        "feature_map": "zz",
        "depth": 2,
        "entanglement": "linear",
        "C": 1.0,
        "tol": 1e-3,
        "max_passes": 50,
    },
    "svm": {
        "family": None,
        "kernel": "rbf",
        "degree": 3,
        "gamma": None,
        "coef0": 0.0,
        "C": 1.0,
        "tol": 1e-3,
        "max_passes": 50,
    },
    "qnn": {
        "family": None,
        "n_layers": 1,
        "reupload": False,
        "entangle_pattern": None,
        "learning_rate": 0.1,
        "epochs": 1,
        "batch_size": None,
        "gradient_method": "parameter_shift",
        "spsb_epsilon": 0.01,
    },
}
_TOP_KEYS = {"version", "seed", "dataset", "split", "preprocessing", "model", "sweep", "output"}
_SPLIT_DEFAULTS = {"train_size": None, "test_size": None, "seed": None}
_PRE_DEFAULTS = {"pca": None, "scale": "auto"}
_OUT_DEFAULTS = {"path": None, "format": "json", "timing": False}

CSV_COLUMNS = [
    "index",
    "fingerprint",
    "family",
    "dataset",
    "train_size",
    "test_size",
    "n_features",
    "pca",
    "model",
    "depth",
    "n_layers",
    "reupload",
    "gradient_method",
    "learning_rate",
    "epochs",
    "batch_size",
    "C",
    "train_accuracy",
    "test_accuracy",
    "f1",
]


# -- config handling ---------------------------------------------------------------


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _fill(section: Optional[dict], defaults: dict, where: str, errors: list) -> dict:
    section = {} if section is None else section
    if not isinstance(section, dict):
        errors.append(f"{where} must be an object")
        return dict(defaults)
    for key in section:
        if key not in defaults:
            errors.append(f"unknown key '{where}.{key}'")
    return {**defaults, **{k: v for k, v in section.items() if k in defaults}}


def normalize(raw: dict) -> dict:
    """Fill defaults and validate one (non-sweep) config; raise
    :class:`ConfigError` listing every violation."""
    errors: list = []
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            errors.append(f"unknown key '{key}'")
    if raw.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors.append(f"version must be {SCHEMA_VERSION}")
    seed = raw.get("seed", 0)
    if not _is_int(seed) or seed < 0:
        errors.append("seed must be a non-negative integer")
        seed = 0

    ds_raw = raw.get("dataset")
    source = ds_raw.get("source") if isinstance(ds_raw, dict) else None
    if source not in _DATASET_KEYS:
        errors.append(f"dataset.source must be one of {sorted(_DATASET_KEYS)}")
        dataset = {"source": source}
    else:
        dataset = _fill(ds_raw, _DATASET_KEYS[source], "dataset", errors)
        if source == "synthetic":
            if dataset["generator"] not in {k.value for k in SyntheticKind}:
                errors.append(f"dataset.generator must be one of {[k.value for k in SyntheticKind]}")
            if not _is_int(dataset["n_samples"]) or dataset["n_samples"] < 4:
                errors.append("dataset.n_samples must be an integer >= 4")
            if not _is_int(dataset["n_features"]) or dataset["n_features"] < 1:
                errors.append("dataset.n_features must be an integer >= 1")
            if dataset["seed"] is not None and (not _is_int(dataset["seed"]) or dataset["seed"] < 0):
                errors.append("dataset.seed must be a non-negative integer or null")
        elif not isinstance(dataset.get("path"), str):
            errors.append("dataset.path must be a string")

    split = _fill(raw.get("split"), _SPLIT_DEFAULTS, "split", errors)
    for key in ("train_size", "test_size"):
        if not _is_int(split[key]) or split[key] < (1 if key == "train_size" else 0):
            errors.append(f"split.{key} must be an integer >= {1 if key == 'train_size' else 0}")
    if split["seed"] is not None and (not _is_int(split["seed"]) or split["seed"] < 0):
        errors.append("split.seed must be a non-negative integer or null")

    pre = _fill(raw.get("preprocessing"), _PRE_DEFAULTS, "preprocessing", errors)
    if pre["pca"] is not None and (not _is_int(pre["pca"]) or pre["pca"] < 1):
        errors.append("preprocessing.pca must be a positive integer or null")
    scale = pre["scale"]
    if scale not in ("auto", None):
        if not (isinstance(scale, list) and len(scale) == 2 and all(_is_num(v) for v in scale)):
            errors.append("preprocessing.scale must be 'auto', null or [lo, hi]")
        elif not scale[1] > scale[0]:
            errors.append("preprocessing.scale needs hi > lo")

    m_raw = raw.get("model")
    family = m_raw.get("family") if isinstance(m_raw, dict) else None
    if family not in _MODEL_KEYS:
        errors.append(f"model.family must be one of {sorted(_MODEL_KEYS)}")
        model = {"family": family}
    else:
        model = _fill(m_raw, _MODEL_KEYS[family], "model", errors)
        errors.extend(_check_model(model))

    output = _fill(raw.get("output"), _OUT_DEFAULTS, "output", errors)
    if output["format"] not in ("json", "csv"):
        errors.append("output.format must be 'json' or 'csv'")
    if output["path"] is not None and not isinstance(output["path"], str):
        errors.append("output.path must be a string or null")
    if not isinstance(output["timing"], bool):
        errors.append("output.timing must be a boolean")

    if errors:
        raise ConfigError(errors)
    return {
        "version": SCHEMA_VERSION,
        "seed": seed,
        "dataset": dataset,
        "split": split,
        "preprocessing": pre,
        "model": model,
        "output": output,
    }


def _check_model(m: dict) -> list:
    errs = []

    def positive(key, integer=False):
        v = m[key]
        ok = _is_int(v) if integer else _is_num(v)
        if not ok or v <= 0:
            errs.append(f"model.{key} must be a positive {'integer' if integer else 'number'}")

    family = m["family"]
    if family in ("qsvm", "svm"):
        positive("C")
        positive("tol")
        positive("max_passes", integer=True)
    if family == "qsvm":
        if m["feature_map"] not in {k.value for k in FeatureMapKind}:
            errs.append(f"model.feature_map must be one of {[k.value for k in FeatureMapKind]}")
        positive("depth", integer=True)
        if m["entanglement"] not in {k.value for k in Entanglement}:
            errs.append("model.entanglement must be 'linear' or 'full'")
    elif family == "svm":
        if m["kernel"] not in {k.value for k in qkernel.ClassicalKernelKind}:
            errs.append(f"model.kernel must be one of {[k.value for k in qkernel.ClassicalKernelKind]}")
        positive("degree", integer=True)
        if m["gamma"] is not None and (not _is_num(m["gamma"]) or m["gamma"] <= 0):
            errs.append("model.gamma must be > 0 or null")
        if not _is_num(m["coef0"]):
            errs.append("model.coef0 must be a number")
    elif family == "qnn":
        positive("n_layers", integer=True)
        positive("epochs", integer=True)
        if not _is_num(m["learning_rate"]) or m["learning_rate"] < 0:
            errs.append("model.learning_rate must be a number >= 0")
        if m["batch_size"] is not None and (not _is_int(m["batch_size"]) or m["batch_size"] < 1):
            errs.append("model.batch_size must be a positive integer or null")
        if m["gradient_method"] not in {k.value for k in qnn.TrainMethod}:
            errs.append("model.gradient_method must be 'parameter_shift' or 'spsb'")
        positive("spsb_epsilon")
        if not isinstance(m["reupload"], bool):
            errs.append("model.reupload must be a boolean")
        pat = m["entangle_pattern"]
        if pat is not None and not (
            isinstance(pat, list)
            and all(isinstance(p, list) and len(p) == 2 and all(_is_int(q) for q in p) for p in pat)
        ):
            errs.append("model.entangle_pattern must be null or a list of [control, target] pairs")
    return errs


def _set_dotted(cfg: dict, key: str, value) -> bool:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            return False
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        return False
    node[parts[-1]] = value
    return True


def expand_sweep(sweep) -> list:
    if sweep is None:
        return [{}]
    if isinstance(sweep, dict):
        if not sweep:
            return [{}]
        keys = list(sweep)
        for k in keys:
            if not isinstance(sweep[k], list) or not sweep[k]:
                raise ConfigError(f"sweep.{k} must be a nonempty list of values")
        return [dict(zip(keys, combo)) for combo in itertools.product(*(sweep[k] for k in keys))]
    if isinstance(sweep, list) and all(isinstance(o, dict) for o in sweep) and sweep:
        return [dict(o) for o in sweep]
    raise ConfigError("sweep must be null, a nonempty list of override objects, or an object of value lists")


def resolve(raw: dict, seed: Optional[int] = None) -> tuple:
    """Validate ``raw`` and return ``(base, points)``.

    ``points`` is a list of ``(overrides, resolved_config)``, one per sweep
    point. ``seed`` overrides the top-level seed.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    sweep = raw.pop("sweep", None)
    if seed is not None:
        raw["seed"] = seed
    base = normalize(raw)
    errors = []
    points = []
    try:
        overrides = expand_sweep(sweep)
    except ConfigError as exc:
        raise ConfigError(exc.violations) from None
    for i, ov in enumerate(overrides):
        candidate = copy.deepcopy(base)
        bad = False
        for key, value in ov.items():
            if key.split(".")[0] in ("version", "output") or not _set_dotted(candidate, key, value):
                errors.append(f"sweep point {i}: '{key}' is not an overridable config key")
                bad = True
        if bad:
            continue
        try:
            points.append((ov, normalize(candidate)))
        except ConfigError as exc:
            errors.extend(f"sweep point {i}: {v}" for v in exc.violations)
    if errors:
        raise ConfigError(errors)
    return base, points


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def fingerprint(cfg: dict) -> str:
    """Hash of the canonicalised config, ignoring the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()[:16]


# -- pipeline ----------------------------------------------------------------------


def load_dataset(spec: dict, seed: int) -> Dataset:
    source = spec["source"]
    if source == "synthetic":
        ds_seed = seed if spec["seed"] is None else spec["seed"]
        return generate_synthetic(spec["generator"], spec["n_samples"], ds_seed, spec["n_features"])
    if source == "csv":
        return load_csv(spec["path"], spec["label_column"])
    return load_binaries_dir(spec["path"])


def _scale_range(cfg: dict) -> Optional[tuple]:
    scale = cfg["preprocessing"]["scale"]
    if scale is None:
        return None
    if scale == "auto":
        return (0.0, HALF_PI)
    return (float(scale[0]), float(scale[1]))


@dataclass
class Pipeline:
    pca: Optional[PcaModel] = None
    scaler: Optional[ScalerModel] = None

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.pca is not None:
            X = pca_transform(self.pca, X)
        if self.scaler is not None:
            X = scale_transform(self.scaler, X)
        return X

    def to_dict(self) -> dict:
        return {
            "pca": None if self.pca is None else self.pca.to_dict(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        return cls(
            None if d.get("pca") is None else PcaModel.from_dict(d["pca"]),
            None if d.get("scaler") is None else ScalerModel.from_dict(d["scaler"]),
        )


def fit_pipeline(cfg: dict, X_train) -> Pipeline:
    """PCA then range scaling, both fit on the training split only."""
    pipe = Pipeline()
    X = np.asarray(X_train, dtype=float)
    k = cfg["preprocessing"]["pca"]
    if k is not None:
        pipe.pca = pca_fit(X, k)
        X = pca_transform(pipe.pca, X)
    rng = _scale_range(cfg)
    if rng is not None:
        pipe.scaler = scale_fit(X, *rng)
    return pipe


@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    train_ids: list
    test_ids: list
    pipeline: Pipeline


def prepare(cfg: dict, dataset: Dataset) -> PreparedData:
    split = cfg["split"]
    split_seed = cfg["seed"] if split["seed"] is None else split["seed"]
    tr, te = stratified_split(dataset.labels, split["train_size"], split["test_size"], split_seed)
    train, test = dataset.subset(tr), dataset.subset(te)
    pipe = fit_pipeline(cfg, train.samples)
    return PreparedData(
        pipe.transform(train.samples),
        train.labels,
        pipe.transform(test.samples),
        test.labels,
        train.ids,
        test.ids,
        pipe,
    )


def feature_map_config(model: dict, n_features: int) -> FeatureMapConfig:
    return FeatureMapConfig(model["feature_map"], n_features, model["depth"], model["entanglement"])


def kernel_spec(model: dict) -> qkernel.ClassicalKernelSpec:
    return qkernel.ClassicalKernelSpec(model["kernel"], model["degree"], model["gamma"], model["coef0"])


def qnn_configs(cfg: dict, n_features: int) -> tuple:
    m = cfg["model"]
    pattern = m["entangle_pattern"]
    config = qnn.QnnConfig(
        n_features, m["n_layers"], m["reupload"], None if pattern is None else tuple(map(tuple, pattern))
    )
    tc = qnn.TrainConfig(
        m["learning_rate"], m["epochs"], m["batch_size"], m["gradient_method"], m["spsb_epsilon"], cfg["seed"]
    )
    return config, tc


def _to_pm1(labels) -> np.ndarray:
    return np.where(np.asarray(labels) == 1, 1, -1)


def train_gram(cfg: dict, data: PreparedData, workers: int = 1) -> qkernel.KernelMatrix:
    m = cfg["model"]
    if m["family"] == "qsvm":
        fm = feature_map_config(m, data.X_train.shape[1])
        return qkernel.gram_matrix(fm, data.X_train, data.train_ids, workers)
    if m["family"] == "svm":
        return qkernel.classical_gram(kernel_spec(m), data.X_train, row_ids=data.train_ids, col_ids=data.train_ids)
    raise ConfigError("kernel matrices exist only for the qsvm and svm families")


def _kernel_rows(cfg: dict, X, X_train, workers: int) -> np.ndarray:
    m = cfg["model"]
    if m["family"] == "qsvm":
        return qkernel.cross_gram(feature_map_config(m, X_train.shape[1]), X, X_train, workers=workers).values
    return qkernel.classical_gram(kernel_spec(m), X, X_train).values


@dataclass
class FittedModel:
    """A trained model together with the preprocessing it expects."""

    cfg: dict
    pipeline: Pipeline
    svm: Optional[qkernel.SvmModel] = None
    X_train: Optional[np.ndarray] = None
    qnn_config: Optional[qnn.QnnConfig] = None
    qnn_params: Optional[qnn.QnnParams] = None
    history: list = field(default_factory=list)

    def predict(self, X, workers: int = 1) -> np.ndarray:
        """Labels in ``{0, 1}`` for already-preprocessed inputs."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.svm is not None:
            rows = _kernel_rows(self.cfg, X, self.X_train, workers)
            return (qkernel.svm_predict_many(self.svm, rows) == 1).astype(int)
        return qnn.predict(self.qnn_config, self.qnn_params, X, workers)

    def to_dict(self) -> dict:
        doc = {
            "format": "qmalware-pipeline",
            "version": SCHEMA_VERSION,
            "config": self.cfg,
            "pipeline": self.pipeline.to_dict(),
        }
        if self.svm is not None:
            doc["svm"] = self.svm.to_dict()
            doc["train_samples"] = self.X_train.tolist()
        else:
            doc["qnn"] = qnn.model_to_dict(self.qnn_config, self.qnn_params, self.cfg["seed"], self.history)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedModel":
        if doc.get("format") != "qmalware-pipeline" or doc.get("version") != SCHEMA_VERSION:
            raise SchemaError("model file is not a qmalware-pipeline v1 document")
        cfg = doc["config"]
        pipe = Pipeline.from_dict(doc["pipeline"])
        if "svm" in doc:
            return cls(cfg, pipe, svm=qkernel.SvmModel.from_dict(doc["svm"]), X_train=np.asarray(doc["train_samples"]))
        config, params, _, history = qnn.model_from_dict(doc["qnn"])
        return cls(cfg, pipe, qnn_config=config, qnn_params=params, history=history)


def fit_model(cfg: dict, data: PreparedData, workers: int = 1) -> FittedModel:
    m = cfg["model"]
    if m["family"] in ("qsvm", "svm"):
        K = train_gram(cfg, data, workers)
        svm = qkernel.svm_fit(K, _to_pm1(data.y_train), m["C"], m["tol"], m["max_passes"])
        binding = (
            feature_map_config(m, data.X_train.shape[1]).to_dict()
            if m["family"] == "qsvm"
            else kernel_spec(m).to_dict()
        )
        svm.kernel = {"family": m["family"], **binding}
        return FittedModel(cfg, data.pipeline, svm=svm, X_train=data.X_train)
    config, tc = qnn_configs(cfg, data.X_train.shape[1])
    params, history = qnn.train(config, tc, data.X_train, data.y_train, workers=workers)
    return FittedModel(cfg, data.pipeline, qnn_config=config, qnn_params=params, history=history)


# -- reports -----------------------------------------------------------------------


@dataclass
class RunReport:
    seed: int
    rows: list
    toolkit_version: str = __version__
    schema: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "toolkit_version": self.toolkit_version,
            "seed": self.seed,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(seed=d["seed"], rows=d["rows"], toolkit_version=d["toolkit_version"], schema=d["schema"])


def _csv_row(row: dict) -> list:
    cfg, m = row["config"], row["config"]["model"]
    fam = m["family"]
    values = {
        "index": row["index"],
        "fingerprint": row["fingerprint"],
        "family": fam,
        "dataset": cfg["dataset"]["source"],
        "train_size": cfg["split"]["train_size"],
        "test_size": cfg["split"]["test_size"],
        "n_features": row["n_features"],
        "pca": cfg["preprocessing"]["pca"],
        "model": {"qsvm": m.get("feature_map"), "svm": m.get("kernel"), "qnn": "qnn"}[fam],
        "depth": m.get("depth"),
        "n_layers": m.get("n_layers"),
        "reupload": m.get("reupload"),
        "gradient_method": m.get("gradient_method"),
        "learning_rate": m.get("learning_rate"),
        "epochs": m.get("epochs"),
        "batch_size": m.get("batch_size"),
        "C": m.get("C"),
        "train_accuracy": row["metrics"]["train_accuracy"],
        "test_accuracy": row["metrics"]["test_accuracy"],
        "f1": row["metrics"]["f1"],
    }
    out = []
    for col in CSV_COLUMNS:
        v = values[col]
        if v is None:
            out.append("")
        elif isinstance(v, bool):
            out.append("true" if v else "false")
        elif isinstance(v, float):
            out.append(repr(v))
        else:
            out.append(str(v))
    return out


def render_report(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report.rows:
            w.writerow(_csv_row(row))
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: RunReport, fmt: str, path) -> None:
    text = render_report(report, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def load_report(path) -> RunReport:
    with open(path, encoding="utf-8") as fh:
        return RunReport.from_dict(json.load(fh))


# -- running -----------------------------------------------------------------------


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _metrics(model: FittedModel, data: PreparedData, workers: int) -> dict:
    train_pred = model.predict(data.X_train, workers)
    out = {"train_accuracy": qkernel.evaluate_metrics(train_pred, data.y_train)["accuracy"]}
    if len(data.y_test):
        test = qkernel.evaluate_metrics(model.predict(data.X_test, workers), data.y_test)
        out.update(
            test_accuracy=test["accuracy"], f1=test["f1"], precision=test["precision"], recall=test["recall"]
        )
    else:
        out.update(test_accuracy=None, f1=None, precision=None, recall=None)
    return out


def run_point(cfg: dict, dataset: Dataset, workers: int = 1) -> dict:
    start = time.perf_counter()
    data = prepare(cfg, dataset)
    model = fit_model(cfg, data, workers)
    row = {
        "fingerprint": fingerprint(cfg),
        "config": cfg,
        "n_features": int(data.X_train.shape[1]),
        "metrics": _metrics(model, data, workers),
        "history": model.history if cfg["model"]["family"] == "qnn" else None,
    }
    if cfg["output"]["timing"]:
        row["wall_time"] = time.perf_counter() - start
    return row


def run_experiment(
    raw_config: dict,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out: Optional[str] = None,
    fmt: Optional[str] = None,
) -> RunReport:
    """Run every sweep point and return the report.

    The report is also written when an output path is given here or in the
    config. Rows are ordered by sweep index whatever the thread count.
    """
    base, points = resolve(raw_config, seed)
    threads = default_threads() if threads is None else max(1, int(threads))
    cache: dict = {}

    def dataset_for(cfg):
        key = canonical_json([cfg["dataset"], cfg["seed"]])
        if key not in cache:
            cache[key] = load_dataset(cfg["dataset"], cfg["seed"])
        return cache[key]

    datasets = [dataset_for(cfg) for _, cfg in points]
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda p: run_point(p[0][1], p[1], 1), zip(points, datasets)))
    else:
        rows = [run_point(cfg, ds, threads) for (_, cfg), ds in zip(points, datasets)]
    for i, (row, (ov, _)) in enumerate(zip(rows, points)):
        row["index"] = i
        row["overrides"] = ov
    report = RunReport(seed=base["seed"], rows=rows)
    path = out or base["output"]["path"]
    if path:
        emit_report(report, fmt or base["output"]["format"], path)
    return report

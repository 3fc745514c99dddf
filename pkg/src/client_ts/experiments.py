"""Experiment runners: input-masking robustness, the ablation suite, the
look-back sweep, attention-replacement study, efficiency accounting,
variable-correlation analysis and attention-matrix export.

Every runner is a pure function of (config, seed): rerunning yields
identical report rows up to the wall-clock `seconds` column. Suites never
abort on a single failing row; failures surface as NaN metrics in the CSV
and an "error" field in the JSON-lines mirror.
"""

import dataclasses
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import backend
from . import model as M
from . import tensor as T
from .data import make_windows, prepare_windows
from .errors import ConfigError, DataError
from .training import (SEED_CORR, SEED_INIT, SEED_MASK, Checkpoint,
                       TrainConfig, component_rng, component_seed,
                       evaluate_model, train)

REPORT_COLUMNS = ("experiment", "dataset", "variant", "L", "T", "seed",
                  "mse", "mae", "seconds", "params")


@dataclass
class ReportRow:
    """One experiment result; maps 1:1 onto the fixed report header."""

    experiment: str
    dataset: str
    variant: str
    L: int
    T: int
    seed: int
    mse: float
    mae: float
    seconds: float
    params: int
    error: str | None = None

    def csv_line(self):
        return (f"{self.experiment},{self.dataset},{self.variant},"
                f"{self.L},{self.T},{self.seed},{self.mse:.17g},"
                f"{self.mae:.17g},{self.seconds:.6f},{self.params}")

    def json_line(self):
        d = {k: getattr(self, k) for k in REPORT_COLUMNS}
        if self.error is not None:
            d["error"] = self.error
        return json.dumps(d, sort_keys=True)


def write_report(rows, path_base):
    """Write rows as <path_base>.csv and <path_base>.jsonl."""
    csv_path = f"{path_base}.csv"
    jsonl_path = f"{path_base}.jsonl"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write(row.csv_line() + "\n")
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(row.json_line() + "\n")
    return csv_path, jsonl_path


def _to_model(model_or_checkpoint):
    if isinstance(model_or_checkpoint, Checkpoint):
        return model_or_checkpoint.to_model()
    return model_or_checkpoint


# ---------------------------------------------------------------------------
# masking robustness


def mask_experiment(model_or_checkpoint, test_windows, fractions, seed,
                    dataset="", batch_size=32):
    """Evaluate a trained model with a fraction of every test input zeroed.

    One row per fraction, ascending; the 0 row is numerically identical to
    a plain evaluation. Each fraction draws from its own child of the mask
    seed so rows are independently reproducible.
    """
    fractions = [float(p) for p in fractions]
    if sorted(fractions) != fractions:
        raise ConfigError("mask fractions must be sorted ascending")
    if any(not 0.0 <= p <= 1.0 for p in fractions):
        raise ConfigError("mask fractions must lie in [0, 1]")
    if 0.0 not in fractions:
        raise ConfigError("mask fractions must include 0 (the baseline row)")

    model = _to_model(model_or_checkpoint)
    task = model.config.task
    mask_root = component_seed(seed, SEED_MASK)
    rows = []
    for k, p in enumerate(fractions):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=mask_root, spawn_key=(k,))))
        t0 = time.perf_counter()
        mse, mae = evaluate_model(model, test_windows, batch_size,
                                  mask_fraction=p, mask_rng=rng)
        rows.append(ReportRow(
            experiment="mask", dataset=dataset, variant=f"mask={p:g}",
            L=task.lookback, T=task.horizon, seed=seed, mse=mse, mae=mae,
            seconds=time.perf_counter() - t0,
            params=model.parameter_count()))
    return rows


# ---------------------------------------------------------------------------
# training suites


def _train_and_score(config, series, profile, seed, tcfg, ratios):
    task = config.task
    scaler, (tr_w, va_w, te_w) = prepare_windows(
        series, profile, task.lookback, task.horizon, ratios)
    model = M.build_variant(config, seed=component_seed(seed, SEED_INIT))
    tcfg = dataclasses.replace(tcfg, seed=seed)
    ckpt, _history = train(model, tr_w, va_w, tcfg)
    ckpt.scaler_mean = scaler.mean
    ckpt.scaler_std = scaler.std
    mse, mae = evaluate_model(model, te_w, tcfg.batch_size)
    return ckpt, mse, mae


def _suite_row(experiment, dataset, variant, config, series, profile, seed,
               tcfg, ratios):
    task = config.task
    t0 = time.perf_counter()
    try:
        _, mse, mae = _train_and_score(config, series, profile, seed, tcfg, ratios)
        err = None
    except Exception as exc:  # failed rows must not abort the suite
        mse = mae = float("nan")
        err = f"{type(exc).__name__}: {exc}"
    return ReportRow(
        experiment=experiment, dataset=dataset, variant=variant,
        L=task.lookback, T=task.horizon, seed=seed, mse=mse, mae=mae,
        seconds=time.perf_counter() - t0, params=M.param_count(config),
        error=err)


def ablation_suite(series, profile, base_config, horizons, seed, tcfg,
                   dataset="", variants=M.VARIANTS, ratios=(0.7, 0.1, 0.2)):
    """Train and score the five ablation variants per horizon."""
    rows = []
    for horizon in horizons:
        task = dataclasses.replace(base_config.task, horizon=horizon)
        cfg_h = dataclasses.replace(base_config, task=task)
        for name in variants:
            cfg = M.variant_config(cfg_h, name)
            rows.append(_suite_row("ablation", dataset, name, cfg, series,
                                   profile, seed, tcfg, ratios))
    return rows


def lookback_sweep(series, profile, lookbacks, horizon, base_config, seed,
                   tcfg, dataset="", ratios=(0.7, 0.1, 0.2)):
    """Train and score the standard model per look-back length (the token
    width, and hence the parameter shape, changes with it)."""
    rows = []
    for lookback in lookbacks:
        task = dataclasses.replace(base_config.task, lookback=lookback,
                                   horizon=horizon)
        cfg = dataclasses.replace(base_config, task=task)
        rows.append(_suite_row("lookback", dataset, f"L={lookback}", cfg,
                               series, profile, seed, tcfg, ratios))
    return rows


def attention_replacement_suite(series, profile, base_config, kinds, horizons,
                                seed, tcfg, dataset="", ratios=(0.7, 0.1, 0.2)):
    """Train and score one row per attention kind per horizon."""
    for kind in kinds:
        if kind not in M.ATTENTION_KINDS:
            raise ConfigError(
                f"unknown attention kind {kind!r}; expected one of {M.ATTENTION_KINDS}")
    rows = []
    for horizon in horizons:
        task = dataclasses.replace(base_config.task, horizon=horizon)
        for kind in kinds:
            cfg = dataclasses.replace(base_config, task=task,
                                      attention_kind=kind)
            rows.append(_suite_row("attention", dataset, f"attn={kind}", cfg,
                                   series, profile, seed, tcfg, ratios))
    return rows


# ---------------------------------------------------------------------------
# efficiency accounting


def _graph_bytes(out_tensor):
    """Total buffer bytes of a taped forward graph: data for every node plus
    a gradient buffer for every non-constant node."""
    seen = set()
    stack = [out_tensor]
    total = 0
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        total += node.data.nbytes
        if not node.constant:
            total += node.data.nbytes  # gradient buffer of the same shape
        stack.extend(node._parents)
    return total


@dataclass
class EfficiencyReport:
    param_count: int
    param_bytes: int
    seconds_per_iteration: float
    training_bytes_estimate: int
    backend: str


def efficiency_report(config, seed=0, batch_size=32, n_timed=20, n_warmup=5):
    """Parameter count (closed form, asserted against enumerated storage),
    parameter bytes, and median wall seconds per training iteration
    (forward + backward + Adam on a synthetic batch) after warm-up.

    The memory figure is an estimate, not a measurement: 8 bytes per float
    for parameters, gradients and the two Adam moments (4x parameter count)
    plus every buffer of one taped forward graph at the given batch size
    (data, and a same-shape gradient for each non-constant node).
    """
    from .training import Adam  # local import to avoid a cycle at module load

    config.validate()
    count = M.param_count(config)
    model = M.build_variant(config, seed=component_seed(seed, SEED_INIT))
    enumerated = model.parameter_count()
    if count != enumerated:
        raise AssertionError(
            f"parameter-count closed form {count} != enumerated {enumerated}")

    task = config.task
    rng = component_rng(seed, SEED_MASK)
    xs = rng.standard_normal((batch_size, task.lookback, task.n_variables))
    ys = rng.standard_normal((batch_size, task.horizon, task.n_variables))

    out = model.forward(xs)
    activation_bytes = _graph_bytes(out)
    training_bytes = 4 * count * 8 + activation_bytes

    opt = Adam(model.params, lr=1e-3)
    times = []
    for i in range(n_warmup + n_timed):
        t0 = time.perf_counter()
        loss = T.mse_reduce(model.forward(xs), T.Tensor(ys, constant=True))
        model.zero_grads()
        T.backward(loss)
        opt.step()
        if i >= n_warmup:
            times.append(time.perf_counter() - t0)
    return EfficiencyReport(
        param_count=count,
        param_bytes=count * 8,
        seconds_per_iteration=float(np.median(times)),
        training_bytes_estimate=training_bytes,
        backend=backend.backend_name(),
    )


def benchmark_backends(config, seed=0, batch_size=32, n_timed=20, n_warmup=5):
    """Run efficiency_report under every available kernel backend, plus
    microbenchmarks of the individual kernels. Restores the default backend
    afterwards."""
    results = {"model": {}, "kernels": {}}
    original = backend.backend_name()
    try:
        for name in backend.available_backends():
            backend.use(name)
            rep = efficiency_report(config, seed, batch_size, n_timed, n_warmup)
            results["model"][name] = dataclasses.asdict(rep)
        results["kernels"] = _kernel_microbench(config, batch_size)
    finally:
        backend.use(original)
    return results


def _kernel_microbench(config, batch_size, repeats=30):
    d = config.token_width
    rows = batch_size * config.task.n_variables
    rng = np.random.default_rng(0)
    x = rng.standard_normal((rows, d))
    gy = rng.standard_normal((rows, d))
    gamma = np.ones(d)
    beta = np.zeros(d)
    flat = np.ascontiguousarray(x.ravel())
    gflat = np.ascontiguousarray(gy.ravel())
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    p = flat.copy()

    def timed(fn):
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        return best

    out = {}
    original = backend.backend_name()
    try:
        for name in backend.available_backends():
            k = backend.use(name)
            y = k.softmax_fwd(x)
            _, mean, rstd = k.layernorm_fwd(x, gamma, beta, 1e-5)
            out[name] = {
                "softmax_fwd": timed(lambda: k.softmax_fwd(x)),
                "softmax_bwd": timed(lambda: k.softmax_bwd(y, gy)),
                "layernorm_fwd": timed(lambda: k.layernorm_fwd(x, gamma, beta, 1e-5)),
                "layernorm_bwd": timed(lambda: k.layernorm_bwd(x, gamma, mean, rstd, gy)),
                "gelu_fwd": timed(lambda: k.gelu_fwd(flat)),
                "gelu_bwd": timed(lambda: k.gelu_bwd(flat, gflat)),
                "adam_update": timed(
                    lambda: k.adam_update(p, gflat, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)),
            }
    finally:
        backend.use(original)
    return out


# ---------------------------------------------------------------------------
# correlation analysis


def correlation_analysis(values, n_samples=100, sub_len=96, threshold=0.8,
                         mode="simultaneous", seed=0):
    """Mean Pearson correlation between variables over random sub-series,
    binarized at a threshold.

    simultaneous: correlation between variable columns of one window.
    lagged: correlation between each variable's window and every variable's
    window over the subsequent sub_len steps (rows index history, columns
    index future; not symmetric).

    A zero-variance column contributes 0 for that sample (its correlations
    are undefined). Returns (binary C x C int matrix, mean matrix).
    """
    values = np.asarray(values, dtype=np.float64)
    n, n_vars = values.shape
    span = sub_len if mode == "simultaneous" else 2 * sub_len
    if mode not in ("simultaneous", "lagged"):
        raise ConfigError(f"unknown correlation mode {mode!r}")
    if n < span:
        raise DataError(
            f"series of {n} rows is too short for {mode} windows of {sub_len}")

    rng = component_rng(seed, SEED_CORR)
    starts = rng.integers(0, n - span + 1, size=n_samples)
    acc = np.zeros((n_vars, n_vars))
    for s in starts:
        window = values[s:s + sub_len]
        if mode == "simultaneous":
            with np.errstate(invalid="ignore", divide="ignore"):
                corr = np.corrcoef(window, rowvar=False)
        else:
            future = values[s + sub_len:s + span]
            with np.errstate(invalid="ignore", divide="ignore"):
                full = np.corrcoef(window, future, rowvar=False)
            corr = full[:n_vars, n_vars:]
        acc += np.nan_to_num(corr, nan=0.0)
    mean_corr = acc / n_samples
    return (mean_corr > threshold).astype(np.int64), mean_corr


# ---------------------------------------------------------------------------
# attention export


def attention_matrix(model_or_checkpoint, x, layer=0, head=0):
    """Post-softmax attention matrix (C x C) for one input window."""
    model = _to_model(model_or_checkpoint)
    capture = {}
    model.forward(np.asarray(x, dtype=np.float64), capture_attention=capture)
    key = f"enc.{layer}"
    if key not in capture:
        raise ConfigError(
            f"layer {layer} out of range (captured: {sorted(capture)})")
    heads = capture[key]
    if not 0 <= head < len(heads):
        raise ConfigError(f"head {head} out of range (layer has {len(heads)})")
    matrix = heads[head]
    return matrix[0] if matrix.ndim == 3 else matrix


def attention_heatmap_export(model_or_checkpoint, x, layer, head, path):
    """Write one attention matrix as a CSV (header row, rows sum to 1)."""
    matrix = attention_matrix(model_or_checkpoint, x, layer, head)
    n_vars = matrix.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"v{j}" for j in range(n_vars)) + "\n")
        for row in matrix:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    return matrix

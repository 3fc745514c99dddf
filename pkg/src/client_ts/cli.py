"""Command-line entry point.

Subcommands map 1:1 onto library operations: train, eval, mask, ablate,
sweep-lookback, attn-variant, correlate, heatmap, bench, fixture. Runs are
driven by a TOML config file ([data]/[task]/[model]/[train]/[run] sections,
unknown keys rejected); command-line flags override file values, and every
run writes a resolved-config.toml capturing all defaults so results are
replayable from artifacts alone.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.

Heavy imports happen inside handlers so that the CLIENT_THREADS env var can
cap BLAS parallelism before numpy loads.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError

DEFAULT_FRACTIONS = "0,0.2,0.5,0.8"
DEFAULT_VARIANTS = "client,no-linear,no-revin,embed,decoder"
DEFAULT_LOOKBACKS = "96,144,192"
DEFAULT_KINDS = "full,linear,mlp,none"

VARIANT_ALIASES = {
    "client": "Client",
    "no-linear": "Client-Linear",
    "no-revin": "Client-ReVIN",
    "embed": "Client+Embed",
    "decoder": "Client+Decoder",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# run configuration


_MODEL_KEYS = (
    "n_layers", "d_ff", "n_heads", "activation", "attention_kind",
    "use_linear_branch", "use_revin", "use_input_embedding",
    "use_decoder_head", "embed_dim", "w_lin_init", "w_lin_per_variable",
    "revin_affine", "scaling_mode", "revin_eps", "ln_eps",
)
_TRAIN_KEYS = (
    "lr", "batch_size", "max_epochs", "patience", "beta1", "beta2",
    "adam_eps", "clip_norm", "train_mask_fraction",
)
_SECTIONS = {
    "data": ("path", "name", "split", "ratios"),
    "task": ("lookback", "horizon"),
    "model": _MODEL_KEYS,
    "train": _TRAIN_KEYS,
    "run": ("seed", "out"),
}


@dataclasses.dataclass
class RunConfig:
    """Fully-merged run description (file < flags < defaults)."""

    data_path: str | None = None
    dataset_name: str | None = None
    split: str = "ratio"
    ratios: tuple = (0.7, 0.1, 0.2)
    lookback: int = 96
    horizon: int = 96
    model: dict = dataclasses.field(default_factory=dict)
    train: dict = dataclasses.field(default_factory=dict)
    seed: int = 0
    out: str = "runs"

    @staticmethod
    def from_file(path):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None

        for section, keys in raw.items():
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            if not isinstance(keys, dict):
                raise ConfigError(f"{path}: [{section}] must be a table")
            for key in keys:
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

        rc = RunConfig()
        data = raw.get("data", {})
        rc.data_path = data.get("path", rc.data_path)
        rc.dataset_name = data.get("name", rc.dataset_name)
        rc.split = data.get("split", rc.split)
        if "ratios" in data:
            rc.ratios = tuple(float(r) for r in data["ratios"])
        task = raw.get("task", {})
        rc.lookback = int(task.get("lookback", rc.lookback))
        rc.horizon = int(task.get("horizon", rc.horizon))
        rc.model = dict(raw.get("model", {}))
        rc.train = dict(raw.get("train", {}))
        run = raw.get("run", {})
        rc.seed = int(run.get("seed", rc.seed))
        rc.out = run.get("out", rc.out)
        return rc

    def apply_flags(self, args):
        if getattr(args, "data", None):
            self.data_path = args.data
        if getattr(args, "split", None):
            self.split = args.split
        if getattr(args, "seed", None) is not None:
            self.seed = args.seed
        if getattr(args, "out", None):
            self.out = args.out
        if getattr(args, "lookback", None):
            self.lookback = args.lookback
        if getattr(args, "horizon", None):
            self.horizon = args.horizon
        return self

    def client_config(self, n_variables):
        from . import model as M

        task = M.ForecastTask(lookback=self.lookback, n_variables=n_variables,
                              horizon=self.horizon)
        try:
            cfg = M.ClientConfig(task=task, **self.model)
        except TypeError as exc:
            raise ConfigError(f"bad [model] options: {exc}") from None
        return cfg.validate()

    def train_config(self):
        from .training import TrainConfig

        try:
            tcfg = TrainConfig(seed=self.seed, **self.train)
        except TypeError as exc:
            raise ConfigError(f"bad [train] options: {exc}") from None
        return tcfg.validate()


def _load_series(rc):
    from .data import load_csv

    if not rc.data_path:
        raise ConfigError("no dataset: pass --data or set [data].path in the config")
    if not os.path.exists(rc.data_path):
        raise DataError(f"dataset file not found: {rc.data_path}")
    series = load_csv(rc.data_path)
    if rc.dataset_name is None:
        rc.dataset_name = Path(rc.data_path).stem
    return series


def _toml_scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise TypeError(f"cannot render {type(v).__name__} as TOML")


def write_resolved_config(rc, client_cfg, tcfg, out_dir, extras=None):
    """Persist every resolved value of a run; the artifact alone replays it."""
    from . import backend
    from .training import config_to_dict

    sections = {
        "data": {"path": rc.data_path, "name": rc.dataset_name,
                 "split": rc.split, "ratios": list(rc.ratios)},
        "task": {"lookback": client_cfg.task.lookback,
                 "n_variables": client_cfg.task.n_variables,
                 "horizon": client_cfg.task.horizon},
        "model": {k: v for k, v in config_to_dict(client_cfg).items()
                  if k != "task"},
        "train": {k: getattr(tcfg, k) for k in
                  ("lr", "batch_size", "max_epochs", "patience", "beta1",
                   "beta2", "adam_eps", "clip_norm", "train_mask_fraction")},
        "run": {"seed": rc.seed, "out": rc.out,
                "backend": backend.backend_name(), **(extras or {})},
    }
    sections["model"]["n_heads"] = client_cfg.resolved_heads
    path = os.path.join(out_dir, "resolved-config.toml")
    with open(path, "w", encoding="utf-8") as fh:
        for name, table in sections.items():
            fh.write(f"[{name}]\n")
            for key, value in table.items():
                if value is None:
                    continue
                fh.write(f"{key} = {_toml_scalar(value)}\n")
            fh.write("\n")
    return path


def _out_dir(rc):
    os.makedirs(rc.out, exist_ok=True)
    return rc.out


def _parse_list(text, kind=float):
    try:
        return [kind(part) for part in str(text).split(",") if part != ""]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _run_config(args):
    rc = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    return rc.apply_flags(args)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args):
    from . import model as M
    from .data import prepare_windows
    from .training import (SEED_INIT, component_seed, train,
                           write_history_csv)

    rc = _run_config(args)
    series = _load_series(rc)
    cfg = rc.client_config(series.n_variables)
    tcfg = rc.train_config()
    out = _out_dir(rc)

    scaler, (tr_w, va_w, te_w) = prepare_windows(
        series, rc.split, rc.lookback, rc.horizon, rc.ratios)
    model = M.build_variant(cfg, seed=component_seed(rc.seed, SEED_INIT))
    ckpt, history = train(model, tr_w, va_w, tcfg)
    ckpt.scaler_mean, ckpt.scaler_std = scaler.mean, scaler.std

    ckpt_path = os.path.join(out, "checkpoint.clnt")
    ckpt.save(ckpt_path)
    write_history_csv(history, os.path.join(out, "history.csv"))
    write_resolved_config(rc, cfg, tcfg, out, {"command": "train"})

    from .training import evaluate_model
    mse, mae = evaluate_model(model, te_w, tcfg.batch_size)
    print(f"trained {M.variant_name(cfg)} on {rc.dataset_name}: "
          f"best val MSE {min(h['val_mse'] for h in history):.6g} "
          f"(epoch {ckpt.best_epoch}/{len(history)}), "
          f"test MSE {mse:.6g} MAE {mae:.6g}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def _load_checkpoint_and_windows(args, rc):
    """Shared eval/mask/heatmap path: checkpoint + its scaler + test split."""
    from .data import chrono_split, make_windows
    from .training import Checkpoint

    if not getattr(args, "checkpoint", None):
        raise UsageError("--checkpoint is required")
    ckpt = Checkpoint.load(args.checkpoint)
    series = _load_series(rc)
    task = ckpt.config.task
    if series.n_variables != task.n_variables:
        raise DataError(
            f"checkpoint/config mismatch: checkpoint expects "
            f"{task.n_variables} variables, dataset {rc.data_path!r} has "
            f"{series.n_variables}")
    if ckpt.scaler_mean is None:
        raise DataError(f"{args.checkpoint}: checkpoint carries no scaler statistics")
    _, _, test = chrono_split(series, rc.split, task.lookback, rc.ratios)
    scaled = (test - ckpt.scaler_mean) / ckpt.scaler_std
    return ckpt, make_windows(scaled, task.lookback, task.horizon)


def cmd_eval(args):
    from . import model as M
    from .experiments import ReportRow, write_report
    from .training import evaluate

    import time as _time

    rc = _run_config(args)
    ckpt, test_w = _load_checkpoint_and_windows(args, rc)
    t0 = _time.perf_counter()
    mse, mae = evaluate(ckpt, test_w)
    out = _out_dir(rc)
    task = ckpt.config.task
    row = ReportRow(
        experiment="eval", dataset=rc.dataset_name,
        variant=M.variant_name(ckpt.config), L=task.lookback, T=task.horizon,
        seed=ckpt.seed, mse=mse, mae=mae,
        seconds=_time.perf_counter() - t0,
        params=sum(v.size for v in ckpt.params.values()))
    write_report([row], os.path.join(out, "eval"))
    print(f"{rc.dataset_name} test MSE {mse:.6g} MAE {mae:.6g}")
    return 0


def cmd_mask(args):
    from .experiments import mask_experiment, write_report

    rc = _run_config(args)
    ckpt, test_w = _load_checkpoint_and_windows(args, rc)
    fractions = _parse_list(args.fractions)
    rows = mask_experiment(ckpt, test_w, fractions, seed=rc.seed,
                           dataset=rc.dataset_name)
    out = _out_dir(rc)
    paths = write_report(rows, os.path.join(out, "mask"))
    for row in rows:
        print(f"{row.variant}: MSE {row.mse:.6g} MAE {row.mae:.6g}")
    print(f"report: {paths[0]}")
    return 0


def _suite_common(args):
    rc = _run_config(args)
    series = _load_series(rc)
    cfg = rc.client_config(series.n_variables)
    tcfg = rc.train_config()
    horizons = (_parse_list(args.horizons, int) if getattr(args, "horizons", None)
                else [rc.horizon])
    return rc, series, cfg, tcfg, horizons


def _finish_suite(rows, rc, cfg, tcfg, name):
    from .experiments import write_report

    out = _out_dir(rc)
    paths = write_report(rows, os.path.join(out, name))
    write_resolved_config(rc, cfg, tcfg, out, {"command": name})
    for row in rows:
        status = f"ERROR ({row.error})" if row.error else \
            f"MSE {row.mse:.6g} MAE {row.mae:.6g}"
        print(f"{row.variant} T={row.T} L={row.L}: {status}")
    print(f"report: {paths[0]}")
    return 0  # failed rows are marked in the report, not fatal to the suite


def cmd_ablate(args):
    from .experiments import ablation_suite

    rc, series, cfg, tcfg, horizons = _suite_common(args)
    try:
        variants = [VARIANT_ALIASES[v.strip()] for v in args.variants.split(",")]
    except KeyError as exc:
        raise UsageError(f"unknown variant {exc.args[0]!r}; choose from "
                         f"{','.join(VARIANT_ALIASES)}") from None
    rows = ablation_suite(series, rc.split, cfg, horizons, rc.seed, tcfg,
                          dataset=rc.dataset_name, variants=variants,
                          ratios=rc.ratios)
    return _finish_suite(rows, rc, cfg, tcfg, "ablation")


def cmd_sweep_lookback(args):
    from .experiments import lookback_sweep

    rc, series, cfg, tcfg, horizons = _suite_common(args)
    lookbacks = _parse_list(args.lookbacks, int)
    rows = []
    for horizon in horizons:
        rows.extend(lookback_sweep(series, rc.split, lookbacks, horizon, cfg,
                                   rc.seed, tcfg, dataset=rc.dataset_name,
                                   ratios=rc.ratios))
    return _finish_suite(rows, rc, cfg, tcfg, "lookback")


def cmd_attn_variant(args):
    from .experiments import attention_replacement_suite

    rc, series, cfg, tcfg, horizons = _suite_common(args)
    kinds = [k.strip() for k in args.kinds.split(",")]
    rows = attention_replacement_suite(series, rc.split, cfg, kinds, horizons,
                                       rc.seed, tcfg, dataset=rc.dataset_name,
                                       ratios=rc.ratios)
    return _finish_suite(rows, rc, cfg, tcfg, "attention")


def cmd_correlate(args):
    import numpy as np

    from .experiments import correlation_analysis

    rc = _run_config(args)
    series = _load_series(rc)
    binary, mean = correlation_analysis(
        series.values, n_samples=args.samples, sub_len=args.sub_len,
        threshold=args.threshold, mode=args.mode, seed=rc.seed)
    out = _out_dir(rc)

    def dump(matrix, path, fmt):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"v{j}" for j in range(matrix.shape[1])) + "\n")
            for row in matrix:
                fh.write(",".join(fmt % v for v in row) + "\n")

    bin_path = os.path.join(out, f"correlation_{args.mode}_binary.csv")
    mean_path = os.path.join(out, f"correlation_{args.mode}_mean.csv")
    dump(binary, bin_path, "%d")
    dump(mean, mean_path, "%.17g")
    density = float(np.mean(binary))
    print(f"{args.mode} correlation at threshold {args.threshold:g}: "
          f"{binary.sum()} of {binary.size} pairs strong ({density:.1%})")
    print(f"matrices: {bin_path}, {mean_path}")
    return 0


def cmd_heatmap(args):
    from .experiments import attention_heatmap_export

    rc = _run_config(args)
    ckpt, test_w = _load_checkpoint_and_windows(args, rc)
    if not 0 <= args.window < len(test_w):
        raise DataError(f"--window {args.window} out of range "
                        f"(test split has {len(test_w)} windows)")
    x, _ = test_w[args.window]
    out = _out_dir(rc)
    path = os.path.join(out, f"heatmap_l{args.layer}h{args.head}.csv")
    matrix = attention_heatmap_export(ckpt, x, args.layer, args.head, path)
    print(f"attention matrix {matrix.shape[0]}x{matrix.shape[1]} -> {path}")
    return 0


def cmd_bench(args):
    from . import model as M
    from .experiments import benchmark_backends

    rc = _run_config(args)
    if getattr(args, "data", None):
        series = _load_series(rc)
        n_vars = series.n_variables
    else:
        n_vars = args.variables
    cfg = rc.client_config(n_vars)
    results = benchmark_backends(cfg, seed=rc.seed, batch_size=args.batch_size,
                                 n_timed=args.iters)
    out = _out_dir(rc)
    path = os.path.join(out, "bench.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)

    for name, rep in results["model"].items():
        print(f"[{name:8s}] {rep['param_count']} params "
              f"({rep['param_bytes'] / 1e6:.3f} MB), "
              f"{rep['seconds_per_iteration'] * 1e3:.2f} ms/iter at batch "
              f"{args.batch_size}, ~{rep['training_bytes_estimate'] / 1e6:.1f} MB training footprint")
    kinds = sorted(next(iter(results["kernels"].values())))
    for op in kinds:
        parts = [f"{name} {results['kernels'][name][op] * 1e6:.1f} us"
                 for name in results["kernels"]]
        print(f"kernel {op:14s} " + "  ".join(parts))
    print(f"details: {path}")
    return 0


def cmd_fixture(args):
    from .data import synthetic_fixture, write_csv

    rc = _run_config(args)
    out = _out_dir(rc)
    series = synthetic_fixture(n_rows=args.rows, seed=rc.seed if rc.seed else 7)
    path = os.path.join(out, "fixture.csv")
    write_csv(series, path)
    print(f"synthetic fixture: {series.n_rows} rows x {series.n_variables} "
          f"variables -> {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = _Parser(prog="client-ts",
                     description="Cross-variable forecaster experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="TOML run config")
        p.add_argument("--data", help="dataset CSV path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="root seed")
        p.add_argument("--split", choices=("ett_hourly", "ett_minute", "ratio"),
                       default=None, help="chronological split profile")
        p.add_argument("--lookback", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint file")

    p = sub.add_parser("train", help="train a model, write checkpoint + history")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mask", help="input-masking robustness curve")
    common(p, checkpoint=True)
    p.add_argument("--fractions", default=DEFAULT_FRACTIONS,
                   help=f"comma list incl. 0 (default {DEFAULT_FRACTIONS})")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("ablate", help="train + score the ablation variants")
    common(p)
    p.add_argument("--variants", default=DEFAULT_VARIANTS,
                   help=f"comma list (default {DEFAULT_VARIANTS})")
    p.add_argument("--horizons", default=None, help="comma list of horizons")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-lookback", help="train + score per look-back size")
    common(p)
    p.add_argument("--lookbacks", default=DEFAULT_LOOKBACKS,
                   help=f"comma list (default {DEFAULT_LOOKBACKS})")
    p.add_argument("--horizons", default=None, help="comma list of horizons")
    p.set_defaults(func=cmd_sweep_lookback)

    p = sub.add_parser("attn-variant", help="train + score attention replacements")
    common(p)
    p.add_argument("--kinds", default=DEFAULT_KINDS,
                   help=f"comma list (default {DEFAULT_KINDS})")
    p.add_argument("--horizons", default=None, help="comma list of horizons")
    p.set_defaults(func=cmd_attn_variant)

    p = sub.add_parser("correlate", help="variable correlation matrices")
    common(p)
    p.add_argument("--mode", choices=("simultaneous", "lagged"),
                   default="simultaneous")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--sub-len", dest="sub_len", type=int, default=96)
    p.add_argument("--threshold", type=float, default=0.8)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("heatmap", help="export one attention matrix as CSV")
    common(p, checkpoint=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--window", type=int, default=0,
                   help="test window index used as the input sample")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("bench", help="efficiency accounting + backend comparison")
    common(p)
    p.add_argument("--variables", type=int, default=7,
                   help="variable count when no dataset is given")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--iters", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fixture", help="emit the synthetic test dataset")
    common(p)
    p.add_argument("--rows", type=int, default=1600)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None):
    threads = os.environ.get("CLIENT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = threads

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

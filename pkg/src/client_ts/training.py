"""Adam optimization, the training loop with early stopping, evaluation,
and checkpoint persistence.

Loss is MSE on the scaler-normalized scale (targets stay in scaler space;
the model's instance-norm decode returns forecasts in that same space), so
reported metrics are directly comparable with published z-scored numbers.

Determinism contract: with a fixed (config, seed) and the same kernel
backend, training produces bitwise-identical checkpoints; everything
stochastic flows from the root seed through fixed component offsets.
"""

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from . import model as M
from . import tensor as T
from .data import mask_series
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"CLNT"
CHECKPOINT_VERSION = 1

# component offsets for splitting one root seed
SEED_INIT, SEED_SHUFFLE, SEED_MASK, SEED_CORR = 0, 1, 2, 3


def component_seed(root_seed, component):
    """Derive an independent child seed from the root for one randomness
    consumer (init / shuffle / mask / correlation sampling)."""
    ss = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(int(component),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def component_rng(root_seed, component):
    return np.random.Generator(np.random.PCG64(component_seed(root_seed, component)))


@dataclass
class TrainConfig:
    """Optimization protocol: batch 32, up to 10 epochs, early stop after 3
    epochs without validation improvement."""

    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = None
    train_mask_fraction: float = 0.0  # off by default; evaluation-time masking lives in experiments

    def validate(self):
        if min(self.lr, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ConfigError("lr, batch_size, max_epochs, patience must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must be <= max_epochs")
        if not 0.0 <= self.train_mask_fraction <= 1.0:
            raise ConfigError("train_mask_fraction must be in [0, 1]")
        return self


# ---------------------------------------------------------------------------
# losses and metrics


def mse_loss(pred, target):
    """Differentiable mean squared error over all elements."""
    target = target if isinstance(target, Tensor) else Tensor(target, constant=True)
    return T.mse_reduce(pred, target)


def mae_metric(pred, target):
    pred = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    target = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target.shape:
        raise DataError(f"mae_metric: shapes differ: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def mse_metric(pred, target):
    pred = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    target = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target.shape:
        raise DataError(f"mse_metric: shapes differ: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# Adam


def adam_step(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on (param, m, v) arrays.
    Arrays must be contiguous; the kernel sees them as flat buffers."""
    backend.K.adam_update(param.reshape(-1), np.ascontiguousarray(grad).reshape(-1),
                          m.reshape(-1), v.reshape(-1), t, lr, beta1, beta2, eps)


class Adam:
    """Adam over a name->Tensor parameter dict."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        grads = {}
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            grads[name] = g
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                factor = self.clip_norm / total
                grads = {k: g * factor for k, g in grads.items()}
        for name, p in self.params.items():
            adam_step(p.data, grads[name], self.m[name], self.v[name],
                      self.t, self.lr, self.beta1, self.beta2, self.eps)


# ---------------------------------------------------------------------------
# training and evaluation


class EarlyStopping:
    """Best-so-far tracker: stop after `patience` consecutive epochs without
    a validation improvement; `best_index` is the 1-based best epoch."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.best_index = 0
        self.bad = 0
        self.count = 0

    def update(self, val):
        """Returns (is_new_best, should_stop)."""
        self.count += 1
        if val < self.best:
            self.best = val
            self.best_index = self.count
            self.bad = 0
            return True, False
        self.bad += 1
        return False, self.bad >= self.patience


def _forward_loss(model, xs, ys):
    pred = model.forward(xs)
    return mse_loss(pred, ys)


def train(model, train_windows, val_windows, tcfg):
    """Minibatch Adam with early stopping; returns (Checkpoint, history).

    Each epoch shuffles the train windows under the seeded generator, runs
    forward/backward/Adam per batch (the incomplete final batch included),
    then scores validation MSE. The checkpoint carries the parameters from
    the best validation epoch. history rows are dicts with keys
    epoch/train_mse/val_mse/seconds.
    """
    tcfg.validate()
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise DataError("train and validation window sets must be nonempty")
    shuffle_rng = component_rng(tcfg.seed, SEED_SHUFFLE)
    mask_rng = component_rng(tcfg.seed, SEED_MASK)
    opt = Adam(model.params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps,
               tcfg.clip_norm)

    stopper = EarlyStopping(tcfg.patience)
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    history = []

    for epoch in range(1, tcfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_windows))
        sq_sum = 0.0
        n_elems = 0
        for b, (xs, ys) in enumerate(train_windows.batches(tcfg.batch_size, order)):
            if tcfg.train_mask_fraction > 0.0:
                xs = mask_series(xs, tcfg.train_mask_fraction, mask_rng)
            loss = _forward_loss(model, xs, ys)
            lv = loss.item()
            if not np.isfinite(lv):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}, batch {b}")
            sq_sum += lv * ys.size
            n_elems += ys.size
            model.zero_grads()
            T.backward(loss)
            opt.step()
        train_mse = sq_sum / n_elems
        val_mse, _ = evaluate_model(model, val_windows, tcfg.batch_size)
        history.append({
            "epoch": epoch,
            "train_mse": train_mse,
            "val_mse": val_mse,
            "seconds": time.perf_counter() - t0,
        })
        is_best, should_stop = stopper.update(val_mse)
        if is_best:
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        if should_stop:
            break

    for k, p in model.params.items():
        p.data = best_params[k].copy()
    ckpt = Checkpoint(
        config=model.config,
        params={k: v.copy() for k, v in best_params.items()},
        seed=tcfg.seed,
        history=[(h["train_mse"], h["val_mse"]) for h in history],
        best_epoch=stopper.best_index,
    )
    return ckpt, history


def evaluate_model(model, windows, batch_size=32, mask_fraction=0.0,
                   mask_rng=None):
    """(MSE, MAE) averaged over every element of every window, in a
    deterministic batch order. Optional input masking knocks out a fraction
    of each window's entries before the forward pass."""
    task = model.config.task
    if (windows.lookback != task.lookback or windows.horizon != task.horizon
            or windows.n_variables != task.n_variables):
        raise DataError(
            f"checkpoint/config mismatch: model expects (L={task.lookback}, "
            f"C={task.n_variables}, T={task.horizon}) but windows provide "
            f"(L={windows.lookback}, C={windows.n_variables}, T={windows.horizon})")
    sq_sum = 0.0
    abs_sum = 0.0
    n = 0
    for xs, ys in windows.batches(batch_size):
        if mask_fraction > 0.0:
            xs = mask_series(xs, mask_fraction, mask_rng)
        pred = model.forward(xs).numpy()
        diff = pred - ys
        sq_sum += float(np.sum(diff * diff))
        abs_sum += float(np.sum(np.abs(diff)))
        n += ys.size
    return sq_sum / n, abs_sum / n


def evaluate(model_or_checkpoint, windows, batch_size=32):
    """Evaluate a model or a checkpoint on test windows."""
    model = model_or_checkpoint
    if isinstance(model, Checkpoint):
        model = model.to_model()
    return evaluate_model(model, windows, batch_size)


def fit_single_batch(model, xs, ys, n_steps=500, lr=1e-2, seed=0):
    """Overfit one repeated batch; returns the per-step loss trace. A sanity
    oracle: any healthy variant drives this below 1e-3."""
    opt = Adam(model.params, lr)
    trace = []
    for _ in range(n_steps):
        loss = _forward_loss(model, xs, ys)
        trace.append(loss.item())
        model.zero_grads()
        T.backward(loss)
        opt.step()
    return trace


def write_history_csv(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse,seconds\n")
        for h in history:
            fh.write(f"{h['epoch']},{h['train_mse']:.17g},"
                     f"{h['val_mse']:.17g},{h['seconds']:.6f}\n")


# ---------------------------------------------------------------------------
# checkpoints


def config_to_dict(config):
    d = {
        "task": {
            "lookback": config.task.lookback,
            "n_variables": config.task.n_variables,
            "horizon": config.task.horizon,
        },
    }
    for f in (
        "n_layers", "d_ff", "n_heads", "activation", "attention_kind",
        "use_linear_branch", "use_revin", "use_input_embedding",
        "use_decoder_head", "embed_dim", "w_lin_init", "w_lin_per_variable",
        "revin_affine", "scaling_mode", "revin_eps", "ln_eps",
    ):
        d[f] = getattr(config, f)
    return d


def config_from_dict(d):
    d = dict(d)
    try:
        task = M.ForecastTask(**d.pop("task"))
        return M.ClientConfig(task=task, **d)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from None


@dataclass
class Checkpoint:
    """Versioned container for trained parameters plus everything needed to
    replay: config, root seed, scaler statistics and per-epoch losses.
    load(save(x)) reproduces forward outputs bitwise."""

    config: M.ClientConfig
    params: dict
    seed: int
    history: list = field(default_factory=list)
    best_epoch: int = 0
    scaler_mean: np.ndarray | None = None
    scaler_std: np.ndarray | None = None

    def to_model(self):
        return M.ClientModel(self.config, {
            k: Tensor(v.copy()) for k, v in self.params.items()
        })

    def save(self, path):
        header = {
            "config": config_to_dict(self.config),
            "seed": int(self.seed),
            "best_epoch": int(self.best_epoch),
            "history": [[float(a), float(b)] for a, b in self.history],
            "scaler_mean": None if self.scaler_mean is None else list(self.scaler_mean),
            "scaler_std": None if self.scaler_std is None else list(self.scaler_std),
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(self.params)))
            for name, arr in self.params.items():
                nb = name.encode("utf-8")
                fh.write(struct.pack("<I", len(nb)))
                fh.write(nb)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @staticmethod
    def load(path):
        def read_exact(fh, n, what):
            buf = fh.read(n)
            if len(buf) != n:
                raise CheckpointError(f"{path}: truncated while reading {what}")
            return buf

        with open(path, "rb") as fh:
            magic = read_exact(fh, 4, "magic")
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(
                    f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
            (version,) = struct.unpack("<I", read_exact(fh, 4, "version"))
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"{path}: unsupported format version {version}")
            (blob_len,) = struct.unpack("<I", read_exact(fh, 4, "header length"))
            try:
                header = json.loads(read_exact(fh, blob_len, "header"))
            except json.JSONDecodeError as exc:
                raise CheckpointError(f"{path}: corrupt header: {exc}") from None
            (n_records,) = struct.unpack("<I", read_exact(fh, 4, "record count"))
            params = {}
            for _ in range(n_records):
                (name_len,) = struct.unpack("<I", read_exact(fh, 4, "name length"))
                name = read_exact(fh, name_len, "name").decode("utf-8")
                (rank,) = struct.unpack("<I", read_exact(fh, 4, "rank"))
                shape = struct.unpack(f"<{rank}I",
                                      read_exact(fh, 4 * rank, "extents"))
                count = int(np.prod(shape)) if rank else 1
                raw = read_exact(fh, 8 * count, f"data of {name!r}")
                params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            if fh.read(1):
                raise CheckpointError(f"{path}: trailing bytes after records")

        return Checkpoint(
            config=config_from_dict(header["config"]),
            params=params,
            seed=header["seed"],
            history=[tuple(row) for row in header["history"]],
            best_epoch=header.get("best_epoch", 0),
            scaler_mean=None if header["scaler_mean"] is None
            else np.asarray(header["scaler_mean"]),
            scaler_std=None if header["scaler_std"] is None
            else np.asarray(header["scaler_std"]),
        )


def save_checkpoint(checkpoint, path):
    checkpoint.save(path)


def load_checkpoint(path):
    return Checkpoint.load(path)

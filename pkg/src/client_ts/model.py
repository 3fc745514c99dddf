"""Client forecaster: a cross-variable attention encoder fused with a
channel-independent linear branch behind reversible instance normalization.

Forward pass for a look-back window x of shape (L, C):

  1. per-window, per-variable standardization (statistics kept for decode)
  2. transpose to (C, L): each variable's full series is one token
  3. N post-norm encoder blocks; attention mixes across variables only,
     scores scaled by sqrt(C) (or sqrt(d_head) when configured)
  4. shared projection mapping each token L -> T, transposed to (T, C)
  5. plus w_lin * (shared L -> T linear map applied per variable to the
     normalized input)
  6. statistics restored onto the forecast window

There is no positional encoding anywhere: variable tokens are unordered,
and the default configuration is equivariant to permutations of the
variable axis. Ablation flags remove the linear branch or the
normalization, insert a per-variable embedding before the encoder, swap
the projection head for a decoder block (learned query bank with self- and
cross-attention), or replace attention with C-mixing linear/MLP maps or
nothing at all.

A leading batch axis is supported throughout: (B, L, C) in, (B, T, C) out.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

VARIANTS = ("Client", "Client-Linear", "Client-ReVIN", "Client+Embed", "Client+Decoder")
ATTENTION_KINDS = ("full", "linear", "mlp", "none")
ACTIVATIONS = ("gelu", "relu")
SCALING_MODES = ("sqrt_C", "sqrt_dk")


@dataclass(frozen=True)
class ForecastTask:
    """Problem definition: predict `horizon` future steps of `n_variables`
    series from the `lookback` most recent steps."""

    lookback: int
    n_variables: int
    horizon: int

    def __post_init__(self):
        for name in ("lookback", "n_variables", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ForecastTask.{name} must be >= 1")


@dataclass
class RevINState:
    """Per-window statistics removed by encode and restored by decode.

    mean/std have one value per variable; shapes are (1, C) for a single
    window or (B, 1, C) for a batch. std is the population standard
    deviation clamped below by eps, so constant columns normalize to zero.
    """

    mean: np.ndarray
    std: np.ndarray
    scale: np.ndarray | None = None
    shift: np.ndarray | None = None


@dataclass(frozen=True)
class ClientConfig:
    """Everything needed to build the model. Defaults follow the published
    protocol: 2 encoder layers, FFN width in 16..512, blend weight
    initialized in [0.5, 1]."""

    task: ForecastTask
    n_layers: int = 2
    d_ff: int = 32
    n_heads: int | None = None
    activation: str = "gelu"
    attention_kind: str = "full"
    use_linear_branch: bool = True
    use_revin: bool = True
    use_input_embedding: bool = False
    use_decoder_head: bool = False
    embed_dim: int = 128
    w_lin_init: float = 1.0
    w_lin_per_variable: bool = False
    revin_affine: bool = False
    scaling_mode: str = "sqrt_C"
    revin_eps: float = 1e-5
    ln_eps: float = 1e-5

    @property
    def token_width(self):
        """Width of a variable token: the raw series length, unless an
        embedding remaps it."""
        return self.embed_dim if self.use_input_embedding else self.task.lookback

    @property
    def resolved_heads(self):
        """n_heads, defaulting to the largest divisor of token_width <= 8."""
        if self.n_heads is not None:
            return self.n_heads
        for h in range(8, 0, -1):
            if self.token_width % h == 0:
                return h
        return 1

    def validate(self):
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.d_ff < 1:
            raise ConfigError("d_ff must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.attention_kind not in ATTENTION_KINDS:
            raise ConfigError(f"attention_kind must be one of {ATTENTION_KINDS}")
        if self.scaling_mode not in SCALING_MODES:
            raise ConfigError(f"scaling_mode must be one of {SCALING_MODES}")
        if self.use_input_embedding and self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1 when the embedding is enabled")
        d = self.token_width
        h = self.resolved_heads
        if d % h != 0:
            raise ConfigError(f"n_heads={h} does not divide token width {d}")
        return self


def variant_name(config):
    """Human-readable variant label derived from the config flags."""
    name = "Client"
    if not config.use_linear_branch:
        name += "-Linear"
    if not config.use_revin:
        name += "-ReVIN"
    if config.use_input_embedding:
        name += "+Embed"
    if config.use_decoder_head:
        name += "+Decoder"
    if config.attention_kind != "full":
        name += f"[attn={config.attention_kind}]"
    return name


def variant_config(base, name):
    """Config for one of the named ablation variants of `base`."""
    if name == "Client":
        return base
    if name == "Client-Linear":
        return dataclasses.replace(base, use_linear_branch=False)
    if name == "Client-ReVIN":
        return dataclasses.replace(base, use_revin=False)
    if name == "Client+Embed":
        return dataclasses.replace(base, use_input_embedding=True)
    if name == "Client+Decoder":
        return dataclasses.replace(base, use_decoder_head=True)
    raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS}")


# ---------------------------------------------------------------------------
# reversible instance normalization


def revin_encode(x, eps=1e-5):
    """Standardize each variable over the window's time axis.

    x: (L, C) or (B, L, C) array. Returns (x_norm, RevINState). The identity
    `revin_decode(revin_encode(x)[0][:T], state) == x[:T]` holds exactly up
    to rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 3
    axis = 1 if batched else 0
    mean = x.mean(axis=axis, keepdims=True)
    std = np.maximum(x.std(axis=axis, keepdims=True), eps)
    return (x - mean) / std, RevINState(mean=mean, std=std)


def revin_decode(y_norm, state):
    """Restore the statistics removed by the matching encode call onto a
    forecast window (T rows instead of L)."""
    y_norm = np.asarray(y_norm, dtype=np.float64)
    if y_norm.shape[-1] != state.mean.shape[-1]:
        raise ShapeError(
            f"revin_decode: {y_norm.shape[-1]} variables vs state with "
            f"{state.mean.shape[-1]}")
    y = y_norm
    if state.scale is not None:
        y = (y - state.shift) / state.scale
    return y * state.std + state.mean


# ---------------------------------------------------------------------------
# parameters


def _init_params(config, rng):
    """Parameter dict in a fixed creation order. Dense weights are uniform
    in ±1/sqrt(fan_in); biases start at zero; layer norms at identity."""
    p = {}

    def dense(name, fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        p[name] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def bias(name, width):
        p[name] = Tensor(np.zeros(width))

    def layernorm(name, width):
        p[f"{name}.gamma"] = Tensor(np.ones(width))
        p[f"{name}.beta"] = Tensor(np.zeros(width))

    def attention(prefix, d):
        for w in ("wq", "wk", "wv", "wo"):
            dense(f"{prefix}.{w}", d, d)

    def ffn(prefix, d, d_ff):
        dense(f"{prefix}.w1", d, d_ff)
        bias(f"{prefix}.b1", d_ff)
        dense(f"{prefix}.w2", d_ff, d)
        bias(f"{prefix}.b2", d)

    task = config.task
    d = config.token_width
    C = task.n_variables

    if config.use_input_embedding:
        dense("embed.w", task.lookback, config.embed_dim)
        bias("embed.b", config.embed_dim)

    for i in range(config.n_layers):
        kind = config.attention_kind
        if kind == "full":
            attention(f"enc.{i}.attn", d)
        elif kind == "linear":
            dense(f"enc.{i}.mix.w1", C, C)
        elif kind == "mlp":
            dense(f"enc.{i}.mix.w1", C, C)
            dense(f"enc.{i}.mix.w2", C, C)
        if kind != "none":
            layernorm(f"enc.{i}.ln1", d)
        ffn(f"enc.{i}.ffn", d, config.d_ff)
        layernorm(f"enc.{i}.ln2", d)

    if config.use_decoder_head:
        bound = 1.0 / np.sqrt(d)
        p["dec.bank"] = Tensor(rng.uniform(-bound, bound, size=(C, d)))
        attention("dec.self", d)
        layernorm("dec.ln1", d)
        attention("dec.cross", d)
        layernorm("dec.ln2", d)
        ffn("dec.ffn", d, config.d_ff)
        layernorm("dec.ln3", d)

    dense("proj.w", d, task.horizon)
    bias("proj.b", task.horizon)

    if config.use_linear_branch:
        dense("lin.w", task.lookback, task.horizon)
        bias("lin.b", task.horizon)
        width = C if config.w_lin_per_variable else 1
        p["w_lin"] = Tensor(np.full(width, float(config.w_lin_init)))

    if config.use_revin and config.revin_affine:
        p["revin.scale"] = Tensor(np.ones(C))
        p["revin.shift"] = Tensor(np.zeros(C))

    return p


def param_count(config):
    """Closed-form parameter count; must equal the enumerated storage."""
    task = config.task
    d = config.token_width
    C = task.n_variables
    kind = config.attention_kind

    per_layer = 0
    if kind == "full":
        per_layer += 4 * d * d
    elif kind == "linear":
        per_layer += C * C
    elif kind == "mlp":
        per_layer += 2 * C * C
    if kind != "none":
        per_layer += 2 * d  # first layer norm
    per_layer += d * config.d_ff + config.d_ff + config.d_ff * d + d  # FFN
    per_layer += 2 * d  # second layer norm

    n = config.n_layers * per_layer
    if config.use_input_embedding:
        n += task.lookback * config.embed_dim + config.embed_dim
    if config.use_decoder_head:
        n += C * d                                   # query bank
        n += 2 * (4 * d * d)                         # self + cross attention
        n += d * config.d_ff + config.d_ff + config.d_ff * d + d
        n += 3 * (2 * d)                             # three layer norms
    n += d * task.horizon + task.horizon             # projection head
    if config.use_linear_branch:
        n += task.lookback * task.horizon + task.horizon
        n += C if config.w_lin_per_variable else 1   # blend weight
    if config.use_revin and config.revin_affine:
        n += 2 * C
    return n


# ---------------------------------------------------------------------------
# layers


def _denominator(config, n_keys):
    if config.scaling_mode == "sqrt_C":
        return float(np.sqrt(n_keys))
    return float(np.sqrt(config.token_width // config.resolved_heads))


def cross_variable_attention(h_q, h_kv, wq, wk, wv, wo, n_heads, denom,
                             capture=None):
    """Multi-head attention between variable tokens.

    h_q: (Cq, d) or (B, Cq, d); h_kv: (C, d) or (B, C, d). Per head, the
    head slice of the full Q/K/V projections attends with scores QKᵀ/denom;
    head outputs concatenate and pass through the output projection. With
    `capture` a list, the post-softmax (.., Cq, C) matrix of each head is
    appended to it.
    """
    d = wq.shape[0]
    if d % n_heads != 0:
        raise ConfigError(f"n_heads={n_heads} does not divide width {d}")
    dh = d // n_heads
    q = T.matmul(h_q, wq)
    k = T.matmul(h_kv, wk)
    v = T.matmul(h_kv, wv)
    outs = []
    for h in range(n_heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = T.slice_last(q, lo, hi)
        kh = T.slice_last(k, lo, hi)
        vh = T.slice_last(v, lo, hi)
        scores = T.mul_scalar(T.matmul(qh, T.transpose_2d(kh)), 1.0 / denom)
        attn = T.softmax_rows(scores)
        if capture is not None:
            capture.append(attn.data)
        outs.append(T.matmul(attn, vh))
    merged = outs[0] if len(outs) == 1 else T.concat_last(outs)
    return T.matmul(merged, wo)


def _ffn(x, p, prefix, activation):
    act = T.gelu if activation == "gelu" else T.relu
    hidden = act(T.add(T.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return T.add(T.matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def encoder_block(x, p, i, config, capture=None):
    """One post-norm block: LayerNorm(x + mix(x)) then LayerNorm(x + FFN(x)),
    where mix is multi-head attention or its configured replacement (the
    'none' kind drops the first sublayer entirely)."""
    kind = config.attention_kind
    eps = config.ln_eps
    if kind == "full":
        a = cross_variable_attention(
            x, x,
            p[f"enc.{i}.attn.wq"], p[f"enc.{i}.attn.wk"],
            p[f"enc.{i}.attn.wv"], p[f"enc.{i}.attn.wo"],
            config.resolved_heads,
            _denominator(config, config.task.n_variables),
            capture=capture)
    elif kind == "linear":
        a = T.matmul(p[f"enc.{i}.mix.w1"], x)
    elif kind == "mlp":
        act = T.gelu if config.activation == "gelu" else T.relu
        a = T.matmul(p[f"enc.{i}.mix.w2"], act(T.matmul(p[f"enc.{i}.mix.w1"], x)))
    else:
        a = None
    if a is not None:
        x = T.layer_norm(T.add(x, a), p[f"enc.{i}.ln1.gamma"],
                         p[f"enc.{i}.ln1.beta"], eps)
    f = _ffn(x, p, f"enc.{i}.ffn", config.activation)
    return T.layer_norm(T.add(x, f), p[f"enc.{i}.ln2.gamma"],
                        p[f"enc.{i}.ln2.beta"], eps)


def projection_head(x_enc, p):
    """Shared token-width -> horizon map, flipped back to (T, C)."""
    return T.transpose_2d(T.add(T.matmul(x_enc, p["proj.w"]), p["proj.b"]))


def linear_branch(h_norm_t, p):
    """Channel-independent L -> T affine on the flipped normalized window
    (same map for every variable row), flipped back to (T, C)."""
    return T.transpose_2d(T.add(T.matmul(h_norm_t, p["lin.w"]), p["lin.b"]))


def _decoder_head(enc_out, p, config, capture_self=None, capture_cross=None):
    """Decoder-style readout: a learned per-variable query bank runs
    self-attention, cross-attends to the encoder output, passes an FFN
    (post-norm residuals throughout), then the projection head."""
    eps = config.ln_eps
    heads = config.resolved_heads
    denom = _denominator(config, config.task.n_variables)
    bank = p["dec.bank"]
    a = cross_variable_attention(bank, bank,
                                 p["dec.self.wq"], p["dec.self.wk"],
                                 p["dec.self.wv"], p["dec.self.wo"],
                                 heads, denom, capture=capture_self)
    tgt = T.layer_norm(T.add(bank, a), p["dec.ln1.gamma"], p["dec.ln1.beta"], eps)
    c = cross_variable_attention(tgt, enc_out,
                                 p["dec.cross.wq"], p["dec.cross.wk"],
                                 p["dec.cross.wv"], p["dec.cross.wo"],
                                 heads, denom, capture=capture_cross)
    tgt = T.layer_norm(T.add(tgt, c), p["dec.ln2.gamma"], p["dec.ln2.beta"], eps)
    f = _ffn(tgt, p, "dec.ffn", config.activation)
    tgt = T.layer_norm(T.add(tgt, f), p["dec.ln3.gamma"], p["dec.ln3.beta"], eps)
    return projection_head(tgt, p)


def client_forward(x, p, config, capture_attention=None):
    """Full forward pass. x: (L, C) or (B, L, C) array or constant Tensor.
    Returns a Tensor shaped (T, C) / (B, T, C) still attached to the graph.

    capture_attention, when a dict, receives lists of post-softmax per-head
    matrices keyed by "enc.{i}" (and "dec.self"/"dec.cross" for the decoder
    variant).
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    batched = data.ndim == 3
    if not batched:
        if data.ndim != 2:
            raise ShapeError(f"client_forward input must be rank 2 or 3, got {data.shape}")
        data = data[None]
    task = config.task
    if data.shape[1] != task.lookback or data.shape[2] != task.n_variables:
        raise ShapeError(
            f"client_forward: input {data.shape[1:]} does not match task "
            f"(L={task.lookback}, C={task.n_variables})")

    state = None
    if config.use_revin:
        data, state = revin_encode(data, config.revin_eps)

    if config.use_revin and config.revin_affine:
        h0 = T.add(T.mul(Tensor(data, constant=True), p["revin.scale"]),
                   p["revin.shift"])
        h_t = T.transpose_2d(h0)
    else:
        h_t = Tensor(np.ascontiguousarray(np.swapaxes(data, 1, 2)), constant=True)

    h = h_t
    if config.use_input_embedding:
        h = T.add(T.matmul(h, p["embed.w"]), p["embed.b"])

    def cap(key):
        if capture_attention is None:
            return None
        return capture_attention.setdefault(key, [])

    for i in range(config.n_layers):
        h = encoder_block(h, p, i, config, capture=cap(f"enc.{i}"))

    if config.use_decoder_head:
        f_trans = _decoder_head(h, p, config,
                                capture_self=cap("dec.self"),
                                capture_cross=cap("dec.cross"))
    else:
        f_trans = projection_head(h, p)

    out = f_trans
    if config.use_linear_branch:
        f_lin = linear_branch(h_t, p)
        out = T.add(out, T.mul(p["w_lin"], f_lin))

    if config.use_revin:
        if config.revin_affine:
            out = T.mul(T.sub(out, p["revin.shift"]), T.reciprocal(p["revin.scale"]))
        out = T.add(T.mul(out, Tensor(state.std, constant=True)),
                    Tensor(state.mean, constant=True))

    if not batched:
        out = T.reshape(out, (task.horizon, task.n_variables))
    return out


class ClientModel:
    """A config plus its parameter dict, with forward/predict conveniences.

    Parameters are mutated only by the trainer; concurrent forwards over
    frozen parameters are safe.
    """

    def __init__(self, config, params):
        self.config = config
        self.params = params

    def forward(self, x, capture_attention=None):
        return client_forward(x, self.params, self.config, capture_attention)

    def predict(self, x):
        return self.forward(x).numpy()

    def parameter_count(self):
        """Enumerated parameter storage (the oracle for param_count)."""
        return sum(t.size for t in self.params.values())

    def zero_grads(self):
        T.zero_grads(self.params)

    def copy(self):
        return ClientModel(self.config, {
            name: Tensor(t.data.copy()) for name, t in self.params.items()
        })


def build_variant(config, seed=0):
    """Construct a model for the given (already variant-adjusted) config.
    Initialization is a pure function of (config, seed)."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return ClientModel(config, _init_params(config, rng))

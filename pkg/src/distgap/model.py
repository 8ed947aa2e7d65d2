"""Dense node-level graph transformer with hop-distance-biased attention.

Attention logits get an additive bias ``lambda_dist * (-r_ij)`` where r_ij
is the hop distance (unreachable pairs use diameter + 1 as a surrogate so
the model stays dense). The bias slope ``lambda_dist`` is a controlled
hyperparameter shared across layers and heads: it is never differentiated
or trained, only steered from outside.

Forward, reverse-mode gradients and the Adam update are written directly
in numpy (float64 throughout) so the whole training step is deterministic
and checkable against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError
from .graphgen import UNREACHABLE, DistanceMatrix, Graph
from .task import LabeledTask

LN_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LEARNING_RATE = 3e-4

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715

#: Attention record: array of shape (n_layers, n_heads, n, n); every row of
#: every (layer, head) slice is a softmax distribution over target nodes.
AttentionRecord = np.ndarray


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 32
    d_ff: int = 64
    lambda_dist_init: float = 0.0
    param_seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1 or self.n_heads < 1 or self.d_model < 1 or self.d_ff < 1:
            raise ParameterError("model sizes must be positive")
        if self.d_model % self.n_heads != 0:
            raise ParameterError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class ModelState:
    """Parameters, Adam moments and the current bias slope.

    ``params`` maps tensor names to float64 arrays; ``m``/``v`` hold the
    first/second Adam moments under the same keys. Only train_step advances
    ``step`` and the moments; only the controller moves ``lambda_dist``.
    """

    config: ModelConfig
    feature_dim: int
    params: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    lambda_dist: float = 0.0


@dataclass
class ForwardResult:
    logits: np.ndarray  # (n, 2)
    attention: AttentionRecord  # (L, H, n, n)
    cache: dict | None = None


def init_model(config: ModelConfig, feature_dim: int) -> ModelState:
    """Seeded parameter init. Weight matrices are N(0, 1/sqrt(fan_in));
    biases and layer-norm offsets start at zero, gains at one. Draw order
    is a fixed contract: input weight, then per layer (wq, wk, wv, wo,
    w1, w2), then readout weight."""
    rng = np.random.default_rng(config.param_seed)
    d, h = config.d_model, config.d_ff

    def w(shape, fan_in):
        return rng.normal(0.0, 1.0 / math.sqrt(fan_in), shape)

    params = {"in.w": w((feature_dim, d), feature_dim), "in.b": np.zeros(d)}
    for i in range(config.n_layers):
        p = f"l{i}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        params[p + "wq"] = w((d, d), d)
        params[p + "bq"] = np.zeros(d)
        params[p + "wk"] = w((d, d), d)
        params[p + "bk"] = np.zeros(d)
        params[p + "wv"] = w((d, d), d)
        params[p + "bv"] = np.zeros(d)
        params[p + "wo"] = w((d, d), d)
        params[p + "bo"] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "w1"] = w((d, h), d)
        params[p + "b1"] = np.zeros(h)
        params[p + "w2"] = w((h, d), h)
        params[p + "b2"] = np.zeros(d)
    params["final_ln.g"] = np.ones(d)
    params["final_ln.b"] = np.zeros(d)
    params["out.w"] = w((d, 2), d)
    params["out.b"] = np.zeros(2)

    return ModelState(
        config=config,
        feature_dim=feature_dim,
        params=params,
        m={k: np.zeros_like(a) for k, a in params.items()},
        v={k: np.zeros_like(a) for k, a in params.items()},
        step=0,
        lambda_dist=config.lambda_dist_init,
    )


def surrogate_hops(dm: DistanceMatrix) -> np.ndarray:
    """Hop distances as float with unreachable pairs mapped to diameter+1."""
    return np.where(dm.d == UNREACHABLE, dm.diameter + 1, dm.d).astype(np.float64)


def biased_logits(dots: np.ndarray, dm: DistanceMatrix, lam: float, d_head: int) -> np.ndarray:
    """Attention logits: scaled dot products plus lam * (-hops).

    ``dots`` may be (n, n) for one head or (H, n, n); the bias broadcasts.
    With lam == 0 the result equals the scaled dot products exactly.
    """
    if dots.shape[-1] != dm.n or dots.shape[-2] != dm.n:
        raise ParameterError("dot-product matrix and distance matrix disagree on n")
    out = dots / math.sqrt(d_head)
    if lam != 0.0:
        out = out + lam * (-surrogate_hops(dm))
    return out


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _gelu_forward(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(dy, x, t):
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _split_heads(x, n_heads):
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_finite(x, layer_index, stage):
    if not np.isfinite(x).all():
        raise NumericError(
            f"non-finite activation in {stage} (layer {layer_index})",
            layer_index=layer_index,
        )


def forward(g: Graph, dm: DistanceMatrix, state: ModelState) -> ForwardResult:
    """Pre-norm transformer over all n nodes; no masking, no dropout.

    Per layer: LN -> biased multi-head attention -> residual -> LN ->
    feed-forward (one GELU hidden layer) -> residual. A final LN feeds the
    two-class linear readout. Returns the per-layer/per-head attention
    matrices and the cache needed for the backward pass.
    """
    cfg = state.config
    p = state.params
    if g.features.shape[1] != state.feature_dim:
        raise ParameterError(
            f"feature dim {g.features.shape[1]} does not match model ({state.feature_dim})"
        )

    neg_hops = -surrogate_hops(dm)
    scale = 1.0 / math.sqrt(cfg.d_head)
    lam = state.lambda_dist

    x = g.features @ p["in.w"] + p["in.b"]
    _check_finite(x, -1, "input projection")

    attn_record = np.empty((cfg.n_layers, cfg.n_heads, g.n, g.n))
    layer_caches = []
    for i in range(cfg.n_layers):
        pre = f"l{i}."
        xn, ln1_cache = _ln_forward(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        q = xn @ p[pre + "wq"] + p[pre + "bq"]
        k = xn @ p[pre + "wk"] + p[pre + "bk"]
        v = xn @ p[pre + "wv"] + p[pre + "bv"]
        qh = _split_heads(q, cfg.n_heads)
        kh = _split_heads(k, cfg.n_heads)
        vh = _split_heads(v, cfg.n_heads)

        logits = qh @ kh.transpose(0, 2, 1) * scale
        if lam != 0.0:
            logits = logits + lam * neg_hops
        attn = _softmax_rows(logits)
        ctx = attn @ vh
        merged = _merge_heads(ctx)
        attn_out = merged @ p[pre + "wo"] + p[pre + "bo"]
        x_mid = x + attn_out
        _check_finite(x_mid, i, "attention block")

        yn, ln2_cache = _ln_forward(x_mid, p[pre + "ln2.g"], p[pre + "ln2.b"])
        h1 = yn @ p[pre + "w1"] + p[pre + "b1"]
        act, tanh_cache = _gelu_forward(h1)
        ff_out = act @ p[pre + "w2"] + p[pre + "b2"]
        x_out = x_mid + ff_out
        _check_finite(x_out, i, "feed-forward block")

        attn_record[i] = attn
        layer_caches.append({
            "x_in": x, "xn": xn, "ln1": ln1_cache,
            "qh": qh, "kh": kh, "vh": vh, "attn": attn, "merged": merged,
            "x_mid": x_mid, "yn": yn, "ln2": ln2_cache,
            "h1": h1, "tanh": tanh_cache, "act": act,
        })
        x = x_out

    yf, lnf_cache = _ln_forward(x, p["final_ln.g"], p["final_ln.b"])
    logits_out = yf @ p["out.w"] + p["out.b"]
    _check_finite(logits_out, cfg.n_layers, "readout")

    cache = {"features": g.features, "layers": layer_caches, "x_final": x,
             "yf": yf, "lnf": lnf_cache}
    return ForwardResult(logits=logits_out, attention=attn_record, cache=cache)


def _subset_indices(task: LabeledTask, subset: str) -> np.ndarray:
    if subset not in task.splits:
        raise ParameterError(f"unknown subset '{subset}'")
    idx = task.splits[subset]
    if len(idx) == 0:
        raise ParameterError(f"subset '{subset}' is empty")
    return idx


def subset_cross_entropy(logits: np.ndarray, task: LabeledTask, subset: str):
    """Mean softmax cross-entropy over the subset; also returns the
    loss gradient w.r.t. the full logits array (zero off-subset)."""
    idx = _subset_indices(task, subset)
    y = task.labels[idx].astype(np.int64)
    sub = logits[idx]
    mx = sub.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(sub - mx).sum(axis=1, keepdims=True))
    logp = sub - lse
    loss = float(-logp[np.arange(len(idx)), y].mean())

    probs = np.exp(logp)
    dsub = probs
    dsub[np.arange(len(idx)), y] -= 1.0
    dsub /= len(idx)
    dlogits = np.zeros_like(logits)
    dlogits[idx] = dsub
    return loss, dlogits


def loss_and_grads(fwd: ForwardResult, task: LabeledTask, subset: str,
                   state: ModelState) -> tuple[float, dict]:
    """Reverse-mode gradients of the subset cross-entropy for every
    parameter tensor. ``lambda_dist`` is deliberately absent from the
    result: the bias slope is actuated by the controller, not by descent."""
    if fwd.cache is None:
        raise ParameterError("forward result carries no cache; rerun forward()")
    cfg = state.config
    p = state.params
    cache = fwd.cache
    scale = 1.0 / math.sqrt(cfg.d_head)

    loss, dlogits = subset_cross_entropy(fwd.logits, task, subset)
    grads = {}

    yf = cache["yf"]
    grads["out.w"] = yf.T @ dlogits
    grads["out.b"] = dlogits.sum(axis=0)
    dyf = dlogits @ p["out.w"].T
    dx, grads["final_ln.g"], grads["final_ln.b"] = _ln_backward(
        dyf, p["final_ln.g"], cache["lnf"])

    for i in reversed(range(cfg.n_layers)):
        pre = f"l{i}."
        lc = cache["layers"][i]

        # feed-forward block (dx is the gradient at x_out = x_mid + ff_out)
        dff = dx
        grads[pre + "w2"] = lc["act"].T @ dff
        grads[pre + "b2"] = dff.sum(axis=0)
        dact = dff @ p[pre + "w2"].T
        dh1 = _gelu_backward(dact, lc["h1"], lc["tanh"])
        grads[pre + "w1"] = lc["yn"].T @ dh1
        grads[pre + "b1"] = dh1.sum(axis=0)
        dyn = dh1 @ p[pre + "w1"].T
        dx_ln2, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = _ln_backward(
            dyn, p[pre + "ln2.g"], lc["ln2"])
        dx_mid = dx + dx_ln2

        # attention block (dx_mid is the gradient at x_mid = x_in + attn_out)
        dattn_out = dx_mid
        grads[pre + "wo"] = lc["merged"].T @ dattn_out
        grads[pre + "bo"] = dattn_out.sum(axis=0)
        dmerged = dattn_out @ p[pre + "wo"].T
        dctx = _split_heads(dmerged, cfg.n_heads)
        attn = lc["attn"]
        dattn = dctx @ lc["vh"].transpose(0, 2, 1)
        dvh = attn.transpose(0, 2, 1) @ dctx
        dlog = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        ddots = dlog * scale
        dqh = ddots @ lc["kh"]
        dkh = ddots.transpose(0, 2, 1) @ lc["qh"]
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        xn = lc["xn"]
        grads[pre + "wq"] = xn.T @ dq
        grads[pre + "bq"] = dq.sum(axis=0)
        grads[pre + "wk"] = xn.T @ dk
        grads[pre + "bk"] = dk.sum(axis=0)
        grads[pre + "wv"] = xn.T @ dv
        grads[pre + "bv"] = dv.sum(axis=0)
        dxn = dq @ p[pre + "wq"].T + dk @ p[pre + "wk"].T + dv @ p[pre + "wv"].T
        dx_ln1, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = _ln_backward(
            dxn, p[pre + "ln1.g"], lc["ln1"])
        dx = dx_mid + dx_ln1

    grads["in.w"] = cache["features"].T @ dx
    grads["in.b"] = dx.sum(axis=0)
    return loss, grads


def train_step(state: ModelState, grads: dict,
               lr: float = DEFAULT_LEARNING_RATE) -> ModelState:
    """One Adam update with bias correction; returns a fresh state.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    lambda_dist passes through untouched.
    """
    missing = set(state.params) - set(grads)
    if missing:
        raise ParameterError(f"gradients missing for: {sorted(missing)}")
    t = state.step + 1
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in state.params.items():
        gr = grads[name]
        if gr.shape != theta.shape:
            raise ParameterError(f"gradient shape mismatch for '{name}'")
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * gr
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * gr * gr
        new_params[name] = theta - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    return ModelState(
        config=state.config,
        feature_dim=state.feature_dim,
        params=new_params,
        m=new_m,
        v=new_v,
        step=t,
        lambda_dist=state.lambda_dist,
    )


def evaluate(logits: np.ndarray, task: LabeledTask, subset: str) -> float:
    """Subset accuracy; argmax ties resolve to class 0."""
    idx = _subset_indices(task, subset)
    pred = (logits[idx, 1] > logits[idx, 0]).astype(np.int8)
    return float((pred == task.labels[idx]).mean())


def self_attention_mass(attn: AttentionRecord) -> float:
    """Mean diagonal attention mass, logged per run for inspection of the
    self-bias behavior (hops(i, i) = 0 gives the self logit no penalty)."""
    return float(attn.diagonal(axis1=-2, axis2=-1).mean())


# ---------------------------------------------------------------------------
# Checkpoints: named tensors + step counter + lambda in one npz archive
# ---------------------------------------------------------------------------

def save_checkpoint(path, state: ModelState) -> None:
    arrays = {"step": np.int64(state.step),
              "lambda_dist": np.float64(state.lambda_dist),
              "feature_dim": np.int64(state.feature_dim)}
    cfg = state.config
    arrays["cfg"] = np.array(
        [cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_ff, cfg.param_seed],
        dtype=np.int64,
    )
    arrays["cfg_lambda_init"] = np.float64(cfg.lambda_dist_init)
    for name, a in state.params.items():
        arrays["p:" + name] = a
        arrays["m:" + name] = state.m[name]
        arrays["v:" + name] = state.v[name]
    np.savez(path, **arrays)


def load_checkpoint(path) -> ModelState:
    with np.load(path) as data:
        cfg_vec = data["cfg"]
        config = ModelConfig(
            n_layers=int(cfg_vec[0]),
            n_heads=int(cfg_vec[1]),
            d_model=int(cfg_vec[2]),
            d_ff=int(cfg_vec[3]),
            lambda_dist_init=float(data["cfg_lambda_init"]),
            param_seed=int(cfg_vec[4]),
        )
        params, m, v = {}, {}, {}
        for key in data.files:
            if key.startswith("p:"):
                params[key[2:]] = data[key]
            elif key.startswith("m:"):
                m[key[2:]] = data[key]
            elif key.startswith("v:"):
                v[key[2:]] = data[key]
        return ModelState(
            config=config,
            feature_dim=int(data["feature_dim"]),
            params=params,
            m=m,
            v=v,
            step=int(data["step"]),
            lambda_dist=float(data["lambda_dist"]),
        )

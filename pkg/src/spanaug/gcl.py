"""Desk-scale graph contrastive learning with hand-written backpropagation.

The encoder is a stack of graph convolutions (GCN or GIN propagation, ReLU
between layers, linear last layer); the readout pools node representations
and applies one linear map. Training maximizes a cross-level InfoNCE
estimate between node representations of one view and the graph summary
of the other.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentationScheme, sample_view
from .graph import DEGREE_FLOOR, Graph

log = logging.getLogger(__name__)

NEGATIVE_MODES = ("same", "other", "corrupt")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class EncoderState:
    layer_weights: list[np.ndarray]
    conv_kind: str = "gcn"
    gin_epsilon: float = 0.0

    def __post_init__(self):
        if self.conv_kind not in ("gcn", "gin"):
            raise ValueError(f"conv_kind must be 'gcn' or 'gin', got {self.conv_kind!r}")
        for a, b in zip(self.layer_weights, self.layer_weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} then {b.shape}")

    @property
    def out_dim(self) -> int:
        return self.layer_weights[-1].shape[1]


@dataclass
class ReadoutState:
    proj: np.ndarray
    pool: str = "mean"

    def __post_init__(self):
        if self.pool not in ("mean", "sum"):
            raise ValueError(f"pool must be 'mean' or 'sum', got {self.pool!r}")


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.01
    feature_mask_ratio: float = 0.0
    seed: int = 0
    batch_size: int | None = None
    hidden_dim: int = 32
    layers: int = 2
    conv_kind: str = "gcn"
    gin_epsilon: float = 0.0
    pool: str | None = None
    optimizer: str = "gd"
    negatives: str = "corrupt"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0 <= self.feature_mask_ratio < 1:
            raise ValueError("feature_mask_ratio must lie in [0, 1)")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError("optimizer must be 'gd' or 'adam'")
        if self.negatives not in NEGATIVE_MODES:
            raise ValueError(f"negatives must be one of {NEGATIVE_MODES}")


def init_encoder(d_in: int, hidden: int, layers: int, conv_kind: str = "gcn", gin_epsilon: float = 0.0,
                 seed: int = 0) -> EncoderState:
    rng = np.random.default_rng(seed)
    dims = [d_in] + [hidden] * layers
    ws = [rng.uniform(-1, 1, (a, b)) / np.sqrt(a) for a, b in zip(dims, dims[1:])]
    return EncoderState(ws, conv_kind, gin_epsilon)


def init_readout(dim: int, pool: str = "mean", seed: int = 0) -> ReadoutState:
    rng = np.random.default_rng(seed)
    return ReadoutState(rng.uniform(-1, 1, (dim, dim)) / np.sqrt(dim), pool)


# ---------------------------------------------------------------- forward


def propagation_matrix(a: np.ndarray, conv_kind: str, gin_epsilon: float = 0.0) -> np.ndarray:
    """GCN: D̃^{-1/2}(A + I)D̃^{-1/2}.  GIN: (1 + ε)I + D^{-1/2} A D^{-1/2}."""
    n = a.shape[0]
    if conv_kind == "gcn":
        at = a + np.eye(n)
        s = 1.0 / np.sqrt(at.sum(axis=1))
        return s[:, None] * at * s[None, :]
    s = 1.0 / np.sqrt(np.maximum(a.sum(axis=1), DEGREE_FLOOR))
    return (1.0 + gin_epsilon) * np.eye(n) + s[:, None] * a * s[None, :]


def _encode(p: np.ndarray, x: np.ndarray, enc: EncoderState):
    h = x
    cache = []
    last = len(enc.layer_weights) - 1
    for l, w in enumerate(enc.layer_weights):
        if h.shape[1] != w.shape[0]:
            raise ValueError(f"layer {l} expects {w.shape[0]} inputs, got {h.shape[1]}")
        ph = p @ h
        z = ph @ w
        cache.append((ph, z))
        h = z if l == last else np.maximum(z, 0.0)
    return h, cache


def _encode_backward(p, enc, cache, dh):
    grads = [None] * len(enc.layer_weights)
    last = len(enc.layer_weights) - 1
    for l in range(last, -1, -1):
        ph, z = cache[l]
        dz = dh if l == last else dh * (z > 0)
        grads[l] = ph.T @ dz
        if l:
            dh = p.T @ (dz @ enc.layer_weights[l].T)
    return grads


def gcn_forward(g: Graph, x: np.ndarray, enc: EncoderState) -> np.ndarray:
    if enc.conv_kind != "gcn":
        raise ValueError("encoder is not a GCN")
    return _encode(propagation_matrix(g.adjacency, "gcn"), x, enc)[0]


def gin_forward(g: Graph, x: np.ndarray, enc: EncoderState) -> np.ndarray:
    if enc.conv_kind != "gin":
        raise ValueError("encoder is not a GIN")
    return _encode(propagation_matrix(g.adjacency, "gin", enc.gin_epsilon), x, enc)[0]


def encode(g: Graph, x: np.ndarray, enc: EncoderState) -> np.ndarray:
    return _encode(propagation_matrix(g.adjacency, enc.conv_kind, enc.gin_epsilon), x, enc)[0]


def pool(h: np.ndarray, kind: str) -> np.ndarray:
    if h.shape[0] == 0:
        raise ValueError("cannot pool an empty graph")
    return h.mean(axis=0) if kind == "mean" else h.sum(axis=0)


def readout(h: np.ndarray, r: ReadoutState) -> np.ndarray:
    return r.proj @ pool(h, r.pool)


def feature_mask(x: np.ndarray, sigma_f: float, seed) -> np.ndarray:
    """Zero round(σ_f·d) randomly chosen feature columns (same columns for every node)."""
    if not 0 <= sigma_f < 1:
        raise ValueError("sigma_f must lie in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = x.shape[1]
    k = int(round(sigma_f * d))
    if k == 0:
        return x.copy()
    out = x.copy()
    out[:, rng.choice(d, size=k, replace=False)] = 0.0
    return out


# ---------------------------------------------------------------- objective


def _cosines(h: np.ndarray, z: np.ndarray):
    """Row-wise cos(h_i, z); zero-norm vectors give cosine 0."""
    hn = np.linalg.norm(h, axis=1)
    zn = np.linalg.norm(z)
    if zn == 0 or np.any(hn == 0):
        warnings.warn("zero-norm representation; cosine taken as 0", RuntimeWarning, stacklevel=3)
    denom = hn * zn
    # only exact zeros take the cosine-0 path; NaN must propagate so divergence is caught
    live = denom != 0
    safe = np.where(live, denom, 1.0)
    cos = np.where(live, (h @ z) / safe, 0.0)
    return cos, hn, zn, safe


def _cosine_backward(h, z, cos, hn, zn, safe, dcos):
    live = (hn != 0) & (zn != 0)
    w = np.where(live, dcos, 0.0)
    hn2 = np.where(hn != 0, hn ** 2, 1.0)
    dh = (w / safe)[:, None] * z[None, :] - (w * cos / hn2)[:, None] * h
    dz = (w / safe) @ h - (w * cos).sum() * z / (zn ** 2 if zn != 0 else 1.0)
    return dh, dz


def _logsumexp(v):
    m = v.max()
    return m + np.log(np.exp(v - m).sum())


def infonce_mi(h_i: np.ndarray, z: np.ndarray, negatives: np.ndarray) -> float:
    """log[exp(cos(h_i, z)) / Σ_j exp(cos(negatives_j, z))]."""
    pos, *_ = _cosines(np.atleast_2d(h_i), z)
    neg, *_ = _cosines(np.atleast_2d(negatives), z)
    return float(pos[0] - _logsumexp(neg))


@dataclass
class _View:
    p: np.ndarray
    x: np.ndarray
    h: np.ndarray = None
    cache: list = None
    neg_x: np.ndarray | None = None
    neg_h: np.ndarray | None = None
    neg_cache: list | None = None
    pooled: np.ndarray = None
    z: np.ndarray = None


def _forward_views(views, enc, r, negatives, rng):
    for v in views:
        v.h, v.cache = _encode(v.p, v.x, enc)
        v.pooled = pool(v.h, r.pool)
        v.z = r.proj @ v.pooled
        if negatives == "corrupt":
            v.neg_x = v.x[rng.permutation(v.x.shape[0])]
            v.neg_h, v.neg_cache = _encode(v.p, v.neg_x, enc)


def _loss_and_grads(batch, enc, r, negatives, with_grad=True):
    """batch: list of (view1, view2) per graph, already forwarded."""
    n_graphs = len(batch)
    total = 0.0
    dh = {}
    dneg = {}
    dz = {}
    for gi, pair in enumerate(batch):
        for a in (0, 1):
            dh[gi, a] = np.zeros_like(pair[a].h)
            dz[gi, a] = np.zeros_like(pair[a].z)
            if negatives == "corrupt":
                dneg[gi, a] = np.zeros_like(pair[a].neg_h)
    for gi, pair in enumerate(batch):
        for a, b in ((0, 1), (1, 0)):
            va, vb = pair[a], pair[b]
            n = va.h.shape[0]
            scale = 1.0 / (n * n_graphs)
            # negatives pooled over every graph of the batch
            if negatives == "same":
                srcs = [(gj, a, batch[gj][a].h) for gj in range(n_graphs)]
            elif negatives == "other":
                srcs = [(gj, b, batch[gj][b].h) for gj in range(n_graphs)]
            else:
                srcs = [(gj, a, batch[gj][a].neg_h) for gj in range(n_graphs)]
            neg_h = np.vstack([s[2] for s in srcs])
            pos_cos, hn, zn, safe = _cosines(va.h, vb.z)
            neg_cos, nhn, _, nsafe = _cosines(neg_h, vb.z)
            lse = _logsumexp(neg_cos)
            total -= scale * (pos_cos.sum() - n * lse)
            if not with_grad:
                continue
            dpos = -scale * np.ones(n)
            soft = np.exp(neg_cos - lse)
            dnegc = scale * n * soft
            g_h, g_z1 = _cosine_backward(va.h, vb.z, pos_cos, hn, zn, safe, dpos)
            g_nh, g_z2 = _cosine_backward(neg_h, vb.z, neg_cos, nhn, zn, nsafe, dnegc)
            dh[gi, a] += g_h
            dz[gi, b] += g_z1 + g_z2
            off = 0
            for gj, view, block in srcs:
                seg = g_nh[off:off + len(block)]
                off += len(block)
                if negatives == "corrupt":
                    dneg[gj, view] += seg
                else:
                    dh[gj, view] += seg
    if not with_grad:
        return total, None, None
    gw = [np.zeros_like(w) for w in enc.layer_weights]
    gproj = np.zeros_like(r.proj)
    for gi, pair in enumerate(batch):
        for a in (0, 1):
            v = pair[a]
            gproj += np.outer(dz[gi, a], v.pooled)
            dpool = r.proj.T @ dz[gi, a]
            dhv = dh[gi, a] + (dpool[None, :] / v.h.shape[0] if r.pool == "mean" else dpool[None, :])
            for acc, gr in zip(gw, _encode_backward(v.p, enc, v.cache, dhv)):
                acc += gr
            if negatives == "corrupt":
                for acc, gr in zip(gw, _encode_backward(v.p, enc, v.neg_cache, dneg[gi, a])):
                    acc += gr
    return total, gw, gproj


def _make_views(pairs, enc, x_pairs):
    batch = []
    for (g1, g2), (x1, x2) in zip(pairs, x_pairs):
        batch.append([_View(propagation_matrix(g1.adjacency, enc.conv_kind, enc.gin_epsilon), x1),
                      _View(propagation_matrix(g2.adjacency, enc.conv_kind, enc.gin_epsilon), x2)])
    return batch


def gcl_loss(views, x_views, enc: EncoderState, r: ReadoutState, negatives: str = "same",
             seed: int = 0) -> float:
    """Cross-level InfoNCE loss for one graph (``views`` a pair) or a batch (list of pairs).

    −mean over graphs of (1/n)Σ_i [I(H¹_i, z²) + I(H²_i, z¹)].
    """
    pairs, x_pairs = ([views], [x_views]) if isinstance(views[0], Graph) else (views, x_views)
    batch = _make_views(pairs, enc, x_pairs)
    _forward_views([v for pr in batch for v in pr], enc, r, negatives, np.random.default_rng(seed))
    return _loss_and_grads(batch, enc, r, negatives, with_grad=False)[0]


def gcl_loss_and_grad(views, x_views, enc: EncoderState, r: ReadoutState, negatives: str = "same",
                      seed: int = 0):
    """Loss plus gradients (list per encoder layer, readout projection)."""
    pairs, x_pairs = ([views], [x_views]) if isinstance(views[0], Graph) else (views, x_views)
    batch = _make_views(pairs, enc, x_pairs)
    _forward_views([v for pr in batch for v in pr], enc, r, negatives, np.random.default_rng(seed))
    return _loss_and_grads(batch, enc, r, negatives)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    encoder: EncoderState
    readout: ReadoutState
    losses: list[float]
    opt_state: dict = field(default_factory=dict)
    epochs_done: int = 0


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch]))


def _params(enc, r):
    return list(enc.layer_weights) + [r.proj]


def train(gs: list[Graph], schemes: list[AugmentationScheme], cfg: TrainConfig,
          enc: EncoderState | None = None, r: ReadoutState | None = None,
          resume: TrainResult | None = None) -> TrainResult:
    """Two-branch contrastive training; views are resampled from each graph's scheme every epoch.

    Randomness for epoch ``t`` comes from SeedSequence([seed, t]), so resuming
    from a checkpoint continues the exact same trajectory.
    """
    if len(gs) != len(schemes):
        raise ValueError("need one scheme per graph")
    feats = [g.features for g in gs]
    if any(f is None for f in feats):
        raise ValueError("every graph needs node features")
    pool_kind = cfg.pool or ("mean" if len(gs) == 1 else "sum")
    if resume is not None:
        enc, r = resume.encoder, resume.readout
        losses, opt_state, start = list(resume.losses), dict(resume.opt_state), resume.epochs_done
    else:
        enc = enc or init_encoder(feats[0].shape[1], cfg.hidden_dim, cfg.layers, cfg.conv_kind,
                                  cfg.gin_epsilon, cfg.seed)
        r = r or init_readout(enc.out_dim, pool_kind, cfg.seed + 1)
        losses, opt_state, start = [], {}, 0
    params = [p.copy() for p in _params(enc, r)]
    enc = EncoderState(params[:-1], enc.conv_kind, enc.gin_epsilon)
    r = ReadoutState(params[-1], r.pool)
    if cfg.optimizer == "adam" and not opt_state:
        opt_state = {"m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params], "t": 0}
    bs = cfg.batch_size or len(gs)
    for epoch in range(start, cfg.epochs):
        rng = _epoch_rng(cfg.seed, epoch)
        order = rng.permutation(len(gs)) if bs < len(gs) else np.arange(len(gs))
        idx = order[:bs]
        pairs, xs = [], []
        for l in idx:
            g, s = gs[l], schemes[l]
            d2 = s.delta2 if s.delta2 is not None else np.zeros_like(s.delta1)
            v1 = sample_view(g, s.delta1, rng)
            v2 = sample_view(g, d2, rng)
            pairs.append((v1, v2))
            xs.append((feature_mask(feats[l], cfg.feature_mask_ratio, rng),
                       feature_mask(feats[l], cfg.feature_mask_ratio, rng)))
        batch = _make_views(pairs, enc, xs)
        _forward_views([v for pr in batch for v in pr], enc, r, cfg.negatives, rng)
        loss, gw, gproj = _loss_and_grads(batch, enc, r, cfg.negatives)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at epoch {epoch}; "
                                   f"max |weight| = {max(np.abs(p).max() for p in params):.3g}")
        losses.append(float(loss))
        grads = gw + [gproj]
        if cfg.optimizer == "gd":
            for p, gr in zip(params, grads):
                p -= cfg.lr * gr
        else:
            opt_state["t"] += 1
            t = opt_state["t"]
            for p, gr, m, v in zip(params, grads, opt_state["m"], opt_state["v"]):
                m *= 0.9
                m += 0.1 * gr
                v *= 0.999
                v += 0.001 * gr ** 2
                p -= cfg.lr * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    return TrainResult(enc, r, losses, opt_state, cfg.epochs)


# ---------------------------------------------------------------- checkpoints


def _arr(a):
    return {"shape": list(a.shape), "data": [float(v) for v in np.ravel(a)]}


def _unarr(d):
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(res: TrainResult, cfg: TrainConfig) -> str:
    payload = {
        "conv_kind": res.encoder.conv_kind,
        "gin_epsilon": res.encoder.gin_epsilon,
        "pool": res.readout.pool,
        "layers": [_arr(w) for w in res.encoder.layer_weights],
        "proj": _arr(res.readout.proj),
        "losses": res.losses,
        "epochs_done": res.epochs_done,
        "config": cfg.__dict__,
    }
    if res.opt_state:
        payload["opt_state"] = {"t": res.opt_state["t"], "m": [_arr(a) for a in res.opt_state["m"]],
                                "v": [_arr(a) for a in res.opt_state["v"]]}
    # json writes floats with repr, which round-trips 64-bit values exactly
    return json.dumps(payload)


def load_checkpoint(text: str) -> tuple[TrainResult, TrainConfig]:
    d = json.loads(text)
    enc = EncoderState([_unarr(w) for w in d["layers"]], d["conv_kind"], d["gin_epsilon"])
    r = ReadoutState(_unarr(d["proj"]), d["pool"])
    opt = {}
    if "opt_state" in d:
        o = d["opt_state"]
        opt = {"t": o["t"], "m": [_unarr(a) for a in o["m"]], "v": [_unarr(a) for a in o["v"]]}
    return TrainResult(enc, r, d["losses"], opt, d["epochs_done"]), TrainConfig(**d["config"])


# ---------------------------------------------------------------- probes


@dataclass
class ProbeResult:
    score: float
    l2_weight: float
    val_score: float
    metric: str


L2_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)


def split_indices(n: int, split_seed: int):
    perm = np.random.default_rng(split_seed).permutation(n)
    n_tr, n_va = int(round(0.6 * n)), int(round(0.2 * n))
    return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]


def _standardize(x, train):
    mu = x[train].mean(axis=0)
    sd = x[train].std(axis=0)
    return (x - mu) / np.where(sd > 1e-12, sd, 1.0)


def _fit_logistic(x, y, k, l2, max_iter=5000, tol=1e-6):
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    onehot = np.eye(k)[y]
    # softmax cross-entropy curvature is at most 1/2 per sample
    lip = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
    step = 1.0 / lip
    w = np.zeros((d + 1, k))
    reg = np.ones((d + 1, 1))
    reg[-1] = 0.0
    for _ in range(max_iter):
        logits = xb @ w
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = xb.T @ (p - onehot) / n + l2 * reg * w
        if np.linalg.norm(grad) < tol:
            break
        w -= step * grad
    return w


def _predict(x, w):
    return np.argmax(np.hstack([x, np.ones((len(x), 1))]) @ w, axis=1)


def linear_probe(h: np.ndarray, labels, l2_weight: float | None = None, split_seed: int = 0) -> ProbeResult:
    """Multinomial logistic regression on frozen representations; test accuracy.

    60/20/20 split; with ``l2_weight`` None the weight is chosen on the
    validation split from ``L2_GRID``.
    """
    labels = np.asarray(labels)
    classes, y = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes")
    tr, va, te = split_indices(len(y), split_seed)
    if len(np.unique(y[tr])) < 2:
        raise ValueError("training split holds a single class")
    x = _standardize(np.asarray(h, dtype=np.float64), tr)
    grid = L2_GRID if l2_weight is None else (l2_weight,)
    best = None
    for l2 in grid:
        w = _fit_logistic(x[tr], y[tr], len(classes), l2)
        acc = float(np.mean(_predict(x[va], w) == y[va])) if len(va) else 0.0
        if best is None or acc > best[0]:
            best = (acc, l2, w)
    acc_val, l2, w = best
    test = float(np.mean(_predict(x[te], w) == y[te]))
    return ProbeResult(test, l2, acc_val, "accuracy")


def _fit_ridge(x, y, l2):
    mu, ym = x.mean(axis=0), y.mean()
    xc = x - mu
    w = np.linalg.solve(xc.T @ xc + l2 * np.eye(x.shape[1]), xc.T @ (y - ym))
    return w, ym - mu @ w


def ridge_probe(h: np.ndarray, targets, l2_weight: float | None = None, split_seed: int = 0) -> ProbeResult:
    """Closed-form ridge regression with an unpenalized intercept; test RMSE."""
    y = np.asarray(targets, dtype=np.float64)
    x = np.asarray(h, dtype=np.float64)
    tr, va, te = split_indices(len(y), split_seed)
    grid = L2_GRID if l2_weight is None else (l2_weight,)
    best = None
    for l2 in grid:
        w, b = _fit_ridge(x[tr], y[tr], l2)
        rmse = float(np.sqrt(np.mean((x[va] @ w + b - y[va]) ** 2))) if len(va) else 0.0
        if best is None or rmse < best[0]:
            best = (rmse, l2, w, b)
    rmse_val, l2, w, b = best
    test = float(np.sqrt(np.mean((x[te] @ w + b - y[te]) ** 2)))
    return ProbeResult(test, l2, rmse_val, "rmse")

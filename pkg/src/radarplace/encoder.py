"""Spatial-temporal place descriptor network, written directly in numpy.

Architecture: per-image spatial encoder of conv(3x3, stride 1, zero pad 1) ->
ReLU -> max-pool blocks, flattened and L2-normalized; a single-layer LSTM over
the per-frame descriptors whose final hidden state, L2-normalized again, is
the place descriptor. Trained with a hinge triplet loss over one query, its
best positive and k hard negatives.

Forward and backward passes are hand-written so the whole gradient can be
checked against central finite differences (see tests); training runs in f32,
gradient checks in f64.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

L2_EPS = 1e-12


@dataclass
class EncoderConfig:
    image_size: int = 200
    conv_channels: tuple[int, ...] = (16, 32, 32, 32)
    pool_specs: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (2, 2), (3, 3))
    sequence_length: int = 3   # trailing frames fed to the temporal encoder
    temporal: bool = True
    weight_init_seed: int = 0
    dtype: str = "f32"         # "f32" for training, "f64" for gradient checks

    def __post_init__(self):
        if len(self.conv_channels) != len(self.pool_specs):
            raise ValueError("conv_channels and pool_specs must have equal length")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")
        if self.dtype not in ("f32", "f64"):
            raise ValueError("dtype must be 'f32' or 'f64'")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    @property
    def feature_map_side(self) -> int:
        side = self.image_size
        for k, s in self.pool_specs:
            side = (side - k) // s + 1
            if side < 1:
                raise ValueError("pooling reduces the feature map below 1x1")
        return side

    @property
    def descriptor_dim(self) -> int:
        side = self.feature_map_side
        return self.conv_channels[-1] * side * side


# Desk-scale profile: trains on a commodity CPU in minutes.
DESK_CONFIG = EncoderConfig(
    image_size=64,
    conv_channels=(8, 16, 16),
    pool_specs=((2, 2), (2, 2), (3, 3)),
    sequence_length=3,
)


def init_params(config: EncoderConfig) -> dict[str, np.ndarray]:
    """Uniform(-s, s) weights with s = 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(config.weight_init_seed)
    dt = config.np_dtype
    params: dict[str, np.ndarray] = {}
    c_in = 1
    for i, c_out in enumerate(config.conv_channels):
        s = 1.0 / math.sqrt(c_in * 9)
        params[f"conv{i}.W"] = rng.uniform(-s, s, size=(c_out, c_in, 3, 3)).astype(dt)
        params[f"conv{i}.b"] = np.zeros(c_out, dtype=dt)
        c_in = c_out
    if config.temporal:
        d = config.descriptor_dim
        sx = 1.0 / math.sqrt(d)
        params["lstm.Wx"] = rng.uniform(-sx, sx, size=(d, 4 * d)).astype(dt)
        params["lstm.Wh"] = rng.uniform(-sx, sx, size=(d, 4 * d)).astype(dt)
        params["lstm.b"] = np.zeros(4 * d, dtype=dt)
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --------------------------------------------------------------------------
# Layer primitives
# --------------------------------------------------------------------------

def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 convolution, stride 1, zero padding 1. x: (N, C, H, W)."""
    n, c, h, wd = x.shape
    co = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    st = xp.strides
    win = as_strided(xp, (n, h, wd, c, 3, 3), (st[0], st[2], st[3], st[1], st[2], st[3]))
    cols = win.reshape(n, h * wd, c * 9)
    out = cols @ w.reshape(co, c * 9).T
    out += b
    out = out.transpose(0, 2, 1).reshape(n, co, h, wd)
    return out, (xp, cols)


def conv3x3_backward(dout: np.ndarray, cache, w: np.ndarray):
    xp, cols = cache
    n, _, h, wd = dout.shape
    c = w.shape[1]
    co = w.shape[0]
    dr = dout.reshape(n, co, h * wd).transpose(0, 2, 1)       # (N, HW, Co)
    dw = np.einsum("nio,nij->oj", dr, cols).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = dr @ w.reshape(co, c * 9)                          # (N, HW, C*9)
    dc = dcols.reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += dc[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:h + 1, 1:wd + 1], dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def maxpool_forward(x: np.ndarray, k: int, s: int):
    """Max pooling with floor output size; ties go to the first (row-major) cell."""
    n, c, h, w = x.shape
    ho = (h - k) // s + 1
    wo = (w - k) // s + 1
    st = x.strides
    win = as_strided(x, (n, c, ho, wo, k, k),
                     (st[0], st[1], st[2] * s, st[3] * s, st[2], st[3]))
    flat = win.reshape(n, c, ho, wo, k * k)
    am = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, am[..., None], axis=-1)[..., 0]
    return out, (x.shape, k, s, am)


def maxpool_backward(dout: np.ndarray, cache) -> np.ndarray:
    shape, k, s, am = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    ni, ci, hi, wi = np.indices(am.shape)
    h = hi * s + am // k
    w = wi * s + am % k
    np.add.at(dx, (ni, ci, h, w), dout)
    return dx


def l2_normalize(v: np.ndarray):
    """Row-wise L2 normalization with a small-norm guard.

    Rows with norm < 1e-12 are returned unscaled and flagged degenerate.
    """
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    degenerate = norm[..., 0] < L2_EPS
    safe = np.where(norm < L2_EPS, 1.0, norm)
    y = v / safe
    return y, (y, safe, degenerate)


def l2_normalize_backward(dout: np.ndarray, cache) -> np.ndarray:
    y, safe, degenerate = cache
    dv = (dout - (dout * y).sum(axis=-1, keepdims=True) * y) / safe
    if degenerate.any():
        dv[degenerate] = dout[degenerate]
    return dv


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_forward(xs: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """Single-layer LSTM from zero state. xs: (L, N, D) -> final hidden (N, H)."""
    l, n, _ = xs.shape
    hdim = wh.shape[0]
    h = np.zeros((n, hdim), dtype=xs.dtype)
    c = np.zeros((n, hdim), dtype=xs.dtype)
    steps = []
    for t in range(l):
        z = xs[t] @ wx + h @ wh + b
        i = _sigmoid(z[:, :hdim])
        f = _sigmoid(z[:, hdim:2 * hdim])
        g = np.tanh(z[:, 2 * hdim:3 * hdim])
        o = _sigmoid(z[:, 3 * hdim:])
        c_next = f * c + i * g
        h_next = o * np.tanh(c_next)
        steps.append((xs[t], h, c, i, f, g, o, c_next))
        h, c = h_next, c_next
    return h, steps


def lstm_backward(dh_last: np.ndarray, steps, wx: np.ndarray, wh: np.ndarray):
    l = len(steps)
    hdim = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hdim, dtype=wx.dtype)
    dxs = [None] * l
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for t in reversed(range(l)):
        x, h_prev, c_prev, i, f, g, o, c = steps[t]
        tc = np.tanh(c)
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_prev = dc * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
            axis=1,
        )
        dwx += x.T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dxs[t] = dz @ wx.T
        dh = dz @ wh.T
        dc = dc_prev
    return np.stack(dxs), dwx, dwh, db


# --------------------------------------------------------------------------
# Spatial / temporal encoder
# --------------------------------------------------------------------------

def spatial_forward_batch(images: np.ndarray, params: dict, config: EncoderConfig):
    """images: (N, S, S) -> (feature_map (N, C, H, W), descriptors (N, D), cache)."""
    x = images[:, None, :, :].astype(config.np_dtype)
    caches = []
    for i in range(len(config.conv_channels)):
        w, b = params[f"conv{i}.W"], params[f"conv{i}.b"]
        x, cc = conv3x3_forward(x, w, b)
        x, rc = relu_forward(x)
        k, s = config.pool_specs[i]
        x, pc = maxpool_forward(x, k, s)
        caches.append((cc, rc, pc))
    feature_map = x
    flat = x.reshape(x.shape[0], -1)
    desc, nc = l2_normalize(flat)
    return feature_map, desc, (caches, feature_map.shape, nc)


def spatial_backward_batch(ddesc: np.ndarray, cache, params: dict,
                           config: EncoderConfig, grads: dict) -> None:
    """Accumulate gradients of the conv blocks into `grads`."""
    caches, fmap_shape, nc = cache
    dx = l2_normalize_backward(ddesc, nc).reshape(fmap_shape)
    for i in reversed(range(len(config.conv_channels))):
        cc, rc, pc = caches[i]
        dx = maxpool_backward(dx, pc)
        dx = relu_backward(dx, rc)
        dx, dw, db = conv3x3_backward(dx, cc, params[f"conv{i}.W"])
        grads[f"conv{i}.W"] += dw
        grads[f"conv{i}.b"] += db


def spatial_forward(image, params: dict, config: EncoderConfig):
    """Single image (array or RadarImage) -> (feature_map, unit-norm descriptor)."""
    grid = getattr(image, "grid", image)
    grid = np.asarray(grid)
    if grid.shape != (config.image_size, config.image_size):
        raise ValueError(
            f"image shape {grid.shape} does not match config size {config.image_size}")
    fmap, desc, _ = spatial_forward_batch(grid[None], params, config)
    return fmap[0], desc[0]


def temporal_forward(descriptor_sequence, params: dict) -> np.ndarray:
    """LSTM over L descriptors; the final hidden state is L2-normalized."""
    xs = np.stack([np.asarray(d) for d in descriptor_sequence])[:, None, :]
    h, _ = lstm_forward(xs, params["lstm.Wx"], params["lstm.Wh"], params["lstm.b"])
    out, _ = l2_normalize(h)
    return out[0]


def describe_sequences(seqs: np.ndarray, params: dict, config: EncoderConfig):
    """seqs: (B, L, S, S) image sequences -> (place descriptors (B, D), cache)."""
    b, l, s, _ = seqs.shape
    images = seqs.reshape(b * l, s, s)
    _, descs, sp_cache = spatial_forward_batch(images, params, config)
    if not config.temporal:
        if l != 1:
            raise ValueError("non-temporal encoder expects sequence_length 1")
        return descs, ("spatial", sp_cache, b, l)
    xs = descs.reshape(b, l, -1).transpose(1, 0, 2)           # (L, B, D)
    h, steps = lstm_forward(xs, params["lstm.Wx"], params["lstm.Wh"], params["lstm.b"])
    out, nc = l2_normalize(h)
    return out, ("temporal", sp_cache, b, l, steps, nc)


def describe_backward(dout: np.ndarray, cache, params: dict,
                      config: EncoderConfig, grads: dict) -> None:
    kind = cache[0]
    if kind == "spatial":
        _, sp_cache, b, l = cache
        spatial_backward_batch(dout, sp_cache, params, config, grads)
        return
    _, sp_cache, b, l, steps, nc = cache
    dh = l2_normalize_backward(dout, nc)
    dxs, dwx, dwh, db = lstm_backward(dh, steps, params["lstm.Wx"], params["lstm.Wh"])
    grads["lstm.Wx"] += dwx
    grads["lstm.Wh"] += dwh
    grads["lstm.b"] += db
    ddescs = dxs.transpose(1, 0, 2).reshape(b * l, -1)
    spatial_backward_batch(ddescs, sp_cache, params, config, grads)


# --------------------------------------------------------------------------
# Triplet loss
# --------------------------------------------------------------------------

def triplet_loss(query, positive, negatives, margin: float = 0.1) -> float:
    """Sum over negatives of max(d_E(q, p) - d_E(q, n) + margin, 0)."""
    q = np.asarray(query, dtype=float)
    p = np.asarray(positive, dtype=float)
    if q.shape != p.shape:
        raise ValueError("descriptor dimension mismatch")
    dqp = float(np.linalg.norm(q - p))
    loss = 0.0
    for neg in negatives:
        n = np.asarray(neg, dtype=float)
        if n.shape != q.shape:
            raise ValueError("descriptor dimension mismatch")
        loss += max(dqp - float(np.linalg.norm(q - n)) + margin, 0.0)
    return loss


def _safe_unit(diff: np.ndarray, dist: float) -> np.ndarray:
    if dist < 1e-12:
        return np.zeros_like(diff)
    return diff / dist


def triplet_loss_with_grad(q: np.ndarray, p: np.ndarray, negs: np.ndarray,
                           margin: float):
    """Loss plus gradients w.r.t. query, positive and each negative descriptor."""
    dqp_vec = q - p
    dqp = float(np.linalg.norm(dqp_vec))
    uqp = _safe_unit(dqp_vec, dqp)
    dq = np.zeros_like(q)
    dp = np.zeros_like(p)
    dn = np.zeros_like(negs)
    loss = 0.0
    for k in range(negs.shape[0]):
        dqn_vec = q - negs[k]
        dqn = float(np.linalg.norm(dqn_vec))
        hinge = dqp - dqn + margin
        if hinge > 0:
            uqn = _safe_unit(dqn_vec, dqn)
            loss += hinge
            dq += uqp - uqn
            dp -= uqp
            dn[k] = uqn
    return loss, dq, dp, dn


@dataclass
class TripletBatch:
    """One query sequence, its best positive and k negative sequences.

    Sequences are (L, S, S) image stacks.
    """
    query: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray  # (k, L, S, S)
    margin: float = 0.1

    @property
    def num_negatives(self) -> int:
        return int(self.negatives.shape[0])


def triplet_forward_backward(batch: TripletBatch, params: dict,
                             config: EncoderConfig):
    """Loss and full parameter gradients for one triplet. Returns (loss, grads)."""
    k = batch.num_negatives
    seqs = np.concatenate(
        [batch.query[None], batch.positive[None], batch.negatives], axis=0)
    f, cache = describe_sequences(seqs, params, config)
    loss, dq, dp, dn = triplet_loss_with_grad(f[0], f[1], f[2:], batch.margin)
    grads = zero_grads(params)
    df = np.concatenate([dq[None], dp[None], dn], axis=0).astype(config.np_dtype)
    describe_backward(df, cache, params, config, grads)
    return loss, grads


def backward(batch: TripletBatch, params: dict, config: EncoderConfig) -> dict:
    """Gradients of the triplet loss w.r.t. every parameter."""
    _, grads = triplet_forward_backward(batch, params, config)
    return grads


# --------------------------------------------------------------------------
# Hard-negative mining
# --------------------------------------------------------------------------

@dataclass
class MiningPools:
    """Geometry + cached descriptors for triplet mining.

    `db_positions`/`query_positions` are (N, 2) pose positions; descriptor
    caches are refreshed by the trainer at its configured interval.
    """
    query_positions: np.ndarray
    db_positions: np.ndarray
    query_descriptors: np.ndarray
    db_descriptors: np.ndarray


def mine_triplet(pools: MiningPools, query_index: int,
                 positive_radius: float = 9.0, negative_radius: float = 18.0,
                 k: int = 10) -> Optional[tuple[int, np.ndarray]]:
    """Pick the best positive and the k hardest negatives for one query.

    Positives are database entries within `positive_radius`; the one with
    minimal cached descriptor distance wins. Negatives are entries beyond
    `negative_radius`, the k closest in descriptor space, ties broken by
    database index. Returns None when the query has no geometric positive.
    """
    qpos = pools.query_positions[query_index]
    geo = np.linalg.norm(pools.db_positions - qpos, axis=1)
    pos_idx = np.flatnonzero(geo <= positive_radius)
    if pos_idx.size == 0:
        return None
    qdesc = pools.query_descriptors[query_index]
    pos_d = np.linalg.norm(pools.db_descriptors[pos_idx] - qdesc, axis=1)
    best_positive = int(pos_idx[int(np.argmin(pos_d))])

    neg_idx = np.flatnonzero(geo > negative_radius)
    if neg_idx.size == 0:
        return None
    neg_d = np.linalg.norm(pools.db_descriptors[neg_idx] - qdesc, axis=1)
    order = np.lexsort((neg_idx, neg_d))   # distance first, index as tie-break
    hardest = neg_idx[order[:k]]
    return best_positive, hardest


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    epochs: int = 10
    margin: float = 0.1
    num_negatives: int = 10
    positive_radius: float = 9.0
    negative_radius: float = 18.0
    cache_refresh: int = 1000   # queries between descriptor-cache refreshes
    shuffle_seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "momentum", "weight_decay",
                     "lr_decay", "lr_decay_every", "epochs", "margin",
                     "num_negatives"):
            if getattr(self, name) is None or getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def lr_at_epoch(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LossRecord:
    epoch: int
    iteration: int
    loss: float
    lr: float


def _sequence_for(scan_ids: Sequence[str], index: int, length: int,
                  images: dict[str, np.ndarray]) -> np.ndarray:
    """Trailing window of L images ending at `index`, edge-clamped."""
    idx = [max(0, index - (length - 1) + j) for j in range(length)]
    return np.stack([images[scan_ids[i]] for i in idx])


def build_sequences(scan_ids: Sequence[str], images: dict[str, np.ndarray],
                    length: int) -> dict[str, np.ndarray]:
    """Per-scan trailing image sequences over an ordered scan list."""
    return {sid: _sequence_for(scan_ids, i, length, images)
            for i, sid in enumerate(scan_ids)}


def train(
    query_ids: Sequence[str],
    db_ids: Sequence[str],
    sequences: dict[str, np.ndarray],
    positions: dict[str, tuple[float, float]],
    config: EncoderConfig,
    train_cfg: TrainConfig,
    params: Optional[dict] = None,
    checkpoint_dir: Optional[Path] = None,
) -> tuple[dict, list[LossRecord]]:
    """SGD-with-momentum triplet training over the training-query pool.

    `sequences` maps scan_id -> (L, S, S) image sequence for queries and
    database entries alike; `positions` maps scan_id -> (x, y). Returns the
    trained parameters and the loss curve. NaN loss aborts with the last
    checkpoint retained.
    """
    if not query_ids or not db_ids:
        raise ValueError("training needs non-empty query and database pools")
    if params is None:
        params = init_params(config)
    velocity = zero_grads(params)
    rng = np.random.default_rng(train_cfg.shuffle_seed)

    q_ids = list(query_ids)
    d_ids = list(db_ids)
    q_pos = np.array([positions[s] for s in q_ids], dtype=float)
    d_pos = np.array([positions[s] for s in d_ids], dtype=float)
    q_seqs = np.stack([sequences[s] for s in q_ids])
    d_seqs = np.stack([sequences[s] for s in d_ids])

    def refresh_cache() -> MiningPools:
        qd = _descriptors_in_chunks(q_seqs, params, config)
        dd = _descriptors_in_chunks(d_seqs, params, config)
        return MiningPools(q_pos, d_pos, qd, dd)

    curve: list[LossRecord] = []
    skipped = 0
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.lr_at_epoch(epoch)
        order = rng.permutation(len(q_ids))
        pools = refresh_cache()
        since_refresh = 0
        batch_grads = None
        batch_loss = 0.0
        batch_count = 0
        iteration = 0
        for qi in order:
            if since_refresh >= train_cfg.cache_refresh:
                pools = refresh_cache()
                since_refresh = 0
            since_refresh += 1
            mined = mine_triplet(pools, int(qi), train_cfg.positive_radius,
                                 train_cfg.negative_radius, train_cfg.num_negatives)
            if mined is None:
                skipped += 1
                continue
            best_positive, hardest = mined
            batch = TripletBatch(
                query=q_seqs[int(qi)],
                positive=d_seqs[best_positive],
                negatives=d_seqs[hardest],
                margin=train_cfg.margin,
            )
            loss, grads = triplet_forward_backward(batch, params, config)
            if math.isnan(loss):
                raise TrainingDiverged(f"loss is NaN at epoch {epoch}")
            if batch_grads is None:
                batch_grads = grads
            else:
                for k in batch_grads:
                    batch_grads[k] += grads[k]
            batch_loss += loss
            batch_count += 1
            if batch_count == train_cfg.batch_size:
                _sgd_step(params, velocity, batch_grads, batch_count, lr, train_cfg)
                curve.append(LossRecord(epoch, iteration,
                                        batch_loss / batch_count, lr))
                iteration += 1
                batch_grads, batch_loss, batch_count = None, 0.0, 0
        if batch_count:
            _sgd_step(params, velocity, batch_grads, batch_count, lr, train_cfg)
            curve.append(LossRecord(epoch, iteration, batch_loss / batch_count, lr))
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_dir / f"epoch{epoch:03d}.ckpt",
                            params, config, epoch)
    return params, curve


def _sgd_step(params, velocity, grads, count, lr, train_cfg: TrainConfig) -> None:
    for k in params:
        g = grads[k] / count + train_cfg.weight_decay * params[k]
        velocity[k] = train_cfg.momentum * velocity[k] - lr * g
        params[k] += velocity[k]


def _descriptors_in_chunks(seqs: np.ndarray, params: dict, config: EncoderConfig,
                           chunk: int = 64) -> np.ndarray:
    out = []
    for i in range(0, seqs.shape[0], chunk):
        descs, _ = describe_sequences(seqs[i:i + chunk], params, config)
        out.append(descs)
    return np.vstack(out)


def describe_all(seqs: np.ndarray, params: dict, config: EncoderConfig) -> np.ndarray:
    """Inference-only descriptors for a stack of (L, S, S) sequences."""
    return _descriptors_in_chunks(seqs, params, config)


# --------------------------------------------------------------------------
# Checkpoints and loss curves
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"APC1"


def save_checkpoint(path, params: dict, config: EncoderConfig, epoch: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    header = {
        "config": {
            "image_size": config.image_size,
            "conv_channels": list(config.conv_channels),
            "pool_specs": [list(p) for p in config.pool_specs],
            "sequence_length": config.sequence_length,
            "temporal": config.temporal,
            "weight_init_seed": config.weight_init_seed,
            "dtype": config.dtype,
        },
        "epoch": epoch,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(params[n].astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, EncoderConfig, int]:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = header["config"]
        config = EncoderConfig(
            image_size=cfg["image_size"],
            conv_channels=tuple(cfg["conv_channels"]),
            pool_specs=tuple(tuple(p) for p in cfg["pool_specs"]),
            sequence_length=cfg["sequence_length"],
            temporal=cfg["temporal"],
            weight_init_seed=cfg["weight_init_seed"],
            dtype=cfg["dtype"],
        )
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            params[entry["name"]] = data.astype(config.np_dtype)
    return params, config, int(header["epoch"])


def save_loss_curve(path, curve: Iterable[LossRecord]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("epoch,iteration,loss,lr\n")
        for rec in curve:
            fh.write(f"{rec.epoch},{rec.iteration},{rec.loss:.9g},{rec.lr:.9g}\n")

"""Inception-block convolutional regressor mapping 8-plane gammatone
features to the two raw Beta parameters, implemented directly on numpy
arrays with hand-written reverse-mode gradients.

Tensors are [batch, channels, frames, bands]. Convolutions use edge
(replicate) padding along both axes so a time-constant input stays
time-constant through the stack; the variable-length frame axis is
reduced by a global average pool, so any frame count >= 1 is accepted.

Topology: 3x3 stem conv -> N inception blocks (parallel 1x1 / 3x3 / 5x5
convs plus 3x3 max-pool followed by 1x1 conv, channel-concatenated, ReLU,
then 2x2 average pool) -> global average pool -> FC -> ReLU -> FC(2).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CacheMismatchError, CheckpointError, DataError
from .prob_beta import RawParams

_CKPT_MAGIC = b"GML2"
_CKPT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetworkConfig:
    stem_channels: int = 16
    inception_blocks: int = 3
    branch_channels: int = 8
    fc_hidden: int = 32
    seed: int = 0
    n_planes: int = 8
    n_bands: int = 32

    def __post_init__(self):
        for name in ("stem_channels", "inception_blocks", "branch_channels", "fc_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class ParameterSet:
    """Named weight arrays; shapes fixed by the config after init."""

    arrays: dict[str, np.ndarray]
    config: NetworkConfig

    def count(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype


@dataclass
class Gradients:
    arrays: dict[str, np.ndarray]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


@dataclass
class ForwardCache:
    params: ParameterSet
    x: np.ndarray
    saved: dict = field(default_factory=dict)


def _layer_plan(cfg: NetworkConfig) -> list[tuple[str, int, int, int]]:
    """(name, k, in_ch, out_ch) for every conv, then FC sizes."""
    plan = [("stem", 3, cfg.n_planes, cfg.stem_channels)]
    in_ch = cfg.stem_channels
    for i in range(cfg.inception_blocks):
        bc = cfg.branch_channels
        plan += [
            (f"block{i}.b1", 1, in_ch, bc),
            (f"block{i}.b3", 3, in_ch, bc),
            (f"block{i}.b5", 5, in_ch, bc),
            (f"block{i}.bp", 1, in_ch, bc),
        ]
        in_ch = 4 * bc
    return plan


def init(cfg: NetworkConfig, dtype=np.float32) -> ParameterSet:
    """He fan-in initialization for conv/FC weights, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    arrays: dict[str, np.ndarray] = {}
    for name, k, cin, cout in _layer_plan(cfg):
        fan_in = cin * k * k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
        arrays[f"{name}.w"] = w.astype(dtype)
        arrays[f"{name}.b"] = np.zeros(cout, dtype=dtype)
    feat = 4 * cfg.branch_channels if cfg.inception_blocks else cfg.stem_channels
    for name, nin, nout in (("fc1", feat, cfg.fc_hidden), ("fc2", cfg.fc_hidden, 2)):
        w = rng.normal(0.0, np.sqrt(2.0 / nin), size=(nout, nin))
        arrays[f"{name}.w"] = w.astype(dtype)
        arrays[f"{name}.b"] = np.zeros(nout, dtype=dtype)
    return ParameterSet(arrays=arrays, config=cfg)


# ---------------------------------------------------------------- layers
#
# Internally tensors are channels-last [B, H, W, C] (H = frames, W = bands)
# so patch extraction and channel mixing run on contiguous memory.

def _pad_edge(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), mode="edge")


def _fold_edge_pad(dxp: np.ndarray, p: int) -> np.ndarray:
    """Accumulate gradients of replicated border cells onto their sources."""
    if p == 0:
        return dxp
    dx = dxp[:, p:-p, p:-p, :].copy()
    dx[:, 0, :, :] += dxp[:, :p, p:-p, :].sum(axis=1)
    dx[:, -1, :, :] += dxp[:, -p:, p:-p, :].sum(axis=1)
    dx[:, :, 0, :] += dxp[:, p:-p, :p, :].sum(axis=2)
    dx[:, :, -1, :] += dxp[:, p:-p, -p:, :].sum(axis=2)
    dx[:, 0, 0, :] += dxp[:, :p, :p, :].sum(axis=(1, 2))
    dx[:, 0, -1, :] += dxp[:, :p, -p:, :].sum(axis=(1, 2))
    dx[:, -1, 0, :] += dxp[:, -p:, :p, :].sum(axis=(1, 2))
    dx[:, -1, -1, :] += dxp[:, -p:, -p:, :].sum(axis=(1, 2))
    return dx


def _row_windows(xp: np.ndarray, k: int) -> np.ndarray:
    """View of a padded [B,Hp,Wp,C] tensor as [B,Hp,Wout,k*C]: the (j, c)
    patch span per output column, which is contiguous in memory."""
    b, hp, wp, c = xp.shape
    flat = xp.reshape(b, hp, wp * c)
    wins = sliding_window_view(flat, k * c, axis=2)
    return wins[:, :, :: c, :]


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """[B,H,W,C] -> [B*H*W, k*k*C] patches ordered (i, j, c), built from
    contiguous k*C row spans per kernel row."""
    b, h, w, c = x.shape
    xp = _pad_edge(x, k // 2)
    wins = _row_windows(xp, k)  # [B, Hp, W, k*C]
    cols = np.empty((b, h, w, k, k * c), dtype=x.dtype)
    for i in range(k):
        cols[:, :, :, i, :] = wins[:, i : i + h, :, :]
    return cols.reshape(b * h * w, k * k * c)


def _wmat(w: np.ndarray) -> np.ndarray:
    """[O,C,k,k] weights -> [k*k*C, O] matching _im2col's (i, j, c) order."""
    cout, cin, k, _ = w.shape
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(k * k * cin, cout))


def _conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray, cols_out=None):
    """x [B,H,W,C] -> [B,H,W,O]; optionally stores patches for backward."""
    b, h, wd, cin = x.shape
    cout, _, k, _ = w.shape
    if k == 1:
        out = x.reshape(-1, cin) @ w[:, :, 0, 0].T + bias
        return out.reshape(b, h, wd, cout)
    cols = _im2col(x, k)
    if cols_out is not None:
        cols_out.append(cols)
    out = cols @ _wmat(w) + bias
    return out.reshape(b, h, wd, cout)


def _conv_input_grad(dout: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the edge-padded input: a full correlation of dout
    with the flipped kernel, as one GEMM over (i, j, o) patches."""
    b, h, wd, cout = dout.shape
    _, cin, k, _ = w.shape
    p = k // 2
    pk = k - 1
    dp = np.zeros((b, h + 2 * pk, wd + 2 * pk, cout), dtype=dout.dtype)
    dp[:, pk : pk + h, pk : pk + wd, :] = dout
    ho, wo = h + 2 * p, wd + 2 * p
    wins = _row_windows(dp, k)  # [B, Hd, wo, k*O]
    cols = np.empty((b, ho, wo, k, k * cout), dtype=dout.dtype)
    for i in range(k):
        cols[:, :, :, i, :] = wins[:, i : i + ho, :, :]
    # m[(i, j, o), c] = w[o, c, k-1-i, k-1-j]
    m = np.ascontiguousarray(
        w[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(k * k * cout, cin)
    )
    return (cols.reshape(-1, k * k * cout) @ m).reshape(b, ho, wo, cin)


def _conv_backward(x, w, dout, cols=None, need_dx=True):
    b, h, wd, cin = x.shape
    cout, _, k, _ = w.shape
    dmat = dout.reshape(b * h * wd, cout)
    if k == 1:
        xmat = x.reshape(-1, cin)
        dw = (dmat.T @ xmat).reshape(w.shape)
        db = dmat.sum(axis=0)
        dx = (dmat @ w[:, :, 0, 0]).reshape(x.shape) if need_dx else None
        return dx, dw, db
    if cols is None:
        cols = _im2col(x, k)
    dwmat = cols.T @ dmat  # [(i,j,c), O]
    dw = np.ascontiguousarray(dwmat.reshape(k, k, cin, cout).transpose(3, 2, 0, 1))
    db = dmat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dxp = _conv_input_grad(dout, w)
    return _fold_edge_pad(dxp, k // 2), dw, db


def _maxpool3_forward(x: np.ndarray, want_idx: bool = True):
    b, h, w, c = x.shape
    xp = _pad_edge(x, 1)
    if not want_idx:
        out = np.maximum(xp[:, 0:h, 0:w, :], xp[:, 0:h, 1 : w + 1, :])
        for i in range(3):
            for j in range(3):
                if (i, j) in ((0, 0), (0, 1)):
                    continue
                np.maximum(out, xp[:, i : i + h, j : j + w, :], out=out)
        return out, None
    out = xp[:, 0:h, 0:w, :].copy()
    idx = np.zeros((b, h, w, c), dtype=np.int8)
    for i in range(3):
        for j in range(3):
            if i == 0 and j == 0:
                continue
            cand = xp[:, i : i + h, j : j + w, :]
            better = cand > out
            np.copyto(out, cand, where=better)
            np.copyto(idx, np.int8(3 * i + j), where=better)
    return out, idx


def _maxpool3_backward(x_shape, idx, dout):
    b, h, w, c = x_shape
    hp, wp = h + 2, w + 2
    di, dj = idx // 3, idx % 3
    rows = np.arange(h)[None, :, None, None] + di
    cols = np.arange(w)[None, None, :, None] + dj
    batch = (np.arange(b) * hp).reshape(b, 1, 1, 1)
    chan = np.arange(c)[None, None, None, :]
    flat = (((batch + rows) * wp + cols) * c + chan).ravel()
    dxp = np.bincount(flat, weights=dout.ravel(), minlength=b * hp * wp * c)
    dxp = dxp.reshape(b, hp, wp, c).astype(dout.dtype)
    return _fold_edge_pad(dxp, 1)


def _avgpool2_forward(x: np.ndarray):
    """2x2 stride-2 average pool, ceil mode, averaging valid cells only."""
    b, h, w, c = x.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    xpad = np.zeros((b, 2 * h2, 2 * w2, c), dtype=x.dtype)
    xpad[:, :h, :w, :] = x
    sums = xpad.reshape(b, h2, 2, w2, 2, c).sum(axis=(2, 4))
    ch = np.full(h2, 2.0)
    cw = np.full(w2, 2.0)
    if h % 2:
        ch[-1] = 1.0
    if w % 2:
        cw[-1] = 1.0
    counts = np.outer(ch, cw)[None, :, :, None].astype(x.dtype)
    return sums / counts, counts


def _avgpool2_backward(x_shape, counts, dout):
    b, h, w, c = x_shape
    spread = (dout / counts).repeat(2, axis=1).repeat(2, axis=2)
    return np.ascontiguousarray(spread[:, :h, :w, :])


# ------------------------------------------------------------- forward

def _fused_branch_weights(P: dict, i: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    """Embed the 1x1 and 3x3 branch kernels into one 5x5 kernel stack so the
    three conv branches run as a single GEMM. Zero padding contributes
    exactly zero, so outputs match the separate convolutions bit for bit up
    to summation order within each GEMM row."""
    w1, w3, w5 = (P[f"block{i}.b{k}.w"] for k in (1, 3, 5))
    bc, cin = w1.shape[0], w1.shape[1]
    wf = np.zeros((3 * bc, cin, 5, 5), dtype=dtype)
    wf[0:bc, :, 2, 2] = w1[:, :, 0, 0]
    wf[bc : 2 * bc, :, 1:4, 1:4] = w3
    wf[2 * bc :, :, :, :] = w5
    bf = np.concatenate([P[f"block{i}.b{k}.b"] for k in (1, 3, 5)])
    return wf, bf


def forward_batch(
    params: ParameterSet,
    x: np.ndarray,
    want_cache: bool = False,
    keep_preact: bool = False,
) -> np.ndarray | tuple[np.ndarray, ForwardCache]:
    """Run the network on x[B, planes, frames, bands] -> raw outputs [B, 2].

    keep_preact additionally stores pre-ReLU values and max-pool margins in
    the cache so finite-difference checks can reject draws near kinks.
    """
    cfg = params.config
    if x.ndim != 4 or x.shape[1] != cfg.n_planes or x.shape[3] != cfg.n_bands:
        raise DataError(
            f"expected features [B, {cfg.n_planes}, T, {cfg.n_bands}], got {x.shape}"
        )
    if x.shape[2] < 1:
        raise DataError("need at least one frame")
    P = params.arrays
    # channels-last internally: [B, frames, bands, planes]
    x = np.ascontiguousarray(
        np.asarray(x, dtype=params.dtype).transpose(0, 2, 3, 1)
    )
    cache = ForwardCache(params=params, x=x) if want_cache else None
    sv = cache.saved if want_cache else None

    stem_cols: list = []
    z = _conv_forward(x, P["stem.w"], P["stem.b"],
                      stem_cols if want_cache else None)
    h = np.maximum(z, 0)
    if want_cache:
        sv["stem.in"] = x
        sv["stem.cols"] = stem_cols[0] if stem_cols else None
        sv["stem.mask"] = z > 0
        if keep_preact:
            sv["stem.z"] = z
    for i in range(cfg.inception_blocks):
        pooled, pool_idx = _maxpool3_forward(h, want_idx=want_cache)
        wf, bf = _fused_branch_weights(P, i, params.dtype)
        cols5: list = []
        z135 = _conv_forward(h, wf, bf, cols5 if want_cache else None)
        zp = _conv_forward(pooled, P[f"block{i}.bp.w"], P[f"block{i}.bp.b"])
        cat = np.concatenate([z135, zp], axis=3)
        act = np.maximum(cat, 0)
        out, counts = _avgpool2_forward(act)
        if want_cache:
            sv[f"block{i}.in"] = h
            sv[f"block{i}.wf"] = wf
            sv[f"block{i}.cols5"] = cols5[0] if cols5 else None
            sv[f"block{i}.pooled"] = pooled
            sv[f"block{i}.pool_idx"] = pool_idx
            sv[f"block{i}.mask"] = cat > 0
            sv[f"block{i}.act_shape"] = act.shape
            sv[f"block{i}.counts"] = counts
            if keep_preact:
                sv[f"block{i}.z"] = cat
                b_, h_, w_, c_ = h.shape
                windows = np.empty((b_, h_, w_, 9, c_), dtype=h.dtype)
                hp = _pad_edge(h, 1)
                for wi in range(3):
                    for wj in range(3):
                        windows[:, :, :, 3 * wi + wj, :] = hp[
                            :, wi : wi + h_, wj : wj + w_, :
                        ]
                top2 = np.partition(windows, 7, axis=3)[:, :, :, 7:, :]
                gap = top2[:, :, :, 1, :] - top2[:, :, :, 0, :]
                # zero-max windows are pinned by the ReLU margin, and exact
                # ties are co-moving duplicates (edge replication or shared
                # dead-region bias), so only small positive gaps are risky
                sv[f"block{i}.pool_gap"] = np.where(
                    (top2[:, :, :, 1, :] > 0) & (gap > 0), gap, np.inf
                )
        h = out

    g = h.mean(axis=(1, 2))
    z1 = g @ P["fc1.w"].T + P["fc1.b"]
    a1 = np.maximum(z1, 0)
    y = a1 @ P["fc2.w"].T + P["fc2.b"]
    if want_cache:
        sv["gap.in_shape"] = h.shape
        sv["fc1.in"] = g
        sv["fc1.mask"] = z1 > 0
        sv["fc2.in"] = a1
        if keep_preact:
            sv["fc1.z"] = z1
        return y, cache
    return y


def kink_margins(cache: ForwardCache) -> tuple[float, float]:
    """Smallest |pre-ReLU value| and smallest max-pool top-2 gap in a cache
    built with keep_preact=True; used to reject finite-difference draws that
    sit too close to a non-differentiable point."""
    relu_margin = float("inf")
    pool_margin = float("inf")
    for key, val in cache.saved.items():
        if key.endswith(".z"):
            relu_margin = min(relu_margin, float(np.min(np.abs(val))))
        elif key.endswith(".pool_gap"):
            pool_margin = min(pool_margin, float(np.min(val)))
    return relu_margin, pool_margin


def forward(params: ParameterSet, features) -> RawParams:
    """Single-sample forward; accepts a GammatoneSpectrogram or [8,T,bands]."""
    x = getattr(features, "power", features)
    x = np.asarray(x)
    if x.ndim != 3:
        raise DataError(f"expected [planes, frames, bands], got shape {x.shape}")
    y = forward_batch(params, x[None])
    return RawParams(alpha_tilde=float(y[0, 0]), beta_tilde=float(y[0, 1]))


def backward_batch(
    params: ParameterSet, cache: ForwardCache, upstream: np.ndarray
) -> Gradients:
    """Exact gradients of forward_batch against every parameter array."""
    if cache.params is not params:
        raise CacheMismatchError("cache was built for a different parameter set")
    cfg = params.config
    P = params.arrays
    sv = cache.saved
    upstream = np.asarray(upstream, dtype=params.dtype)
    if upstream.shape != (cache.x.shape[0], 2):
        raise CacheMismatchError(
            f"upstream shape {upstream.shape} does not match batch "
            f"{(cache.x.shape[0], 2)}"
        )
    g: dict[str, np.ndarray] = {}

    da1 = upstream @ P["fc2.w"]
    g["fc2.w"] = upstream.T @ sv["fc2.in"]
    g["fc2.b"] = upstream.sum(axis=0)
    dz1 = da1 * sv["fc1.mask"]
    g["fc1.w"] = dz1.T @ sv["fc1.in"]
    g["fc1.b"] = dz1.sum(axis=0)
    dg = dz1 @ P["fc1.w"]

    b, h, w, c = sv["gap.in_shape"]
    dh = np.broadcast_to(dg[:, None, None, :], (b, h, w, c)) / (h * w)
    dh = dh.astype(params.dtype)

    for i in reversed(range(cfg.inception_blocks)):
        act_shape = sv[f"block{i}.act_shape"]
        dact = _avgpool2_backward(act_shape, sv[f"block{i}.counts"], dh)
        dcat = dact * sv[f"block{i}.mask"]
        bc = cfg.branch_channels
        d135 = np.ascontiguousarray(dcat[:, :, :, : 3 * bc])
        dp = np.ascontiguousarray(dcat[:, :, :, 3 * bc :])
        x_in = sv[f"block{i}.in"]
        dx135, dwf, dbf = _conv_backward(
            x_in, sv[f"block{i}.wf"], d135, cols=sv[f"block{i}.cols5"]
        )
        g[f"block{i}.b1.w"] = np.ascontiguousarray(
            dwf[0:bc, :, 2, 2][:, :, None, None]
        )
        g[f"block{i}.b3.w"] = np.ascontiguousarray(dwf[bc : 2 * bc, :, 1:4, 1:4])
        g[f"block{i}.b5.w"] = dwf[2 * bc :].copy()
        g[f"block{i}.b1.b"] = dbf[0:bc].copy()
        g[f"block{i}.b3.b"] = dbf[bc : 2 * bc].copy()
        g[f"block{i}.b5.b"] = dbf[2 * bc :].copy()
        dpool, g[f"block{i}.bp.w"], g[f"block{i}.bp.b"] = _conv_backward(
            sv[f"block{i}.pooled"], P[f"block{i}.bp.w"], dp
        )
        dx_pool = _maxpool3_backward(x_in.shape, sv[f"block{i}.pool_idx"], dpool)
        dh = dx135 + dx_pool

    dz = dh * sv["stem.mask"]
    _, g["stem.w"], g["stem.b"] = _conv_backward(
        sv["stem.in"], P["stem.w"], dz, cols=sv["stem.cols"], need_dx=False
    )

    ordered = {name: g[name] for name in params.arrays}
    return Gradients(arrays=ordered)


# --------------------------------------------------------------- updates

def init_adam(params: ParameterSet) -> AdamState:
    zeros = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    return AdamState(
        m=zeros, v={k: np.zeros_like(v) for k, v in params.arrays.items()}, t=0
    )


def apply_update(
    params: ParameterSet, grads: Gradients, opt_state: AdamState, lr: float
) -> tuple[ParameterSet, AdamState, list[str]]:
    """One bias-corrected Adam step. Arrays holding non-finite gradients are
    skipped (parameters and moments untouched) and their names returned."""
    t = opt_state.t + 1
    new_arrays = {}
    new_m = {}
    new_v = {}
    skipped = []
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name, w in params.arrays.items():
        grad = grads.arrays[name]
        if grad.shape != w.shape:
            raise DataError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(grad)):
            skipped.append(name)
            new_arrays[name] = w.copy()
            new_m[name] = opt_state.m[name].copy()
            new_v[name] = opt_state.v[name].copy()
            continue
        m = ADAM_BETA1 * opt_state.m[name] + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * opt_state.v[name] + (1.0 - ADAM_BETA2) * grad**2
        m_hat = m / bc1
        v_hat = v / bc2
        new_arrays[name] = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    return (
        ParameterSet(arrays=new_arrays, config=params.config),
        AdamState(m=new_m, v=new_v, t=t),
        skipped,
    )


# ------------------------------------------------------------ checkpoint

def save_checkpoint(
    params: ParameterSet, cfg: NetworkConfig, metadata: dict, path: str | Path
) -> None:
    """magic, version, header JSON, raw little-endian payload, trailing CRC."""
    tensors = []
    payload = b""
    for name, arr in params.arrays.items():
        dtype = "<f8" if arr.dtype == np.float64 else "<f4"
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "nbytes": len(raw)})
        payload += raw
    header = json.dumps(
        {"network_config": asdict(cfg), "metadata": metadata, "tensors": tensors}
    ).encode()
    body = (
        _CKPT_MAGIC
        + struct.pack("<II", _CKPT_VERSION, len(header))
        + header
        + payload
    )
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    Path(path).write_bytes(body)


def load_checkpoint(path: str | Path) -> tuple[ParameterSet, NetworkConfig, dict]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a GML2 checkpoint")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: checksum failure")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(raw[12 : 12 + header_len])
    cfg = NetworkConfig(**header["network_config"])
    arrays = {}
    pos = 12 + header_len
    for spec in header["tensors"]:
        count = spec["nbytes"]
        arr = np.frombuffer(raw[pos : pos + count], dtype=spec["dtype"])
        arrays[spec["name"]] = arr.reshape(spec["shape"]).copy()
        pos += count
    return ParameterSet(arrays=arrays, config=cfg), cfg, header["metadata"]

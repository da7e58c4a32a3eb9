"""Dataset management, the Adam training loop on the Beta NLL (or the
Gaussian ablation head), and validation with Rp x Rs checkpoint selection.

Training targets are individual listener scores; validation aggregates
predictions per (item, condition) group against listener means. Features
are precomputed once per signal pair and cached on disk keyed by the
path pair and gammatone configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import inference_eval, network, prob_beta
from .audio_io import load_pair, rms_difference_db
from .errors import ManifestError, MetricError, NumericalError
from .gammatone import (
    GammatoneConfig,
    GammatoneSpectrogram,
    build_features,
    read_features,
    write_features,
)
from .network import NetworkConfig

_MANIFEST_FIELDS = (
    "ref_path",
    "test_path",
    "listener_score",
    "listener_id",
    "item_id",
    "condition_id",
)


@dataclass(frozen=True)
class ManifestEntry:
    ref_path: str
    test_path: str
    listener_score: float
    listener_id: str
    item_id: str
    condition_id: str
    split: str = "train"

    @property
    def normalized_score(self) -> float:
        return self.listener_score / 100.0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-4
    max_steps: int = 20000
    valid_every: int = 500
    seed: int = 0
    loss_head: str = "beta"  # "beta" or "gaussian"
    crop_seconds: float = 3.0
    train_frac: float = 0.9

    def __post_init__(self):
        if self.batch_size < 1 or self.max_steps < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size, max_steps, learning_rate must be positive")
        if self.valid_every > self.max_steps:
            raise ValueError("valid_every must not exceed max_steps")
        if self.loss_head not in ("beta", "gaussian"):
            raise ValueError("loss_head must be 'beta' or 'gaussian'")


@dataclass
class ValidationPoint:
    step: int
    rp: float
    rs: float

    @property
    def product(self) -> float:
        return self.rp * self.rs


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    validations: list[ValidationPoint] = field(default_factory=list)
    best_step: int = -1
    best_checkpoint_path: str = ""
    last_checkpoint_path: str = ""
    skipped_updates: int = 0


# ---------------------------------------------------------------- manifest

def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a JSONL manifest; malformed rows are rejected with line numbers."""
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[tuple[str, str, str]] = set()
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        missing = [f for f in _MANIFEST_FIELDS if f not in row]
        if missing:
            raise ManifestError(f"{path}:{lineno}: missing fields {missing}")
        score = float(row["listener_score"])
        if not 0.0 <= score <= 100.0:
            raise ManifestError(
                f"{path}:{lineno}: listener_score {score} outside [0, 100]"
            )
        key = (str(row["item_id"]), str(row["condition_id"]), str(row["listener_id"]))
        if key in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate entry {key}")
        seen.add(key)
        entry = ManifestEntry(
            ref_path=str(base / row["ref_path"]),
            test_path=str(base / row["test_path"]),
            listener_score=score,
            listener_id=str(row["listener_id"]),
            item_id=str(row["item_id"]),
            condition_id=str(row["condition_id"]),
            split=str(row.get("split", "train")),
        )
        for p in (entry.ref_path, entry.test_path):
            if not Path(p).exists():
                raise ManifestError(f"{path}:{lineno}: missing audio file {p}")
        entries.append(entry)
    return entries


def make_split(
    entries: list[ManifestEntry], train_frac: float = 0.9, seed: int = 0
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Deterministic item-level split; all rows of an item stay together."""
    if not entries:
        raise ManifestError("cannot split an empty manifest")
    items = sorted({e.item_id for e in entries})
    if len(items) < 2:
        raise ManifestError("need at least 2 distinct items to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(items))
    n_train = max(1, min(len(items) - 1, int(round(train_frac * len(items)))))
    train_items = {items[i] for i in perm[:n_train]}
    train = [e for e in entries if e.item_id in train_items]
    valid = [e for e in entries if e.item_id not in train_items]
    return train, valid


# ------------------------------------------------------------ feature cache

def default_cache_dir() -> Path:
    env = os.environ.get("GML2_CACHE_DIR")
    return Path(env) if env else Path(".gml2_cache")


def _cache_key(ref_path: str, test_path: str, cfg: GammatoneConfig) -> str:
    blob = "|".join(
        [str(Path(ref_path).resolve()), str(Path(test_path).resolve()), cfg.key()]
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def features_for_pair(
    ref_path: str,
    test_path: str,
    cfg: GammatoneConfig,
    cache_dir: Path | None = None,
    strict_rate: bool = False,
) -> GammatoneSpectrogram:
    """Compute or load the 8-plane features for one signal pair."""
    cache_dir = default_cache_dir() if cache_dir is None else Path(cache_dir)
    cache_file = cache_dir / f"{_cache_key(ref_path, test_path, cfg)}.gmf"
    if cache_file.exists():
        return read_features(cache_file)
    pair = load_pair(ref_path, test_path, strict_rate=strict_rate)
    feats = build_features(pair, cfg)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = cache_file.with_suffix(".tmp")
    write_features(tmp, feats)
    tmp.replace(cache_file)
    return feats


def precompute_features(
    entries: list[ManifestEntry],
    cfg: GammatoneConfig,
    cache_dir: Path | None = None,
    jobs: int = 1,
    warn_stream=None,
) -> dict[tuple[str, str], np.ndarray]:
    """Featurize every unique pair (optionally in parallel); returns arrays
    keyed by (ref_path, test_path)."""
    pairs = sorted({(e.ref_path, e.test_path) for e in entries})

    def one(pair_paths):
        feats = features_for_pair(pair_paths[0], pair_paths[1], cfg, cache_dir)
        return pair_paths, feats.power

    results: dict[tuple[str, str], np.ndarray] = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for key, power in pool.map(one, pairs):
                results[key] = power
    else:
        for p in pairs:
            key, power = one(p)
            results[key] = power
    if warn_stream is not None:
        for ref_path, test_path in pairs:
            pair = load_pair(ref_path, test_path)
            diff = rms_difference_db(pair.reference, pair.test)
            if diff > 6.0:
                print(
                    f"warning: pair RMS differs by {diff:.1f} dB "
                    f"({ref_path} vs {test_path})",
                    file=warn_stream,
                )
    return results


# ---------------------------------------------------------------- training

def _grouped(entries: list[ManifestEntry]):
    groups: dict[tuple[str, str], list[ManifestEntry]] = {}
    for e in entries:
        groups.setdefault((e.item_id, e.condition_id), []).append(e)
    return groups


def _predict_scores(
    params: network.ParameterSet,
    head: str,
    groups,
    feats: dict[tuple[str, str], np.ndarray],
) -> tuple[list[float], list[float], list[np.ndarray]]:
    """Per-group (prediction, listener mean, raw outputs) at full length."""
    preds, targets, raws = [], [], []
    for (_, _), rows in sorted(groups.items()):
        power = feats[(rows[0].ref_path, rows[0].test_path)]
        raw = network.forward_batch(params, power[None].astype(np.float32))[0]
        raws.append(raw)
        if head == "beta":
            p = prob_beta.map_params(
                prob_beta.RawParams(float(raw[0]), float(raw[1]))
            )
            preds.append(inference_eval.predicted_mushra(p))
        else:
            preds.append(100.0 * float(np.clip(raw[0], 0.0, 1.0)))
        targets.append(float(np.mean([r.listener_score for r in rows])))
    return preds, targets, raws


def validate(
    params: network.ParameterSet,
    entries: list[ManifestEntry],
    feats: dict[tuple[str, str], np.ndarray],
    head: str = "beta",
) -> tuple[float, float]:
    """(Rp, Rs) of per-(item, condition) predictions vs listener means."""
    groups = _grouped(entries)
    if len(groups) < 3:
        raise MetricError("validation needs at least 3 (item, condition) groups")
    preds, targets, _ = _predict_scores(params, head, groups, feats)
    return inference_eval.pearson(preds, targets), inference_eval.spearman(
        preds, targets
    )


def held_out_nll(
    params: network.ParameterSet,
    entries: list[ManifestEntry],
    feats: dict[tuple[str, str], np.ndarray],
    head: str = "beta",
) -> float:
    """Mean per-row NLL of the given head on clamped normalized scores."""
    total = 0.0
    for e in entries:
        power = feats[(e.ref_path, e.test_path)]
        raw = network.forward_batch(params, power[None].astype(np.float32))
        s = np.array([e.normalized_score])
        if head == "beta":
            total += float(prob_beta.nll_loss_batch(s, raw)[0])
        else:
            total += float(prob_beta.gaussian_nll_batch(s, raw)[0])
    return total / len(entries)


def train(
    entries: list[ManifestEntry],
    train_cfg: TrainConfig,
    net_cfg: NetworkConfig,
    gt_cfg: GammatoneConfig,
    out_dir: str | Path,
    cache_dir: Path | None = None,
    jobs: int = 1,
) -> TrainReport:
    """Minimize the negative log-likelihood with Adam; keep the checkpoint
    maximizing Rp x Rs on the validation split."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = [e for e in entries if e.split != "test"]
    explicit_valid = [e for e in pool if e.split == "valid"]
    if explicit_valid:
        train_rows = [e for e in pool if e.split != "valid"]
        valid_rows = explicit_valid
    else:
        train_rows, valid_rows = make_split(pool, train_cfg.train_frac, train_cfg.seed)
    if not train_rows or not valid_rows:
        raise ManifestError("train and validation splits must both be nonempty")
    train_items = {e.item_id for e in train_rows}
    leaked = train_items & {e.item_id for e in valid_rows}
    if leaked:
        raise ManifestError(f"item-level split leakage: {sorted(leaked)}")

    feats = precompute_features(pool, gt_cfg, cache_dir, jobs)
    crop_frames = max(
        1,
        1
        + int(
            (train_cfg.crop_seconds * 1000.0 - gt_cfg.window_ms) // gt_cfg.hop_ms
        ),
    )

    params = network.init(net_cfg)
    opt = network.init_adam(params)
    rng = np.random.default_rng(train_cfg.seed)
    head = train_cfg.loss_head

    report = TrainReport()
    scores = np.array([e.normalized_score for e in train_rows])
    keys = [(e.ref_path, e.test_path) for e in train_rows]

    best_product = -math.inf
    best_path = out_dir / "best.gml2"
    metadata_base = {
        "gammatone_config": asdict(gt_cfg),
        "train_config": asdict(train_cfg),
        "loss_head": head,
    }

    def run_validation(step: int):
        nonlocal best_product
        try:
            rp, rs = validate(params, valid_rows, feats, head)
        except MetricError as exc:
            report.validations.append(ValidationPoint(step=step, rp=float("nan"), rs=float("nan")))
            print(f"validation at step {step} failed: {exc}")
            return
        point = ValidationPoint(step=step, rp=rp, rs=rs)
        report.validations.append(point)
        if point.product > best_product:
            best_product = point.product
            report.best_step = step
            network.save_checkpoint(
                params,
                net_cfg,
                {**metadata_base, "step": step, "rp": rp, "rs": rs},
                best_path,
            )
            report.best_checkpoint_path = str(best_path)

    for step in range(1, train_cfg.max_steps + 1):
        idx = rng.integers(0, len(train_rows), size=train_cfg.batch_size)
        batch_feats = [feats[keys[i]] for i in idx]
        t_min = min(f.shape[1] for f in batch_feats)
        t_crop = min(crop_frames, t_min)
        stack = np.empty(
            (train_cfg.batch_size, net_cfg.n_planes, t_crop, net_cfg.n_bands),
            dtype=np.float32,
        )
        for bi, f in enumerate(batch_feats):
            start = int(rng.integers(0, f.shape[1] - t_crop + 1))
            stack[bi] = f[:, start : start + t_crop, :]
        s = scores[idx]

        raw, fwd_cache = network.forward_batch(params, stack, want_cache=True)
        if head == "beta":
            losses = prob_beta.nll_loss_batch(s, raw)
            draw = prob_beta.nll_grad_batch(s, raw)
        else:
            losses = prob_beta.gaussian_nll_batch(s, raw)
            draw = prob_beta.gaussian_nll_grad_batch(s, raw)
        loss = float(np.mean(losses))
        if not math.isfinite(loss):
            raise NumericalError(
                f"non-finite loss {loss} at step {step} "
                f"(raw range [{raw.min():.3g}, {raw.max():.3g}])"
            )
        report.losses.append(loss)
        grads = network.backward_batch(
            params, fwd_cache, draw / train_cfg.batch_size
        )
        params, opt, skipped = network.apply_update(
            params, grads, opt, train_cfg.learning_rate
        )
        if skipped:
            report.skipped_updates += len(skipped)

        if step % train_cfg.valid_every == 0 or step == train_cfg.max_steps:
            run_validation(step)

    last_path = out_dir / "last.gml2"
    network.save_checkpoint(
        params,
        net_cfg,
        {**metadata_base, "step": train_cfg.max_steps},
        last_path,
    )
    report.last_checkpoint_path = str(last_path)
    if not report.best_checkpoint_path:
        report.best_checkpoint_path = str(last_path)

    with open(out_dir / "loss_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(report.losses, start=1):
            writer.writerow([i, f"{loss:.8f}"])
    return report

"""Command-line entry point: features, synth, train, predict, eval,
gradcheck.

Option precedence is flags > config file > defaults. Exit codes: 0 ok,
1 usage error, 2 data error, 3 numerical failure. Results go to stdout,
diagnostics to stderr; every subcommand with an output directory writes
a run-manifest JSON recording the effective configuration.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, inference_eval, network, prob_beta, synth_data, trainer
from .audio_io import load_pair
from .errors import Gml2Error, NumericalError
from .gammatone import GammatoneConfig, build_features, write_features
from .gradcheck import TOY_CONFIG, full_gradient_check
from .network import NetworkConfig
from .trainer import TrainConfig

_COMMANDS = ("features", "synth", "train", "predict", "eval", "gradcheck")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_config_file(path: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected key=value")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()
    return values


def _resolve(args, name: str, default, cast=None):
    """flags > config file > default."""
    flag_val = getattr(args, name.replace("-", "_"), None)
    if flag_val is not None:
        return flag_val
    cfg_file = getattr(args, "_config_values", {})
    if name in cfg_file:
        raw = cfg_file[name]
        caster = cast or (type(default) if default is not None else str)
        if caster is bool:
            return raw.lower() in ("1", "true", "yes")
        return caster(raw)
    return default


def _add_gammatone_flags(p: _Parser):
    p.add_argument("--bands", type=int, default=None)
    p.add_argument("--f-low", type=float, default=None)
    p.add_argument("--f-high", type=float, default=None)
    p.add_argument("--window-ms", type=float, default=None)
    p.add_argument("--hop-ms", type=float, default=None)
    p.add_argument("--feature-compression", choices=["log", "linear"], default=None)


def _gammatone_config(args) -> GammatoneConfig:
    return GammatoneConfig(
        n_bands=_resolve(args, "bands", 32),
        f_low=_resolve(args, "f-low", 50.0),
        f_high=_resolve(args, "f-high", 24000.0),
        window_ms=_resolve(args, "window-ms", 80.0),
        hop_ms=_resolve(args, "hop-ms", 20.0),
        compression=_resolve(args, "feature-compression", "log", cast=str),
    )


def _add_network_flags(p: _Parser):
    p.add_argument("--stem-channels", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--branch-channels", type=int, default=None)
    p.add_argument("--fc-hidden", type=int, default=None)
    p.add_argument("--init-seed", type=int, default=None)


def _network_config(args, n_bands: int, fallback_seed: int) -> NetworkConfig:
    return NetworkConfig(
        stem_channels=_resolve(args, "stem-channels", 16),
        inception_blocks=_resolve(args, "blocks", 3),
        branch_channels=_resolve(args, "branch-channels", 8),
        fc_hidden=_resolve(args, "fc-hidden", 32),
        seed=_resolve(args, "init-seed", fallback_seed),
        n_bands=n_bands,
    )


def _config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()
    ).hexdigest()


def emit_run_manifest(
    command: str, config: dict, out_dir: Path, input_paths: list[str | Path]
) -> Path:
    """JSON record {version, command, config, config hash, input hashes}
    sufficient to rerun the invocation exactly."""
    hashes = {}
    for p in input_paths:
        p = Path(p)
        if p.is_file():
            hashes[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
    record = {
        "format_version": 1,
        "gml2_version": __version__,
        "command": command,
        "config": config,
        "config_hash": _config_hash(config),
        "input_hashes": hashes,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"run_manifest_{command}.json"
    path.write_text(json.dumps(record, indent=2, default=str) + "\n")
    return path


def _build_parser() -> _Parser:
    parser = _Parser(prog="gml2", description=__doc__)
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker pool size (default: all processors)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("features", parents=[], help="write a feature dump for a pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict-rate", action="store_true", default=None)
    _add_gammatone_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--items", type=int, default=None)
    p.add_argument("--conditions", type=int, default=None)
    p.add_argument("--listeners", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--kappa-range", default=None,
                   help="LO,HI concentration spread across conditions")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--test-items", type=int, default=None)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--valid-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss-head", choices=["beta", "gaussian"], default=None)
    p.add_argument("--crop-seconds", type=float, default=None)
    p.add_argument("--train-frac", type=float, default=None)
    _add_network_flags(p)
    _add_gammatone_flags(p)

    p = sub.add_parser("predict", help="predict MUSHRA for one pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--listeners", type=int, default=None)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--strict-rate", action="store_true", default=None)
    p.add_argument("--out", default=None, help="optional run-manifest directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["test", "train", "valid", "all"], default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


# ------------------------------------------------------------ subcommands

def _cmd_features(args) -> int:
    gt_cfg = _gammatone_config(args)
    strict = bool(_resolve(args, "strict-rate", False))
    pair = load_pair(args.ref, args.test, strict_rate=strict)
    from .audio_io import rms_difference_db

    diff = rms_difference_db(pair.reference, pair.test)
    if diff > 6.0:
        print(f"warning: pair RMS differs by {diff:.1f} dB", file=sys.stderr)
    feats = build_features(pair, gt_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features(out, feats)
    emit_run_manifest(
        "features",
        {"gammatone": asdict(gt_cfg), "ref": args.ref, "test": args.test,
         "strict_rate": strict},
        out.parent,
        [args.ref, args.test],
    )
    print(json.dumps({"out": str(out), "planes": feats.n_planes,
                      "frames": feats.n_frames, "bands": feats.n_bands}))
    return 0


def _parse_kappa(args, n_conditions: int):
    kappa_range = _resolve(args, "kappa-range", None, cast=str)
    if kappa_range:
        try:
            lo, hi = (float(v) for v in kappa_range.split(","))
        except ValueError as exc:
            raise _UsageError(f"--kappa-range expects LO,HI: {exc}") from exc
        return np.geomspace(lo, hi, n_conditions).tolist()
    return None


def _cmd_synth(args) -> int:
    items = _resolve(args, "items", 8)
    conditions = _resolve(args, "conditions", 6)
    listeners = _resolve(args, "listeners", 10)
    seed = _resolve(args, "seed", 0)
    kappa = _resolve(args, "kappa", 20.0)
    duration = _resolve(args, "duration", 3.2)
    test_items = _resolve(args, "test-items", 2)
    kappa_list = _parse_kappa(args, conditions)

    out_dir = Path(args.out)
    sources = [
        (f"item{i:02d}", synth_data.make_source(i, seed, duration=duration))
        for i in range(items)
    ]
    lm = synth_data.ListenerModel(concentration=kappa, n_listeners=listeners)
    manifest = synth_data.build_dataset(
        sources,
        synth_data.default_conditions(conditions, seed=seed),
        lm,
        out_dir,
        seed=seed,
        test_items=test_items,
        kappa_per_condition=kappa_list,
    )
    config = {
        "items": items, "conditions": conditions, "listeners": listeners,
        "seed": seed, "kappa": kappa, "kappa_range": kappa_list,
        "duration": duration, "test_items": test_items,
    }
    emit_run_manifest("synth", config, out_dir, [])
    print(json.dumps({"manifest": str(manifest), "rows": items * conditions * listeners}))
    return 0


def _cmd_train(args, jobs: int) -> int:
    gt_cfg = _gammatone_config(args)
    seed = _resolve(args, "seed", 0)
    train_cfg = TrainConfig(
        batch_size=_resolve(args, "batch", 8),
        learning_rate=_resolve(args, "lr", 1e-4),
        max_steps=_resolve(args, "steps", 20000),
        valid_every=_resolve(args, "valid-every", 500),
        seed=seed,
        loss_head=_resolve(args, "loss-head", "beta", cast=str),
        crop_seconds=_resolve(args, "crop-seconds", 3.0),
        train_frac=_resolve(args, "train-frac", 0.9),
    )
    net_cfg = _network_config(args, gt_cfg.n_bands, seed)
    entries = trainer.load_manifest(args.manifest)
    out_dir = Path(args.out)
    config = {
        "train": asdict(train_cfg),
        "network": asdict(net_cfg),
        "gammatone": asdict(gt_cfg),
        "manifest": args.manifest,
    }
    emit_run_manifest("train", config, out_dir, [args.manifest])
    report = trainer.train(entries, train_cfg, net_cfg, gt_cfg, out_dir, jobs=jobs)
    best = next(
        (v for v in report.validations if v.step == report.best_step), None
    )
    summary = {
        "best_step": report.best_step,
        "best_checkpoint": report.best_checkpoint_path,
        "last_checkpoint": report.last_checkpoint_path,
        "final_loss": report.losses[-1] if report.losses else None,
        "best_rp": best.rp if best else None,
        "best_rs": best.rs if best else None,
    }
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def _cmd_predict(args) -> int:
    params, _, metadata = network.load_checkpoint(args.ckpt)
    gt_cfg = GammatoneConfig(**metadata["gammatone_config"])
    strict = bool(_resolve(args, "strict-rate", False))
    pair = load_pair(args.ref, args.test, strict_rate=strict)
    pred = inference_eval.predict(
        params,
        pair,
        gt_cfg,
        n_listeners=_resolve(args, "listeners", inference_eval.DEFAULT_LISTENERS),
        level=_resolve(args, "level", inference_eval.DEFAULT_CI_LEVEL),
    )
    if args.out:
        emit_run_manifest(
            "predict",
            {"ref": args.ref, "test": args.test, "ckpt": args.ckpt,
             "listeners": pred.n_listeners, "level": pred.ci_level},
            Path(args.out),
            [args.ref, args.test, args.ckpt],
        )
    print(
        json.dumps(
            {
                "mushra": pred.mushra,
                "ci_low": pred.ci_low,
                "ci_high": pred.ci_high,
                "alpha": pred.params.alpha,
                "beta": pred.params.beta,
            }
        )
    )
    return 0


def _cmd_eval(args, jobs: int) -> int:
    params, _, metadata = network.load_checkpoint(args.ckpt)
    gt_cfg = GammatoneConfig(**metadata["gammatone_config"])
    head = metadata.get("loss_head", "beta")
    split = _resolve(args, "split", "test", cast=str)
    entries = trainer.load_manifest(args.manifest)
    if split != "all":
        entries = [e for e in entries if e.split == split]
    if not entries:
        raise Gml2Error(f"no manifest rows with split={split}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = trainer.precompute_features(entries, gt_cfg, jobs=jobs)

    groups = trainer._grouped(entries)
    records = []
    for (item_id, cond_id), rows in sorted(groups.items()):
        power = feats[(rows[0].ref_path, rows[0].test_path)]
        raw = network.forward_batch(params, power[None].astype(np.float32))[0]
        scores = [r.listener_score for r in rows]
        if head == "beta":
            p = prob_beta.map_params(prob_beta.RawParams(float(raw[0]), float(raw[1])))
            pred = inference_eval.prediction_from_params(p, n_listeners=max(2, len(scores)))
        else:
            mush = 100.0 * float(np.clip(raw[0], 0.0, 1.0))
            sigma = 100.0 * float(np.exp(raw[1]))
            pred = inference_eval.Prediction(
                mushra=mush,
                params=prob_beta.BetaParams(2.0, 2.0),
                ci_low=max(0.0, mush - 1.96 * sigma),
                ci_high=min(100.0, mush + 1.96 * sigma),
                ci_level=0.95,
                n_listeners=len(scores),
            )
        records.append(
            inference_eval.EvalRecord(
                item_id=item_id,
                condition_id=cond_id,
                prediction=pred,
                subjective_scores=scores,
            )
        )
    summary = inference_eval.summarize(records)
    inference_eval.write_scatter(out_dir / "scatter.csv", records)
    metrics = {
        "rp": summary.rp,
        "rs": summary.rs,
        "outlier_ratio": summary.outlier_ratio,
        "n_points": summary.n_points,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    emit_run_manifest(
        "eval",
        {"manifest": args.manifest, "ckpt": args.ckpt, "split": split},
        out_dir,
        [args.manifest, args.ckpt],
    )
    print(json.dumps(metrics))
    return 0


def _cmd_gradcheck(args) -> int:
    result = full_gradient_check(
        TOY_CONFIG,
        n_draws=_resolve(args, "draws", 20),
        h=_resolve(args, "step-size", 1e-3),
        seed=_resolve(args, "seed", 0),
    )
    print(
        json.dumps(
            {
                "max_rel_error": result.max_rel_error,
                "n_draws": result.n_draws,
                "n_params": result.n_params,
            }
        )
    )
    if not result.passed(1e-3):
        raise NumericalError(
            f"gradient check failed: max relative error {result.max_rel_error:.3e}"
        )
    return 0


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        # catch unknown subcommands early to suggest a close match
        positional = [a for a in argv if not a.startswith("-")]
        if positional and positional[0] not in _COMMANDS:
            close = difflib.get_close_matches(positional[0], _COMMANDS, n=1)
            hint = f" (did you mean {close[0]!r}?)" if close else ""
            raise _UsageError(f"unknown subcommand {positional[0]!r}{hint}")
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help exits 0
            return int(exc.code or 0)
        args._config_values = (
            _read_config_file(args.config) if args.config else {}
        )
        jobs = _resolve(args, "jobs", os.cpu_count() or 1)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        if args.command == "features":
            return _cmd_features(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(args, jobs)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "eval":
            return _cmd_eval(args, jobs)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        raise _UsageError(f"unknown subcommand {args.command!r}")
    except _UsageError as exc:
        print(f"gml2: usage error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError,) as exc:
        print(f"gml2: numerical failure: {exc}", file=sys.stderr)
        return 3
    except Gml2Error as exc:
        print(f"gml2: error [{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run())

"""Batch command line: synth, train-seg, train-cls, predict-seg, predict-cls, eval-seg, eval-cls.

Configuration is a flat ``key=value`` file (``#`` starts a comment) given by
``--config``; any key may also be overridden on the command line as
``--key value``. Unknown keys are rejected. Every output directory receives
the fully resolved configuration.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import AUGMENTATIONS, SynthParams, decode_prediction, read_dataset, resize_nearest, synth_generate
from .data.dataset import read_labels, write_dataset
from .data.netpbm import read_pgm, write_pgm
from .errors import ConfigInvalid, DatasetInvalid, GlaucnetError, IdMismatch, IoFailure
from .metrics import ClsReport, SegReport, ensemble_mean, write_report
from .models import Classifier, ClassifierConfig, XUnet, XUnetConfig, build_classifier, build_xunet, classifier_predict
from .pipeline import cls_arrays, expand_labels, seg_arrays
from .training import AdamState, TrainConfig, train_classifier, train_segmentation

log = logging.getLogger("glaucnet")

COMMANDS = ("synth", "train-seg", "train-cls", "predict-seg", "predict-cls", "eval-seg", "eval-cls")

# every tunable, with its default; the default's type is the key's type
DEFAULTS: dict[str, object] = {
    "seed": 0,
    "out": "",
    "data": "",
    "checkpoint": "",
    "pred": "",
    "truth": "",
    # synthetic data
    "count": 80,
    "image_size": 256,
    "disc_radius_min": 0.09,
    "disc_radius_max": 0.13,
    "disc_aspect_min": 0.85,
    "disc_aspect_max": 1.0,
    "cdr_min": 0.2,
    "cdr_max": 0.9,
    "center_jitter": 0.15,
    "noise": 0.02,
    "cdr_threshold": 0.6,
    # preprocessing
    "blur_window": 31,
    "crop_train": 72,
    "crop_eval": 72,
    "seg_input": 64,
    "cls_crop_train": 160,
    "cls_crop_eval": 128,
    "cls_scales": (48, 64, 80),
    "augment": "all",
    # architectures
    "xunet_depth": 3,
    "xunet_base": 16,
    "xunet_input_levels": 3,
    "se_reduction": 8,
    "block_depth": 1,
    "cls_stem": (16, 32),
    "cls_body_rates": (1, 2, 4),
    "cls_aspp_rates": (1, 2, 4),
    "cls_head_width": 32,
    "cls_image_pool": True,
    "cls_shared_scales": False,
    # optimisation
    "epochs": 200,
    "batch_size": 8,
    "lr": 1e-4,
    # decoding and metrics
    "t_cup": 0.25,
    "t_disc": 0.75,
    "threshold": 0.5,
}


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigInvalid(f"bad value for {key}: {raw!r}") from None
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


class RunConfig:
    """Resolved key=value settings: defaults, then the config file, then overrides."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value):
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigInvalid(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        cfg.update_from_text(_read_text(path), str(path))
        return cfg

    def update_from_text(self, text: str, source: str = "<config>"):
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"{source}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            self.set(key.strip(), value)

    def dump(self) -> str:
        return "".join(f"{k}={_format_value(v)}\n" for k, v in sorted(self.values.items()))

    def require(self, key: str) -> str:
        if not self.values[key]:
            raise ConfigInvalid(f"{key} must be set (--{key.replace('_', '-')} ...)")
        return self.values[key]

    # typed views onto the flat map

    def synth_params(self) -> SynthParams:
        v = self.values
        return SynthParams(
            image_size=v["image_size"],
            disc_radius=(v["disc_radius_min"], v["disc_radius_max"]),
            disc_aspect=(v["disc_aspect_min"], v["disc_aspect_max"]),
            cdr_range=(v["cdr_min"], v["cdr_max"]),
            center_jitter=v["center_jitter"],
            noise=v["noise"],
            cdr_threshold=v["cdr_threshold"],
            seed=v["seed"],
        )

    def xunet_config(self) -> XUnetConfig:
        v = self.values
        return XUnetConfig(depth=v["xunet_depth"], base_channels=v["xunet_base"],
                           input_levels=v["xunet_input_levels"], se_reduction=v["se_reduction"],
                           block_depth=v["block_depth"])

    def classifier_config(self) -> ClassifierConfig:
        v = self.values
        stem = v["cls_stem"]
        return ClassifierConfig(stem_channels=stem, stem_strides=(2,) * len(stem), body_rates=v["cls_body_rates"],
                                aspp_rates=v["cls_aspp_rates"], image_pool=v["cls_image_pool"],
                                head_width=v["cls_head_width"])

    def train_config(self) -> TrainConfig:
        v = self.values
        cfg = TrainConfig(epochs=v["epochs"], batch_size=v["batch_size"], seed=v["seed"], lr=v["lr"])
        cfg.validate()
        return cfg

    def augment_ops(self) -> tuple[str, ...]:
        choice = self.values["augment"].strip()
        if choice == "all":
            return AUGMENTATIONS
        if choice in ("", "none"):
            return ("identity",)
        ops = tuple(op.strip() for op in choice.split(","))
        bad = [op for op in ops if op not in AUGMENTATIONS]
        if bad:
            raise ConfigInvalid(f"unknown augmentation(s) {bad}; choose from {', '.join(AUGMENTATIONS)}")
        return ops


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_text(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _write_csv(path: Path, rows):
    try:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.require("out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    return out


def _log_config(cfg: RunConfig, out: Path, name: str = "config.txt"):
    text = cfg.dump()
    for line in text.splitlines():
        log.info("config %s", line)
    _write_text(out / name, text)


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


# commands


def cmd_synth(cfg: RunConfig) -> Path:
    params = cfg.synth_params()
    params.validate()
    if cfg["count"] < 1:
        raise ConfigInvalid("count must be >= 1")
    out = _out_dir(cfg)
    samples = synth_generate(params, cfg["count"])
    write_dataset(samples, out)
    keys = ["seed", "count", "image_size", "disc_radius_min", "disc_radius_max", "disc_aspect_min",
            "disc_aspect_max", "cdr_min", "cdr_max", "center_jitter", "noise", "cdr_threshold"]
    _write_text(out / "manifest.txt", "".join(f"{k}={_format_value(cfg[k])}\n" for k in keys))
    log.info("wrote %d samples to %s", len(samples), out)
    return out


def _loss_rows(history):
    return [["epoch", "loss"]] + [[str(i + 1), repr(float(v))] for i, v in enumerate(history)]


def _progress(tag):
    return lambda epoch, loss: log.info("%s epoch %d loss %.6f", tag, epoch + 1, loss)


def cmd_train_seg(cfg: RunConfig) -> Path:
    train_cfg = cfg.train_config()
    xcfg = cfg.xunet_config()
    xcfg.validate()
    samples = read_dataset(cfg.require("data"), need_masks=True)
    out = _out_dir(cfg)
    _log_config(cfg, out)
    inputs, targets, _ = seg_arrays(samples, cfg["crop_train"], cfg["seg_input"], cfg["blur_window"],
                                    cfg.augment_ops())
    model = build_xunet(xcfg, cfg["seed"])
    model.check_input(inputs)
    model.meta = {"input_sizes": [cfg["seg_input"]]}
    state = AdamState(lr=train_cfg.lr)
    history = train_segmentation(model, inputs, targets, train_cfg, state, on_epoch=_progress("seg"))
    save_checkpoint(model, state, out / "model.ckpt")
    _write_csv(out / "loss.csv", _loss_rows(history))
    return out


def cmd_train_cls(cfg: RunConfig) -> Path:
    train_cfg = cfg.train_config()
    ccfg = cfg.classifier_config()
    ccfg.validate()
    scales = cfg["cls_scales"]
    if not scales:
        raise ConfigInvalid("cls_scales must list at least one input size")
    small = [s for s in scales if s < ccfg.min_input_size]
    if small:
        raise ConfigInvalid(f"cls_scales {small} below the classifier minimum {ccfg.min_input_size}")
    samples = read_dataset(cfg.require("data"), need_labels=True)
    out = _out_dir(cfg)
    _log_config(cfg, out)
    ops = cfg.augment_ops()
    groups, _ = cls_arrays(samples, cfg["cls_crop_train"], scales, cfg["blur_window"], ops)
    labels = expand_labels([s.glaucoma_label for s in samples], ops)
    # one model per scale by default; cls_shared_scales trains a single model on all of them
    if cfg["cls_shared_scales"]:
        plans = [("", list(scales), groups)]
    else:
        plans = [(f"_{s}", [s], [g]) for s, g in zip(scales, groups)]
    for i, (suffix, sizes, data) in enumerate(plans):
        model = build_classifier(ccfg, cfg["seed"] + i)
        model.meta = {"input_sizes": sizes}
        state = AdamState(lr=train_cfg.lr)
        history = train_classifier(model, data, labels, train_cfg, state, on_epoch=_progress(f"cls{suffix}"))
        save_checkpoint(model, state, out / f"model{suffix}.ckpt")
        _write_csv(out / f"loss{suffix}.csv", _loss_rows(history))
    return out


def _load(path, kind):
    model, _ = load_checkpoint(path)
    if model.kind != kind:
        raise ConfigInvalid(f"{path} holds a {model.kind} model, expected {kind}")
    return model


def _input_sizes(model, fallback) -> list[int]:
    sizes = model.meta.get("input_sizes")
    return [int(s) for s in sizes] if sizes else list(fallback)


def cmd_predict_seg(cfg: RunConfig) -> Path:
    model = _load(cfg.require("checkpoint"), XUnet.kind)
    size = _input_sizes(model, [cfg["seg_input"]])[0]
    crop = cfg["crop_eval"]
    samples = read_dataset(cfg.require("data"))
    out = _out_dir(cfg)
    _log_config(cfg, out)
    (out / "masks").mkdir(exist_ok=True)
    inputs, _, rois = seg_arrays(samples, crop, size, cfg["blur_window"], with_masks=False)
    model.check_input(inputs)
    rows = [["id", "x0", "y0", "size"]]
    for sl in _batches(len(samples), cfg["batch_size"]):
        pred = model.forward(inputs[sl])
        for s, p, (x0, y0) in zip(samples[sl], pred, rois[sl]):
            mask = decode_prediction(p, cfg["t_cup"], cfg["t_disc"])
            write_pgm(resize_nearest(mask, crop, crop), out / "masks" / f"{s.id}.pgm")
            rows.append([s.id, str(x0), str(y0), str(crop)])
    _write_csv(out / "rois.csv", rows)
    return out


def cmd_predict_cls(cfg: RunConfig) -> Path:
    paths = [p.strip() for p in cfg.require("checkpoint").split(",") if p.strip()]
    models = [_load(p, Classifier.kind) for p in paths]
    samples = read_dataset(cfg.require("data"))
    out = _out_dir(cfg)
    _log_config(cfg, out)
    # one probability column per (model, scale); the ensemble is their mean
    columns = []
    for model in models:
        sizes = _input_sizes(model, cfg["cls_scales"])
        groups, _ = cls_arrays(samples, cfg["cls_crop_eval"], sizes, cfg["blur_window"])
        for x in groups:
            batches = _batches(len(samples), cfg["batch_size"])
            columns.append(np.concatenate([classifier_predict(model, x[sl]) for sl in batches]))
    probs = np.stack(columns, axis=1)
    rows = [["id", "prob"]]
    for s, row in zip(samples, probs):
        rows.append([s.id, repr(ensemble_mean(row))])
    _write_csv(out / "probs.csv", rows)
    return out


def _check_ids(expected, found, what):
    missing = [i for i in expected if i not in found]
    if missing:
        raise IdMismatch(f"id {missing[0]} has no {what}" + (f" ({len(missing)} missing)" if len(missing) > 1 else ""))
    extra = [i for i in found if i not in expected]
    if extra:
        raise IdMismatch(f"id {extra[0]} is not in the ground truth")


def _read_rois(path: Path) -> dict[str, tuple[int, int, int]]:
    if not path.is_file():
        raise DatasetInvalid(f"{path.parent} has no rois.csv")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["id", "x0", "y0", "size"]:
            raise DatasetInvalid("rois.csv header must be id,x0,y0,size")
        try:
            return {r[0]: (int(r[1]), int(r[2]), int(r[3])) for r in reader}
        except (ValueError, IndexError):
            raise DatasetInvalid("rois.csv has a malformed row") from None


def _summary(path: Path, pairs):
    _write_csv(path, [["metric", "value"]] + [[k, repr(float(v))] for k, v in pairs])


def cmd_eval_seg(cfg: RunConfig) -> Path:
    pred_dir, truth_dir = Path(cfg.require("pred")), cfg.require("truth")
    truth = read_dataset(truth_dir, need_masks=True)
    rois = _read_rois(pred_dir / "rois.csv")
    _check_ids([s.id for s in truth], list(rois), "prediction")
    out = _out_dir(cfg)
    _log_config(cfg, out)
    report = SegReport()
    for s in truth:
        x0, y0, size = rois[s.id]
        path = pred_dir / "masks" / f"{s.id}.pgm"
        if not path.is_file():
            raise IdMismatch(f"id {s.id} has no predicted mask")
        pred = read_pgm(path)
        true = s.mask[y0:y0 + size, x0:x0 + size]
        if pred.shape != true.shape:
            raise DatasetInvalid(f"predicted mask {s.id} is {pred.shape}, roi gives {true.shape}")
        report.add(s.id, pred, true)
    write_report(report, out / "seg_report.csv")
    _summary(out / "summary.csv", [("mean_cup_dice", report.mean_cup_dice),
                                   ("mean_disc_dice", report.mean_disc_dice), ("mae_cdr", report.mae_cdr)])
    return out


def cmd_eval_cls(cfg: RunConfig) -> Path:
    pred_dir, truth_dir = Path(cfg.require("pred")), cfg.require("truth")
    labels = read_labels(truth_dir)
    path = pred_dir / "probs.csv"
    if not path.is_file():
        raise DatasetInvalid(f"{pred_dir} has no probs.csv")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["id", "prob"]:
            raise DatasetInvalid("probs.csv header must be id,prob")
        try:
            probs = {r[0]: float(r[1]) for r in reader}
        except (ValueError, IndexError):
            raise DatasetInvalid("probs.csv has a malformed row") from None
    _check_ids(list(labels), list(probs), "probability")
    if any(g is None for g, _ in labels.values()):
        raise DatasetInvalid("ground truth lacks glaucoma labels")
    out = _out_dir(cfg)
    _log_config(cfg, out)
    ids = list(labels)
    report = ClsReport(ids, [probs[i] for i in ids], [labels[i][0] for i in ids], cfg["threshold"])
    write_report(report, out / "cls_report.csv")
    _summary(out / "summary.csv", [("auc", report.auc), ("sensitivity", report.sensitivity),
                                   ("specificity", report.specificity), ("threshold", report.threshold)])
    return out


HANDLERS = {
    "synth": cmd_synth,
    "train-seg": cmd_train_seg,
    "train-cls": cmd_train_cls,
    "predict-seg": cmd_predict_seg,
    "predict-cls": cmd_predict_cls,
    "eval-seg": cmd_eval_seg,
    "eval-cls": cmd_eval_cls,
}


def _parse_overrides(tokens) -> list[tuple[str, str]]:
    pairs, i = [], 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigInvalid(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigInvalid(f"{tok} needs a value")
            key, value = tok[2:], tokens[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def build_config(config_path, overrides) -> RunConfig:
    cfg = RunConfig.from_file(config_path) if config_path else RunConfig()
    for key, value in overrides:
        cfg.set(key, value)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="glaucnet", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        cfg = build_config(args.config, _parse_overrides(rest))
        HANDLERS[args.command](cfg)
    except GlaucnetError as exc:
        print(f"glaucnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

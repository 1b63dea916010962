"""Flat run configuration: defaults, ``key = value`` files and flag overrides."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import adapt as ad
from . import neuralnet as nn
from . import synthworld as sw
from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    name: str
    kind: type
    default: object
    help: str


def _list(kind):
    def parse(text):
        text = str(text).strip()
        return tuple(kind(x.strip()) for x in text.split(",") if x.strip()) if text else ()
    parse.__name__ = f"list[{kind.__name__}]"
    return parse


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_bool.__name__ = "bool"

_A = ad.AdaptConfig()
_P = nn.PretrainConfig()
_D = sw.DetectorModel()
_S, _T = sw.SOURCE_DOMAIN, sw.TARGET_DOMAIN


def _classes(spec):
    return ",".join(c for c, p in zip(sw.CLASS_NAMES, spec.class_mixture) if p > 0)


KEYS = [
    Key("seed", int, 0, "master seed; per-video streams derive from it"),
    Key("data_dir", str, "data", "dataset directory written by gen"),
    Key("out_dir", str, "out", "directory for checkpoints, predictions, reports and tables"),
    Key("checkpoint", str, "", "checkpoint path (default: <out_dir>/checkpoint.ckp)"),
    Key("embedding", str, "", "embedding space path (default: <data_dir>/embedding.emb)"),
    Key("predictions", str, "", "prediction directory read by eval (default: <out_dir>/predictions)"),
    # world
    Key("n_source", int, 20, "source (pretraining) videos"),
    Key("source_frames", int, 600, "frames per source video"),
    Key("n_target", int, 12, "target benchmark videos"),
    Key("target_frames", int, sw.BENCHMARK_FRAMES, "frames per target video"),
    Key("source_classes", str, _classes(_S), "source classes (uniform mixture)"),
    Key("source_damping", float, _S.amplitude_damping, "source motion amplitude factor"),
    Key("source_nuisance_mean", float, _S.nuisance_mean, "source nuisance mean"),
    Key("source_nuisance_scale", float, _S.nuisance_scale, "source nuisance scale"),
    Key("source_obs_noise", float, _S.obs_noise_sigma, "source observation noise sigma"),
    Key("target_classes", str, _classes(_T), "target classes (uniform mixture)"),
    Key("target_damping", float, _T.amplitude_damping, "target motion amplitude factor"),
    Key("target_nuisance_mean", float, _T.nuisance_mean, "target nuisance mean"),
    Key("target_nuisance_scale", float, _T.nuisance_scale, "target nuisance scale"),
    Key("target_obs_noise", float, _T.obs_noise_sigma, "target observation noise sigma"),
    Key("pixel_noise_sigma", float, _D.pixel_noise_sigma, "detector pixel noise (px)"),
    Key("drop_prob", float, _D.drop_prob, "detector per-joint dropout probability"),
    # pretraining
    Key("pretrain_epochs", int, _P.epochs, "pretraining epochs"),
    Key("pretrain_batch", int, _P.batch, "pretraining minibatch"),
    Key("pretrain_lr", float, _P.lr, "pretraining peak learning rate"),
    Key("pretrain_min_lr", float, _P.min_lr, "pretraining final learning rate"),
    # adaptation
    Key("lambda1", float, _A.lambda1, "2D projection loss weight"),
    Key("lambda2", float, _A.lambda2, "motion-text alignment loss weight (0 disables alignment)"),
    Key("sigma", float, _A.sigma, "fill-in similarity threshold"),
    Key("alpha", float, _A.alpha, "EMA weight of the stored 2D pose"),
    Key("T", int, _A.T, "segment length (frames)"),
    Key("batch", int, _A.batch, "segments per fine-tuning step"),
    Key("epochs", int, _A.epochs, "adaptation epochs"),
    Key("steps_per_epoch", int, 0, "fine-tuning steps per epoch (0: ceil(2 * kept segments / batch))"),
    Key("base_lr", float, _A.base_lr, "adaptation learning rate"),
    Key("min_lr", float, _A.min_lr, "cosine schedule floor"),
    Key("denoise_window", int, _A.denoise_window, "pose smoothing window (odd)"),
    Key("shape_window", int, _A.shape_window, "shape averaging window (odd)"),
    Key("weight_floor", float, _A.weight_floor, "minimum segment sampling weight"),
    Key("use_ema", _bool, _A.use_ema, "EMA refinement of visible 2D keypoints"),
    Key("use_fill", _bool, _A.use_fill, "similarity-gated fill-in of missing keypoints"),
    Key("label_noise", float, 0.0, "fraction of segment labels corrupted during adapt"),
    # harness
    Key("seeds", int, 10, "number of seeds for ablate and sweep"),
    Key("sigmas", _list(float), (0.55, 0.60, 0.65, 0.70, 0.75, 0.80), "fill-in threshold grid"),
    Key("alphas", _list(float), (0.75, 0.80, 0.85, 0.90, 0.95), "EMA weight grid"),
    Key("corruption_rates", _list(float), (0.0, 0.1, 0.25), "label corruption grid"),
]
KEY_MAP = {k.name: k for k in KEYS}


def defaults() -> dict:
    return {k.name: k.default for k in KEYS}


def coerce(name: str, value):
    if name not in KEY_MAP:
        raise ConfigError(f"unknown config key {name!r}")
    key = KEY_MAP[name]
    try:
        return key.kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r} ({exc})") from None


def parse_text(text: str, origin: str = "<config>") -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected 'key = value', got {raw.strip()!r}")
        name, value = (s.strip() for s in line.split("=", 1))
        try:
            out[name] = coerce(name, value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{n}: {exc}") from None
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then file values, then flag overrides (flags win)."""
    cfg = defaults()
    for src in (file_values or {}, overrides or {}):
        for name, value in src.items():
            cfg[name] = coerce(name, value)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        adapt_config(cfg)
        for side in ("source", "target"):
            domain_spec(cfg, side)
        detector(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    for name in ("source_frames", "target_frames"):
        if cfg[name] <= 0 or cfg[name] % cfg["T"]:
            raise ConfigError(f"{name} must be a positive multiple of T={cfg['T']}")
    if cfg["seeds"] < 1:
        raise ConfigError("seeds must be at least 1")
    if not 0.0 <= cfg["label_noise"] <= 1.0:
        raise ConfigError("label_noise must lie in [0, 1]")


def dumps(cfg: dict) -> str:
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(repr(x) for x in v)
        return str(v).lower() if isinstance(v, bool) else str(v)
    return "".join(f"{k.name} = {fmt(cfg[k.name])}\n" for k in KEYS)


# --------------------------------------------------------------------------- views

def adapt_config(cfg: dict) -> ad.AdaptConfig:
    return ad.AdaptConfig(
        lambda1=cfg["lambda1"], lambda2=cfg["lambda2"], sigma=cfg["sigma"], alpha=cfg["alpha"],
        T=cfg["T"], batch=cfg["batch"], epochs=cfg["epochs"],
        steps_per_epoch=cfg["steps_per_epoch"] or None, base_lr=cfg["base_lr"], min_lr=cfg["min_lr"],
        denoise_window=cfg["denoise_window"], shape_window=cfg["shape_window"],
        weight_floor=cfg["weight_floor"], use_ema=cfg["use_ema"], use_fill=cfg["use_fill"],
    )


def domain_spec(cfg: dict, side: str) -> sw.DomainSpec:
    names = [c.strip() for c in cfg[f"{side}_classes"].split(",") if c.strip()]
    unknown = [c for c in names if c not in sw.CLASS_NAMES]
    if unknown or not names:
        raise ConfigError(f"{side}_classes: unknown or empty class list {cfg[f'{side}_classes']!r}")
    mix = tuple(1.0 / len(names) if c in names else 0.0 for c in sw.CLASS_NAMES)
    return sw.DomainSpec(side, mix, cfg[f"{side}_damping"], cfg[f"{side}_nuisance_mean"],
                         cfg[f"{side}_nuisance_scale"], cfg[f"{side}_obs_noise"])


def detector(cfg: dict) -> sw.DetectorModel:
    return sw.DetectorModel(cfg["pixel_noise_sigma"], cfg["drop_prob"])


def pretrain_config(cfg: dict) -> nn.PretrainConfig:
    return nn.PretrainConfig(cfg["pretrain_epochs"], cfg["pretrain_batch"], cfg["pretrain_lr"],
                             cfg["pretrain_min_lr"], cfg["seed"])


def paths(cfg: dict) -> dict:
    data, out = Path(cfg["data_dir"]), Path(cfg["out_dir"])
    return {
        "source": data / "source",
        "target": data / "target",
        "embedding": Path(cfg["embedding"]) if cfg["embedding"] else data / "embedding.emb",
        "checkpoint": Path(cfg["checkpoint"]) if cfg["checkpoint"] else out / "checkpoint.ckp",
        "predictions": Path(cfg["predictions"]) if cfg["predictions"] else out / "predictions",
        "out": out,
    }

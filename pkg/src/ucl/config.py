"""Run configuration: a strict JSON document with all defaults materialized.

Sections: ``data``, ``augmentation``, ``encoder``, ``pretrain``, ``probe``,
``eval`` and ``seed``.  An optional top-level ``preset`` ("desk" or
"paper") selects the defaults the document is layered onto.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .augment import AugmentationPolicy
from .contrastive import DENOMINATORS
from .data import DomainSpec, SplitSpec
from .model import PAPER_CLASSIFIER_WIDTHS, ClassifierConfig, EncoderConfig, HeadConfig
from .training import FEATURE_SOURCES, SgdConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    domains: list = field(default_factory=list)  # DomainSpec
    train_domain: str = "synthA"
    split: SplitSpec = field(default_factory=lambda: SplitSpec(test_fraction=1 / 6, seed=0))
    root: Optional[str] = None  # defaults to <out>/data


@dataclass
class PretrainSection:
    sgd: SgdConfig
    tau: float = 0.5
    denominator: str = "exclude_self"
    head_hidden_dim: int = 128
    proj_dim: int = 64


@dataclass
class ProbeSection:
    sgd: SgdConfig
    widths: tuple = tuple(w // 16 for w in PAPER_CLASSIFIER_WIDTHS)
    feature_source: str = "encoder"
    standardize: bool = True


@dataclass
class EvalSection:
    test_domains: list = field(default_factory=list)  # empty -> every configured domain


@dataclass
class RunConfig:
    data: DataSection
    augmentation: AugmentationPolicy
    encoder: EncoderConfig
    pretrain: PretrainSection
    probe: ProbeSection
    eval: EvalSection
    seed: int = 0
    preset: str = "desk"

    # derived views
    def head_config(self) -> HeadConfig:
        return HeadConfig(self.encoder.feature_dim, self.pretrain.head_hidden_dim, self.pretrain.proj_dim)

    def classifier_config(self) -> ClassifierConfig:
        width = self.encoder.feature_dim if self.probe.feature_source == "encoder" else self.pretrain.proj_dim
        return ClassifierConfig(input_dim=width, widths=self.probe.widths)

    def domain(self, name: str) -> DomainSpec:
        for d in self.data.domains:
            if d.name == name:
                return d
        raise ConfigError(f"data.domains has no domain named {name!r}")

    def eval_domains(self) -> list[str]:
        return list(self.eval.test_domains) or [d.name for d in self.data.domains]

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    def with_overrides(self, **sections) -> "RunConfig":
        """Copy with nested overrides, e.g. ``augmentation={"jitter_enabled": False}``."""
        d = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(d.get(key), dict):
                _deep_update(d[key], value)
            else:
                d[key] = value
        return from_dict(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _deep_update(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _deep_update(dst[k], v)
        else:
            dst[k] = v


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------- presets

def _desk_domains() -> list[dict]:
    common = dict(strength=0.3, n_real=600, n_fake=600, image_size=32, photometric=0.4)
    return [
        dict(name="synthA", artifact="color_shift", seed=101, **common),
        dict(name="synthB", artifact="boundary_seam", seed=202, **common),
        dict(name="synthC", artifact="lowpass_patch", seed=303, **common),
    ]


PRESETS: dict[str, dict] = {
    "desk": {
        "data": {"domains": _desk_domains(), "train_domain": "synthA",
                 "split": {"test_fraction": 1 / 6, "seed": 0}, "root": None},
        "augmentation": AugmentationPolicy(output_size=32).to_dict(),
        "encoder": _plain(asdict(EncoderConfig())),
        "pretrain": {"sgd": asdict(SgdConfig(lr=0.05, step_size=6, descending_rate=0.5, batch_size=40, epochs=20)),
                     "tau": 0.5, "denominator": "exclude_self", "head_hidden_dim": 128, "proj_dim": 64},
        "probe": {"sgd": asdict(SgdConfig(lr=0.03, step_size=400, descending_rate=0.8, batch_size=256, epochs=500)),
                  "widths": [w // 16 for w in PAPER_CLASSIFIER_WIDTHS], "feature_source": "encoder",
                  "standardize": True},
        "eval": {"test_domains": []},
        "seed": 0,
    },
}
PRESETS["paper"] = copy.deepcopy(PRESETS["desk"])
_paper = PRESETS["paper"]
_paper["encoder"] = _plain(asdict(EncoderConfig.paper()))
_paper["augmentation"]["output_size"] = _paper["encoder"]["input_size"]
for _d in _paper["data"]["domains"]:
    _d["image_size"] = _paper["encoder"]["input_size"]
_paper["pretrain"].update(sgd=asdict(SgdConfig(lr=5e-4, step_size=6, descending_rate=0.5, batch_size=40, epochs=20)),
                          head_hidden_dim=2048, proj_dim=64)
_paper["probe"].update(sgd=asdict(SgdConfig(lr=3e-1, step_size=400, descending_rate=0.8, batch_size=6000,
                                            epochs=5000)),
                       widths=list(PAPER_CLASSIFIER_WIDTHS))


# ---------------------------------------------------------------- parsing

def _check_keys(d: Any, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key {prefix}{unknown[0]}")


def _build(cls, d: dict, where: str):
    names = [f.name for f in fields(cls)]
    _check_keys(d, names, where)
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _positive(value, key: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ConfigError(f"{key} must be positive, got {value!r}")


def from_dict(doc: dict) -> RunConfig:
    """Validate ``doc`` layered over its preset and build a RunConfig."""
    _check_keys(doc, ["preset", "data", "augmentation", "encoder", "pretrain", "probe", "eval", "seed"], "")
    preset = doc.get("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
    merged = copy.deepcopy(PRESETS[preset])
    for key in ("data", "augmentation", "encoder", "pretrain", "probe", "eval"):
        if key in doc:
            section = doc[key]
            _check_keys(section, merged[key].keys(), key)
            for sub in ("split", "sgd"):
                if sub in section and isinstance(section[sub], dict):
                    _check_keys(section[sub], merged[key][sub].keys(), f"{key}.{sub}")
            _deep_update(merged[key], section)
    if "seed" in doc:
        merged["seed"] = doc["seed"]

    seed = merged["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")

    data = merged["data"]
    if not data["domains"]:
        raise ConfigError("data.domains must list at least one domain")
    domains = [_build(DomainSpec, d, f"data.domains[{i}]") for i, d in enumerate(data["domains"])]
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ConfigError("data.domains: domain names must be unique")
    split = _build(SplitSpec, data["split"], "data.split")
    if data["train_domain"] not in names:
        raise ConfigError(f"data.train_domain {data['train_domain']!r} is not among data.domains")

    aug = _build(AugmentationPolicy, merged["augmentation"], "augmentation")
    enc = _build(EncoderConfig, merged["encoder"], "encoder")
    if aug.output_size != enc.input_size:
        raise ConfigError("augmentation.output_size must equal encoder.input_size")

    pre = dict(merged["pretrain"])
    for k in ("lr",):
        _positive(pre["sgd"][k], f"pretrain.sgd.{k}")
    _positive(pre["tau"], "pretrain.tau")
    if pre["denominator"] not in DENOMINATORS:
        raise ConfigError(f"pretrain.denominator must be one of {DENOMINATORS}")
    if pre["sgd"]["batch_size"] < 2:
        raise ConfigError("pretrain.sgd.batch_size must be >= 2")
    pre["sgd"] = _build(SgdConfig, pre["sgd"], "pretrain.sgd")
    pretrain = _build(PretrainSection, pre, "pretrain")

    pr = dict(merged["probe"])
    _positive(pr["sgd"]["lr"], "probe.sgd.lr")
    if pr["feature_source"] not in FEATURE_SOURCES:
        raise ConfigError(f"probe.feature_source must be one of {FEATURE_SOURCES}")
    pr["sgd"] = _build(SgdConfig, pr["sgd"], "probe.sgd")
    pr["widths"] = tuple(pr["widths"])
    probe = _build(ProbeSection, pr, "probe")

    ev = _build(EvalSection, merged["eval"], "eval")
    for name in ev.test_domains:
        if name not in names:
            raise ConfigError(f"eval.test_domains: unknown domain {name!r}")

    cfg = RunConfig(DataSection(domains, data["train_domain"], split, data["root"]), aug, enc, pretrain, probe, ev,
                    seed, preset)
    try:
        cfg.head_config()
        cfg.classifier_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def preset(name: str = "desk") -> RunConfig:
    return from_dict({"preset": name})


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    return from_dict(doc)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

"""End-to-end runs: data generation, pretraining, probing, evaluation and ablation grids.

Every function takes a validated :class:`RunConfig`; the file-writing
``run_*`` entry points back the command-line interface, while the in-memory
helpers (``pretrain_encoder``, ``fit_probe``, ``evaluate_domains``) are what
experiments and tests compose directly.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint as ckpt_io
from .augment import ABLATION_ROWS, AugmentationPolicy
from .checkpoint import Checkpoint
from .config import RunConfig, save_config
from .data import ImageSample, generate_synthetic_domain, load_dataset, pixel_checksum, save_dataset, split
from .metrics import EvalReport, RocCurve, evaluate
from .model import ParamSet, config_dict, init_params
from .plot import roc_svg
from .training import (
    TrainReport,
    calibrate_batch_norm,
    extract_features,
    predict_fake_proba,
    pretrain,
    train_probe,
)

log = logging.getLogger(__name__)

GRIDS = ("augmentation-rows", "feature-source", "denominator", "init")


# ---------------------------------------------------------------- layout

@dataclass
class Layout:
    """Where a run keeps its files under ``out``."""

    out: Path
    data_root: Path

    @classmethod
    def for_config(cls, cfg: RunConfig, out) -> "Layout":
        out = Path(out)
        return cls(out, Path(cfg.data.root) if cfg.data.root else out / "data")

    def domain_dir(self, domain: str, part: str) -> Path:
        return self.data_root / domain / part

    @property
    def encoder_ckpt(self) -> Path:
        return self.out / "encoder.ckpt"

    @property
    def classifier_ckpt(self) -> Path:
        return self.out / "classifier.ckpt"

    @property
    def eval_dir(self) -> Path:
        return self.out / "eval"

    def ablate_dir(self, grid: str) -> Path:
        return self.out / "ablate" / grid


def _hash_comment(config_hash: str) -> str:
    return f"# config_hash={config_hash}\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _persist_config(cfg: RunConfig, layout: Layout) -> None:
    layout.out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, layout.out / "config.json")


# ---------------------------------------------------------------- data

def domain_splits(cfg: RunConfig, name: str) -> tuple[list[ImageSample], list[ImageSample]]:
    """Generate a configured domain in memory and split it (no files touched)."""
    return split(generate_synthetic_domain(cfg.domain(name)), cfg.data.split)


def run_gen_data(cfg: RunConfig, out, force: bool = False) -> dict[str, dict]:
    """Write ``<data_root>/<domain>/{train,test}`` for every configured domain."""
    layout = Layout.for_config(cfg, out)
    targets = [layout.data_root / d.name for d in cfg.data.domains]
    existing = [t for t in targets if t.exists() and any(t.iterdir())]
    if existing and not force:
        raise FileExistsError(f"dataset directory already exists: {existing[0]} (use --force to overwrite)")
    _persist_config(cfg, layout)
    summary = {}
    for spec, target in zip(cfg.data.domains, targets):
        if target.exists():
            shutil.rmtree(target)
        samples = generate_synthetic_domain(spec)
        train, test = split(samples, cfg.data.split)
        meta = {"config_hash": cfg.config_hash(), "domain": config_dict(spec), "checksum": pixel_checksum(samples)}
        for part, subset in (("train", train), ("test", test)):
            save_dataset(subset, target / part, {**meta, "part": part, "count": len(subset)})
        summary[spec.name] = {"train": len(train), "test": len(test), "checksum": meta["checksum"]}
        log.info("wrote %s: %d train / %d test", target, len(train), len(test))
    return summary


def load_part(layout: Layout, domain: str, part: str) -> list[ImageSample]:
    d = layout.domain_dir(domain, part)
    if not d.exists():
        raise FileNotFoundError(f"dataset directory not found: {d} (run gen-data first)")
    samples = load_dataset(d)
    if not samples:
        raise ValueError(f"dataset directory {d} is empty")
    return samples


# ---------------------------------------------------------------- in-memory stages

def pretrain_encoder(cfg: RunConfig, train: Sequence[ImageSample], policy: Optional[AugmentationPolicy] = None,
                     denominator: Optional[str] = None) -> tuple[ParamSet, TrainReport]:
    """Contrastive pretraining; returns encoder and projection-head parameters together."""
    return pretrain(train, policy or cfg.augmentation, cfg.encoder, cfg.pretrain.sgd, cfg.seed,
                    head_config=cfg.head_config(), tau=cfg.pretrain.tau,
                    denominator=denominator or cfg.pretrain.denominator, config_hash=cfg.config_hash())


def random_encoder(cfg: RunConfig, train: Sequence[ImageSample]) -> ParamSet:
    """Frozen, untrained encoder (and head) with batch-norm statistics filled from ``train``."""
    params = init_params(cfg.encoder, cfg.seed).merged(init_params(cfg.head_config(), cfg.seed + 1))
    return calibrate_batch_norm(params, cfg.encoder, train, batch_size=cfg.pretrain.sgd.batch_size, seed=cfg.seed)


def fit_probe(cfg: RunConfig, encoder: ParamSet, train: Sequence[ImageSample],
              source: Optional[str] = None) -> tuple[ParamSet, TrainReport]:
    source = source or cfg.probe.feature_source
    feats, labels = extract_features(encoder, cfg.encoder, train, source)
    cc = replace(cfg.classifier_config(), input_dim=feats.shape[1])
    return train_probe(feats, labels, cc, cfg.probe.sgd, cfg.seed, cfg.config_hash(), cfg.probe.standardize)


def score(cfg: RunConfig, encoder: ParamSet, classifier: ParamSet, samples: Sequence[ImageSample],
          source: Optional[str] = None) -> np.ndarray:
    """Per-sample probability of "fake"."""
    source = source or cfg.probe.feature_source
    feats, _ = extract_features(encoder, cfg.encoder, samples, source)
    cc = replace(cfg.classifier_config(), input_dim=feats.shape[1])
    return predict_fake_proba(feats, classifier, cc)


def evaluate_domains(cfg: RunConfig, encoder: ParamSet, classifier: ParamSet,
                     tests: dict[str, Sequence[ImageSample]], source: Optional[str] = None,
                     **meta) -> dict[str, tuple[EvalReport, RocCurve]]:
    out = {}
    for name, samples in tests.items():
        s = score(cfg, encoder, classifier, samples, source)
        labels = [x.target for x in samples]
        out[name] = evaluate(s, labels, cfg.data.train_domain, name, config_hash=cfg.config_hash(), **meta)
    return out


@dataclass
class ExperimentResult:
    aucs: dict = field(default_factory=dict)  # test domain -> AUC
    results: dict = field(default_factory=dict)  # test domain -> (EvalReport, RocCurve)
    encoder: Optional[ParamSet] = None
    classifier: Optional[ParamSet] = None


def run_experiment(cfg: RunConfig, train: Sequence[ImageSample], tests: dict[str, Sequence[ImageSample]],
                   policy: Optional[AugmentationPolicy] = None, source: Optional[str] = None,
                   denominator: Optional[str] = None, pretrained: bool = True,
                   encoder: Optional[ParamSet] = None) -> ExperimentResult:
    """Pretrain (or take ``encoder``), probe, and evaluate on every test set."""
    if encoder is None:
        encoder = pretrain_encoder(cfg, train, policy, denominator)[0] if pretrained else random_encoder(cfg, train)
    classifier, _ = fit_probe(cfg, encoder, train, source)
    results = evaluate_domains(cfg, encoder, classifier, tests, source)
    return ExperimentResult({k: r.auc for k, (r, _) in results.items()}, results, encoder, classifier)


# ---------------------------------------------------------------- file-backed commands

def run_pretrain(cfg: RunConfig, out) -> TrainReport:
    layout = Layout.for_config(cfg, out)
    train = load_part(layout, cfg.data.train_domain, "train")
    _persist_config(cfg, layout)
    params, report = pretrain_encoder(cfg, train)
    digest = ckpt_io.save(Checkpoint(params, "encoder", cfg.to_dict(), cfg.config_hash(), cfg.seed,
                                     {"train_domain": cfg.data.train_domain}), layout.encoder_ckpt)
    _write_json(layout.out / "pretrain_report.json",
                {**json.loads(report.to_json()), "checkpoint": layout.encoder_ckpt.name, "checkpoint_sha256": digest})
    (layout.out / "pretrain_loss.csv").write_text(_hash_comment(cfg.config_hash()) + report.to_csv(), encoding="utf-8")
    return report


def run_probe(cfg: RunConfig, out, encoder_path=None) -> TrainReport:
    layout = Layout.for_config(cfg, out)
    enc = ckpt_io.load(encoder_path or layout.encoder_ckpt)
    if enc.kind != "encoder":
        raise ValueError(f"{encoder_path or layout.encoder_ckpt} holds a {enc.kind!r} checkpoint, not an encoder")
    train = load_part(layout, cfg.data.train_domain, "train")
    _persist_config(cfg, layout)
    params, report = fit_probe(cfg, enc.params, train)
    meta = {"feature_source": cfg.probe.feature_source, "encoder_config_hash": enc.config_hash,
            "input_dim": int(params["cls.fc1.weight"].shape[0])}
    digest = ckpt_io.save(Checkpoint(params, "classifier", cfg.to_dict(), cfg.config_hash(), cfg.seed, meta),
                          layout.classifier_ckpt)
    _write_json(layout.out / "probe_report.json",
                {**json.loads(report.to_json()), **meta, "checkpoint": layout.classifier_ckpt.name,
                 "checkpoint_sha256": digest})
    (layout.out / "probe_loss.csv").write_text(_hash_comment(cfg.config_hash()) + report.to_csv(), encoding="utf-8")
    return report


def _write_eval(directory: Path, results: dict[str, tuple[EvalReport, RocCurve]], config_hash: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, (report, roc) in results.items():
        stem = f"{report.train_domain}__{name}"
        (directory / f"{stem}.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (directory / f"{stem}.csv").write_text(roc.to_csv(config_hash), encoding="utf-8")


def run_eval(cfg: RunConfig, out, encoder_path=None, classifier_path=None,
             data_dirs: Optional[Sequence] = None) -> dict[str, EvalReport]:
    """Score the test split of every evaluation domain (or each of ``data_dirs``)."""
    layout = Layout.for_config(cfg, out)
    enc_path = Path(encoder_path or layout.encoder_ckpt)
    cls_path = Path(classifier_path or layout.classifier_ckpt)
    enc, cls = ckpt_io.load(enc_path), ckpt_io.load(cls_path)
    if data_dirs:
        tests = {}
        for d in data_dirs:
            samples = load_dataset(d)
            if not samples:
                raise ValueError(f"dataset directory {d} is empty")
            tests[samples[0].domain] = samples
    else:
        tests = {name: load_part(layout, name, "test") for name in cfg.eval_domains()}
    source = cls.meta.get("feature_source", cfg.probe.feature_source)
    _persist_config(cfg, layout)
    results = evaluate_domains(cfg, enc.params, cls.params, tests, source,
                               checkpoint_hash=ckpt_io.file_hash(cls_path))
    _write_eval(layout.eval_dir, results, cfg.config_hash())
    return {k: r for k, (r, _) in results.items()}


def run_roc(cfg: RunConfig, out) -> Path:
    """Render every ROC CSV under ``<out>/eval`` into one SVG."""
    layout = Layout.for_config(cfg, out)
    files = sorted(layout.eval_dir.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no ROC CSV files in {layout.eval_dir} (run eval first)")
    curves = {f.stem.replace("__", " -> "): RocCurve.from_csv(f.read_text(encoding="utf-8")) for f in files}
    target = layout.eval_dir / "roc.svg"
    target.write_text(roc_svg(curves, f"ROC (trained on {cfg.data.train_domain})", cfg.config_hash()),
                      encoding="utf-8")
    return target


# ---------------------------------------------------------------- ablation grids

def grid_rows(grid: str) -> list[str]:
    if grid == "augmentation-rows":
        return list(ABLATION_ROWS)
    if grid == "feature-source":
        return ["encoder", "projection_head"]
    if grid == "denominator":
        return ["exclude_self", "literal"]
    if grid == "init":
        return ["pretrained", "random"]
    raise ValueError(f"unknown grid {grid!r}; choose from {GRIDS}")


def row_policy(base: AugmentationPolicy, row: str) -> AugmentationPolicy:
    """``base`` with only the transforms of an augmentation-grid row enabled."""
    names = set(ABLATION_ROWS[row])
    return replace(base, crop_enabled="crop" in names, flip_enabled="flip" in names,
                   jitter_enabled="jitter" in names, grayscale_enabled="grayscale" in names)


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Column-aligned plain text; floats shown with 4 decimals."""
    cells = [[str(h) for h in header]] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def run_ablate(cfg: RunConfig, out, grid: str, rows: Optional[Sequence[str]] = None,
               tests: Optional[dict] = None, train: Optional[Sequence[ImageSample]] = None,
               encoders: Optional[dict] = None) -> list[dict]:
    """Run one grid; writes ``table.csv``, ``table.txt`` and per-row evaluation files.

    ``train``/``tests`` default to the generated dataset under the run's data root.
    ``encoders`` maps row names to already-trained parameters that are reused
    instead of pretraining again (they must come from the same config and row).
    """
    encoders = dict(encoders or {})
    all_rows = grid_rows(grid)
    rows = list(rows) if rows else all_rows
    unknown = [r for r in rows if r not in all_rows]
    if unknown:
        raise ValueError(f"grid {grid!r} has no row {unknown[0]!r}; rows are {all_rows}")
    layout = Layout.for_config(cfg, out)
    if train is None:
        train = load_part(layout, cfg.data.train_domain, "train")
    if tests is None:
        tests = {name: load_part(layout, name, "test") for name in cfg.eval_domains()}
    _persist_config(cfg, layout)
    target = layout.ablate_dir(grid)

    shared_encoder = None
    if grid == "feature-source":
        shared_encoder = encoders.get("encoder") or encoders.get("projection_head") or pretrain_encoder(cfg, train)[0]
    records = []
    for row in rows:
        log.info("ablation %s: row %s", grid, row)
        kwargs = {}
        if grid == "augmentation-rows":
            kwargs["policy"] = row_policy(cfg.augmentation, row)
        elif grid == "feature-source":
            kwargs.update(source=row, encoder=shared_encoder)
        elif grid == "denominator":
            kwargs["denominator"] = row
        else:
            kwargs["pretrained"] = row == "pretrained"
        if row in encoders and grid != "feature-source":
            kwargs["encoder"] = encoders[row]
        result = run_experiment(cfg, train, tests, **kwargs)
        _write_eval(target / row, result.results, cfg.config_hash())
        records.append({"row": row, **result.aucs})

    domains = list(tests)
    header = ["row"] + [f"auc_{d}" for d in domains]
    table_rows = [[r["row"]] + [float(r[d]) for d in domains] for r in records]
    buf = io.StringIO()
    buf.write(_hash_comment(cfg.config_hash()))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in table_rows:
        w.writerow([r[0]] + [repr(v) for v in r[1:]])
    target.mkdir(parents=True, exist_ok=True)
    (target / "table.csv").write_text(buf.getvalue(), encoding="utf-8")
    (target / "table.txt").write_text(f"grid: {grid}  train: {cfg.data.train_domain}  seed: {cfg.seed}\n"
                                      + format_table(header, table_rows) + _hash_comment(cfg.config_hash()),
                                      encoding="utf-8")
    return records

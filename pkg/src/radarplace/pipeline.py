"""Pipeline stages and reproducible run plumbing behind the CLI.

Each stage reads its inputs from the output directory of the previous stage,
writes its artifacts into a stage subdirectory, and drops a manifest.json
recording the resolved-config hash and seeds so identical runs are
byte-identical and any stale stage is detectable.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dpr import DprConfig, DynamicMask, remove_dynamic_points
from .encoder import (EncoderConfig, TrainConfig, build_sequences, describe_all,
                      load_checkpoint, save_checkpoint, save_loss_curve, train)
from .evalmetrics import EvalConfig, QueryResult, evaluate
from .raster import (RasterConfig, aggregate_scans, rasterize, save_image,
                     load_image, window_indices)
from .retrieval import (IndexEntry, PlaceIndex, RcsConfig, RcsHistogram,
                        compute_rcs_histogram, load_index, query_index,
                        save_index)
from .scanio import (DatasetSplit, Pose2D, RadarScan, SyntheticWorldConfig,
                     build_splits, generate_synthetic_sequence, load_dataset,
                     loop_trajectory, save_dataset, wrap_angle)

log = logging.getLogger("radarplace")

DEFAULTS: dict[str, dict] = {
    "pipeline": {
        "dataset": "dataset.jsonl",
        "output_dir": "out",
        "dpr_enabled": True,
        "temporal_enabled": True,
        "rcshr_enabled": True,
    },
    "synth": {
        "num_landmarks": 400,
        "world_extent": 180.0,
        "landmark_rcs_mean": 10.0,
        "landmark_rcs_std": 4.0,
        "sensor_noise_std": 0.05,
        "velocity_noise_std": 0.05,
        "dynamic_fraction": 0.25,
        "detection_prob": 0.75,
        "rcs_bimodal_mean": 20.0,
        "rcs_bimodal_amplitude": 0.0,
        "rcs_bimodal_harmonic": 1,
        "rng_seed": 0,
        "loop_length": 400.0,
        "num_database_poses": 400,
        "num_query_poses": 100,
        "query_offset_std": 0.5,
        "sensor_range": 50.0,
        "dt": 0.5,
    },
    "splits": {
        "min_spacing": 2.0,
        "val_test_ratio": 0.2,
        "positive_radius": 9.0,
    },
    "dpr": {
        "fit_threshold_tau": 0.15,
        "static_velocity_threshold": 1.0,
        "static_fraction_threshold": 0.5,
        "ransac_iterations": 100,
        "ransac_min_inliers": 2,
        "rng_seed": 0,
    },
    "raster": {
        "num_aggregated_scans": 5,
        "crop_range": 50.0,
        "image_size": 64,
    },
    "encoder": {
        "conv_channels": "8,16,16",
        "pool_specs": "2x2,2x2,3x3",
        "sequence_length": 3,
        "weight_init_seed": 0,
    },
    "train": {
        "batch_size": 8,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "weight_decay": 0.001,
        "lr_decay": 0.5,
        "lr_decay_every": 5,
        "epochs": 10,
        "margin": 0.1,
        "num_negatives": 10,
        "negative_radius": 18.0,
        "cache_refresh": 1000,
        "shuffle_seed": 0,
    },
    "rcs": {
        "lower_bound_bm": 0.02,
        "bin_width_bw": 0.04,
        "fusion_alpha": 0.41,
        "top_m": 100,
        "smoothing_epsilon": 1e-10,
    },
    "eval": {
        "recall_ns": "1,5,10",
        "pr_thresholds": 1000,
    },
}


class ConfigError(ValueError):
    pass


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


@dataclass
class PipelineConfig:
    values: dict[str, dict]

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical_json(self) -> str:
        return json.dumps(self.values, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def output_dir(self) -> Path:
        return Path(self.values["pipeline"]["output_dir"])

    def synth_config(self) -> SyntheticWorldConfig:
        s = self.values["synth"]
        return SyntheticWorldConfig(
            num_landmarks=s["num_landmarks"],
            world_extent=s["world_extent"],
            landmark_rcs_mean=s["landmark_rcs_mean"],
            landmark_rcs_std=s["landmark_rcs_std"],
            sensor_noise_std=s["sensor_noise_std"],
            velocity_noise_std=s["velocity_noise_std"],
            dynamic_fraction=s["dynamic_fraction"],
            detection_prob=s["detection_prob"],
            rcs_bimodal_mean=s["rcs_bimodal_mean"],
            rcs_bimodal_amplitude=s["rcs_bimodal_amplitude"],
            rcs_bimodal_harmonic=s["rcs_bimodal_harmonic"],
            rng_seed=s["rng_seed"],
        )

    def dpr_config(self) -> DprConfig:
        return DprConfig(**self.values["dpr"])

    def raster_config(self) -> RasterConfig:
        r = self.values["raster"]
        return RasterConfig(
            num_aggregated_scans=r["num_aggregated_scans"],
            crop_range=r["crop_range"],
            image_size=r["image_size"],
            apply_dpr=self.values["pipeline"]["dpr_enabled"],
        )

    def encoder_config(self, temporal: Optional[bool] = None) -> EncoderConfig:
        e = self.values["encoder"]
        if temporal is None:
            temporal = self.values["pipeline"]["temporal_enabled"]
        channels = tuple(int(v) for v in e["conv_channels"].split(","))
        pools = tuple(tuple(int(v) for v in spec.split("x"))
                      for spec in e["pool_specs"].split(","))
        return EncoderConfig(
            image_size=self.values["raster"]["image_size"],
            conv_channels=channels,
            pool_specs=pools,
            sequence_length=e["sequence_length"] if temporal else 1,
            temporal=temporal,
            weight_init_seed=e["weight_init_seed"],
        )

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            momentum=t["momentum"],
            weight_decay=t["weight_decay"],
            lr_decay=t["lr_decay"],
            lr_decay_every=t["lr_decay_every"],
            epochs=t["epochs"],
            margin=t["margin"],
            num_negatives=t["num_negatives"],
            positive_radius=self.values["splits"]["positive_radius"],
            negative_radius=t["negative_radius"],
            cache_refresh=t["cache_refresh"],
            shuffle_seed=t["shuffle_seed"],
        )

    def rcs_config(self) -> RcsConfig:
        return RcsConfig(**self.values["rcs"])

    def eval_config(self) -> EvalConfig:
        e = self.values["eval"]
        return EvalConfig(
            positive_radius=self.values["splits"]["positive_radius"],
            recall_ns=tuple(int(v) for v in e["recall_ns"].split(",")),
            pr_thresholds=e["pr_thresholds"],
        )


def load_config(path=None, overrides: Sequence[str] = ()) -> PipelineConfig:
    """Resolve defaults <- config file <- `section.key=value` CLI overrides."""
    values = {sec: dict(d) for sec, d in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in values:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in values[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[section][key] = _coerce(raw, DEFAULTS[section][key])
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        target, raw = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in values or key not in values[section]:
            raise ConfigError(f"unknown config entry {section}.{key}")
        values[section][key] = _coerce(raw, DEFAULTS[section][key])
    return PipelineConfig(values=values)


def write_manifest(stage_dir: Path, stage: str, cfg: PipelineConfig,
                   extra: Optional[dict] = None) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seeds": {
            "synth": cfg["synth"]["rng_seed"],
            "dpr": cfg["dpr"]["rng_seed"],
            "weight_init": cfg["encoder"]["weight_init_seed"],
            "shuffle": cfg["train"]["shuffle_seed"],
        },
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    (stage_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True))


class MissingStageError(FileNotFoundError):
    pass


def _require_stage(path: Path, stage: str, hint: str) -> None:
    if not path.exists():
        raise MissingStageError(
            f"missing {path} -- run `radarplace {hint}` first (stage {stage!r})")


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def run_synth(cfg: PipelineConfig) -> Path:
    """Generate the synthetic benchmark dataset: a database lap plus a later
    query lap revisiting the same loop with pose noise and fresh clutter."""
    s = cfg["synth"]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    db_poses, db_stamps = loop_trajectory(s["num_database_poses"], s["loop_length"],
                                          start_timestamp_us=0, dt=s["dt"])
    q_poses_raw, _ = loop_trajectory(s["num_query_poses"], s["loop_length"],
                                     start_timestamp_us=0, dt=s["dt"])
    rng = np.random.default_rng(s["rng_seed"] + 1)
    gap_us = 3_600_000_000  # one hour between laps
    q_start = db_stamps[-1] + gap_us
    q_poses = [
        Pose2D(p.x + rng.normal(0.0, s["query_offset_std"]),
               p.y + rng.normal(0.0, s["query_offset_std"]),
               wrap_angle(p.yaw + rng.normal(0.0, 0.05)))
        for p in q_poses_raw
    ]
    q_stamps = [q_start + int(round(i * s["dt"] * 1e6))
                for i in range(len(q_poses))]

    trajectory = db_poses + q_poses
    stamps = db_stamps + q_stamps
    scans, truths = generate_synthetic_sequence(
        cfg.synth_config(), trajectory,
        timestamps_us=stamps, dt=s["dt"], sensor_range=s["sensor_range"])

    dataset_path = out / cfg["pipeline"]["dataset"]
    save_dataset(scans, dataset_path)
    day_boundary = db_stamps[-1] + gap_us // 2
    meta = {
        "day_boundary_us": day_boundary,
        "num_scans": len(scans),
        "truth": [
            {"scan_id": sc.scan_id, "speed": t.speed, "heading": t.heading}
            for sc, t in zip(scans, truths)
        ],
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True))
    write_manifest(out, "synth", cfg)
    log.info("synth: wrote %d scans to %s", len(scans), dataset_path)
    return dataset_path


# --------------------------------------------------------------------------
# preprocess
# --------------------------------------------------------------------------

def run_preprocess(cfg: PipelineConfig, dpr_enabled: Optional[bool] = None,
                   stage_dir: Optional[Path] = None) -> Path:
    """Masks, splits, BEV images and RCS histograms for every scan."""
    out = cfg.output_dir
    if dpr_enabled is None:
        dpr_enabled = cfg["pipeline"]["dpr_enabled"]
    if stage_dir is None:
        stage_dir = out / "preprocess"
    dataset_path = out / cfg["pipeline"]["dataset"]
    _require_stage(dataset_path, "synth", "synth")
    scans = load_dataset(dataset_path)
    meta_path = out / "meta.json"
    day_boundary = 0
    if meta_path.exists():
        day_boundary = json.loads(meta_path.read_text())["day_boundary_us"]

    sp = cfg["splits"]
    splits = build_splits(scans, min_spacing=sp["min_spacing"],
                          val_test_ratio=sp["val_test_ratio"],
                          positive_radius=sp["positive_radius"],
                          day_boundary=day_boundary)

    dpr_cfg = cfg.dpr_config()
    raster_cfg = cfg.raster_config()
    rcs_cfg = cfg.rcs_config()

    masks: list[DynamicMask] = []
    for scan in scans:
        if dpr_enabled:
            masks.append(remove_dynamic_points(scan, dpr_cfg))
        else:
            masks.append(DynamicMask(labels=[1] * len(scan.points),
                                     ego_motion=None, branch="static_ego"))

    stage_dir.mkdir(parents=True, exist_ok=True)
    images_dir = stage_dir / "images"
    images_dir.mkdir(exist_ok=True)
    histograms: dict[str, list[float]] = {}
    failures = 0
    for i, scan in enumerate(scans):
        try:
            idx, clamped = window_indices(len(scans), i,
                                          raster_cfg.num_aggregated_scans)
            agg = aggregate_scans([scans[j] for j in idx],
                                  center_index=idx.index(i),
                                  masks=[masks[j] for j in idx],
                                  boundary_clamped=clamped)
            image = rasterize(agg, raster_cfg)
            save_image(image, images_dir / f"{scan.scan_id}.pgm")
            hist = compute_rcs_histogram(agg.rcs_values, rcs_cfg)
            histograms[scan.scan_id] = [float(v) for v in hist.bins]
        except Exception:
            failures += 1
            log.exception("preprocess failed for scan %s; continuing", scan.scan_id)
    (stage_dir / "splits.json").write_text(splits.to_json())
    (stage_dir / "histograms.json").write_text(json.dumps(histograms, sort_keys=True))
    mask_payload = {
        scans[i].scan_id: {"labels": masks[i].labels, "branch": masks[i].branch,
                           "degenerate": masks[i].degenerate}
        for i in range(len(scans))
    }
    (stage_dir / "masks.json").write_text(json.dumps(mask_payload, sort_keys=True))
    write_manifest(stage_dir, "preprocess", cfg,
                   {"dpr_enabled": dpr_enabled, "failures": failures})
    log.info("preprocess: %d scans, %d failures -> %s", len(scans), failures, stage_dir)
    return stage_dir


def _load_prep(cfg: PipelineConfig, stage_dir: Path):
    _require_stage(stage_dir / "splits.json", "preprocess", "preprocess")
    scans = load_dataset(cfg.output_dir / cfg["pipeline"]["dataset"])
    splits = DatasetSplit.from_json((stage_dir / "splits.json").read_text())
    histograms = json.loads((stage_dir / "histograms.json").read_text())
    images = {}
    for scan in scans:
        img_path = stage_dir / "images" / f"{scan.scan_id}.pgm"
        if img_path.exists():
            images[scan.scan_id] = load_image(img_path).grid.astype(np.float64)
    return scans, splits, histograms, images


def _sequences_and_positions(scans, images, seq_length):
    ordered_ids = [s.scan_id for s in scans]
    sequences = build_sequences(ordered_ids, images, seq_length)
    positions = {s.scan_id: (s.pose.x, s.pose.y) for s in scans}
    poses = {s.scan_id: s.pose for s in scans}
    return sequences, positions, poses


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

def run_train(cfg: PipelineConfig, temporal: Optional[bool] = None,
              prep_dir: Optional[Path] = None,
              stage_dir: Optional[Path] = None) -> Path:
    out = cfg.output_dir
    prep_dir = prep_dir or out / "preprocess"
    stage_dir = stage_dir or out / "train"
    scans, splits, _, images = _load_prep(cfg, prep_dir)
    enc_cfg = cfg.encoder_config(temporal=temporal)
    train_cfg = cfg.train_config()
    sequences, positions, _ = _sequences_and_positions(scans, images,
                                                       enc_cfg.sequence_length)
    stage_dir.mkdir(parents=True, exist_ok=True)
    params, curve = train(splits.training_queries, splits.database, sequences,
                          positions, enc_cfg, train_cfg,
                          checkpoint_dir=stage_dir / "checkpoints")
    save_checkpoint(stage_dir / "checkpoint.ckpt", params, enc_cfg,
                    train_cfg.epochs - 1)
    save_loss_curve(stage_dir / "loss_curve.csv", curve)
    write_manifest(stage_dir, "train", cfg, {"temporal": enc_cfg.temporal})
    log.info("train: %d updates -> %s", len(curve), stage_dir)
    return stage_dir


# --------------------------------------------------------------------------
# index / query / evaluate
# --------------------------------------------------------------------------

def run_index(cfg: PipelineConfig, prep_dir: Optional[Path] = None,
              train_dir: Optional[Path] = None,
              stage_dir: Optional[Path] = None) -> Path:
    out = cfg.output_dir
    prep_dir = prep_dir or out / "preprocess"
    train_dir = train_dir or out / "train"
    stage_dir = stage_dir or out / "index"
    _require_stage(train_dir / "checkpoint.ckpt", "train", "train")
    params, enc_cfg, _ = load_checkpoint(train_dir / "checkpoint.ckpt")
    scans, splits, histograms, images = _load_prep(cfg, prep_dir)
    sequences, _, poses = _sequences_and_positions(scans, images,
                                                   enc_cfg.sequence_length)
    db_ids = [sid for sid in splits.database if sid in sequences]
    seq_stack = np.stack([sequences[sid] for sid in db_ids])
    descs = describe_all(seq_stack, params, enc_cfg)
    # Histograms were already computed from the aggregated RCS values during
    # preprocessing; reuse them as-is.
    index = PlaceIndex(entries=[
        IndexEntry(scan_id=sid, pose=poses[sid], descriptor=descs[i],
                   histogram=RcsHistogram(bins=np.array(histograms[sid])))
        for i, sid in enumerate(db_ids)
    ])
    stage_dir.mkdir(parents=True, exist_ok=True)
    save_index(index, stage_dir / "index.bin",
               configs={"rcs": cfg["rcs"], "descriptor_dim": enc_cfg.descriptor_dim})
    write_manifest(stage_dir, "index", cfg, {"entries": len(index)})
    log.info("index: %d entries -> %s", len(index), stage_dir)
    return stage_dir


def run_query(cfg: PipelineConfig, rcshr: Optional[bool] = None,
              query_split: str = "test",
              prep_dir: Optional[Path] = None,
              train_dir: Optional[Path] = None,
              index_dir: Optional[Path] = None,
              stage_dir: Optional[Path] = None) -> Path:
    out = cfg.output_dir
    prep_dir = prep_dir or out / "preprocess"
    train_dir = train_dir or out / "train"
    index_dir = index_dir or out / "index"
    stage_dir = stage_dir or out / "query"
    if rcshr is None:
        rcshr = cfg["pipeline"]["rcshr_enabled"]
    _require_stage(index_dir / "index.bin", "index", "index")
    _require_stage(train_dir / "checkpoint.ckpt", "train", "train")
    index = load_index(index_dir / "index.bin")
    params, enc_cfg, _ = load_checkpoint(train_dir / "checkpoint.ckpt")
    scans, splits, histograms, images = _load_prep(cfg, prep_dir)
    sequences, _, _ = _sequences_and_positions(scans, images,
                                               enc_cfg.sequence_length)
    rcs_cfg = cfg.rcs_config()
    if not rcshr:
        # Re-rank degenerates to the plain feature-distance order.
        rcs_cfg = RcsConfig(
            lower_bound_bm=rcs_cfg.lower_bound_bm,
            bin_width_bw=rcs_cfg.bin_width_bw,
            fusion_alpha=0.0,
            top_m=rcs_cfg.top_m,
            smoothing_epsilon=rcs_cfg.smoothing_epsilon,
        )
    query_ids = {"test": splits.test_queries,
                 "validation": splits.validation_queries}[query_split]
    query_ids = [sid for sid in query_ids if sid in sequences]
    seq_stack = np.stack([sequences[sid] for sid in query_ids])
    descs = describe_all(seq_stack, params, enc_cfg)
    results = {}
    for i, sid in enumerate(query_ids):
        hist = RcsHistogram(bins=np.array(histograms[sid]))
        ranked = query_index(index, descs[i], hist, rcs_cfg)
        results[sid] = [[c.scan_id, c.feature_distance, c.histogram_distance,
                         c.total_distance] for c in ranked]
    stage_dir.mkdir(parents=True, exist_ok=True)
    payload = {"score_name": "d_total" if rcshr else "d_E",
               "query_split": query_split, "results": results}
    (stage_dir / "results.json").write_text(json.dumps(payload, sort_keys=True))
    write_manifest(stage_dir, "query", cfg,
                   {"rcshr": rcshr, "num_queries": len(query_ids)})
    log.info("query: %d queries -> %s", len(query_ids), stage_dir)
    return stage_dir


def run_evaluate(cfg: PipelineConfig, query_dir: Optional[Path] = None,
                 stage_dir: Optional[Path] = None) -> Path:
    out = cfg.output_dir
    query_dir = query_dir or out / "query"
    stage_dir = stage_dir or out / "evaluate"
    _require_stage(query_dir / "results.json", "query", "query")
    payload = json.loads((query_dir / "results.json").read_text())
    scans = load_dataset(out / cfg["pipeline"]["dataset"])
    positions = {s.scan_id: (s.pose.x, s.pose.y) for s in scans}
    eval_cfg = cfg.eval_config()
    score_col = 3 if payload["score_name"] == "d_total" else 1
    results = []
    for qid in sorted(payload["results"]):
        ranked = payload["results"][qid]
        qx, qy = positions[qid]
        correct = [math.hypot(positions[row[0]][0] - qx,
                              positions[row[0]][1] - qy) <= eval_cfg.positive_radius
                   for row in ranked]
        results.append(QueryResult(
            query_id=qid,
            candidate_ids=[row[0] for row in ranked],
            candidate_correct=correct,
            distances=[row[score_col] for row in ranked],
        ))
    report = evaluate(results, eval_cfg, score_name=payload["score_name"])
    stage_dir.mkdir(parents=True, exist_ok=True)
    report.save(stage_dir / "report.json")
    report.save_pr_csv(stage_dir / "pr_curve.csv")
    write_manifest(stage_dir, "evaluate", cfg)
    log.info("evaluate: recall@1=%.3f -> %s",
             report.recall_at_n.get(1, float("nan")), stage_dir)
    return stage_dir


# --------------------------------------------------------------------------
# ablate: the 8-row toggle grid
# --------------------------------------------------------------------------

ABLATION_ROWS = [
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (False, True, True),
    (True, False, True),
    (True, True, False),
    (True, True, True),
]


def row_name(te: bool, dpr: bool, rcshr: bool) -> str:
    parts = ["SE"]
    if te:
        parts.append("TE")
    if dpr:
        parts.append("DPR")
    if rcshr:
        parts.append("RCSHR")
    return "+".join(parts)


def run_ablate(cfg: PipelineConfig) -> Path:
    """Run the full toggle grid, sharing stages that the toggles don't affect:
    one preprocess per DPR setting, one training per (TE, DPR) pair."""
    out = cfg.output_dir
    ablate_dir = out / "ablate"
    prep_dirs = {}
    for dpr in (False, True):
        d = ablate_dir / f"prep-{'dpr' if dpr else 'nodpr'}"
        run_preprocess(cfg, dpr_enabled=dpr, stage_dir=d)
        prep_dirs[dpr] = d
    train_dirs = {}
    for te in (False, True):
        for dpr in (False, True):
            d = ablate_dir / f"train-{'te' if te else 'se'}-{'dpr' if dpr else 'nodpr'}"
            run_train(cfg, temporal=te, prep_dir=prep_dirs[dpr], stage_dir=d)
            train_dirs[(te, dpr)] = d
    index_dirs = {}
    for (te, dpr), tdir in train_dirs.items():
        d = ablate_dir / f"index-{'te' if te else 'se'}-{'dpr' if dpr else 'nodpr'}"
        run_index(cfg, prep_dir=prep_dirs[dpr], train_dir=tdir, stage_dir=d)
        index_dirs[(te, dpr)] = d
    summary = {}
    for te, dpr, rcshr in ABLATION_ROWS:
        name = row_name(te, dpr, rcshr)
        qdir = ablate_dir / f"query-{name}"
        edir = ablate_dir / f"eval-{name}"
        run_query(cfg, rcshr=rcshr, prep_dir=prep_dirs[dpr],
                  train_dir=train_dirs[(te, dpr)],
                  index_dir=index_dirs[(te, dpr)], stage_dir=qdir)
        run_evaluate(cfg, query_dir=qdir, stage_dir=edir)
        report = json.loads((edir / "report.json").read_text())
        summary[name] = {
            "recall_at_n": report["recall_at_n"],
            "max_f1": report["max_f1"],
            "average_precision": report["average_precision"],
        }
    (ablate_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True))
    write_manifest(ablate_dir, "ablate", cfg)
    log.info("ablate: wrote %s", ablate_dir / "summary.json")
    return ablate_dir

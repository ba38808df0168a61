# src/apps/pipeline/services.py
"""
コマンドから呼ぶ処理の本体（コマンド側は引数の解釈と出力だけ）。

絶対ルール:
- 計算を始める前に設定の矛盾を ConfigMismatch で弾く
- ファイル出力は決定的（同じ入力と設定なら同じバイト列）
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from django.conf import settings

from apps.ais.polygons import format_polygons, parse_polygons
from apps.ais.schemas import DatasetStats, SchemaConfig, Trajectory
from apps.ais.services import (
    assemble_trajectories,
    dataset_stats,
    label_trajectories,
    parse_records,
    resample_all,
)
from apps.ais.trajectory_io import TrajectoryFile, write_trajectories
from apps.common.errors import ConfigMismatch, ShapeMismatch, TooFewTrajectories
from apps.evaluation.schemas import ReportBundle
from apps.evaluation.services import default_origin, emit_report, evaluate_model
from apps.geo.schemas import GeoPoint, Standardizer
from apps.geo.services import fit_standardizer_array
from apps.nn.checkpoint import Checkpoint, save_checkpoint
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig, TrajectoryModel
from apps.training.schemas import CrossValResult, TrainConfig, TrainReport
from apps.training.services import build_model, cross_validate, parse_model_id, train
from apps.windowing.schemas import SampleBatch, WindowSample
from apps.windowing.services import one_hot, segment_all, stack_samples

from .synth import SCHEMA as SYNTH_SCHEMA
from .synth import SynthConfig, generate_ais_csv, synth_polygons

logger = logging.getLogger(__name__)

# --format ごとの出力ファイル名
REPORT_FILES = {
    "table": "report.txt",
    "kv": "report.kv",
    "cdf": "cdf.dat",
    "distance": "mae_vs_distance.dat",
}


# ------------------------------------------------------------
# 入力の解釈
# ------------------------------------------------------------
def load_schema(value: str) -> SchemaConfig:
    """ファイルパスならその中身、そうでなければインラインの key=value,... として読む。"""
    path = Path(value)
    if path.is_file():
        return SchemaConfig.parse(path.read_text(encoding="utf-8"))
    return SchemaConfig.parse(value)


def parse_origin(value: Optional[str]) -> Optional[GeoPoint]:
    """'lat,lon' 形式。"""
    if not value:
        return None
    try:
        lat, lon = (float(v) for v in value.split(","))
    except ValueError:
        raise ConfigMismatch(f"origin must be 'lat,lon', got {value!r}")
    return GeoPoint(lat=lat, lon=lon)


def parse_sequence(value: str) -> list[GeoPoint]:
    """
    予測の入力列。ファイルなら1行1点（'lat lon' か 'lat,lon'）、
    インラインなら 'lat,lon;lat,lon;...'。# 以降はコメント。
    """
    path = Path(value)
    if path.is_file():
        items = path.read_text(encoding="utf-8").splitlines()
    else:
        items = value.split(";")

    points = []
    for raw in items:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ShapeMismatch(f"sequence entry must be 'lat lon': {line!r}")
        try:
            points.append(GeoPoint(lat=float(parts[0]), lon=float(parts[1])))
        except ValueError:
            raise ShapeMismatch(f"sequence entry is not numeric: {line!r}")
    return points


def resolve_label(value: Optional[str], patterns: Sequence[str], P: int) -> Optional[int]:
    """--label はパターン名か 0 始まりの番号。"""
    if value is None:
        return None
    if value in patterns:
        return list(patterns).index(value)
    try:
        label = int(value)
    except ValueError:
        raise ConfigMismatch(f"unknown pattern label {value!r} (known: {', '.join(patterns) or 'none'})")
    if not 0 <= label < P:
        raise ConfigMismatch(f"label {label} out of range for {P} patterns")
    return label


def delta_of(tf: TrajectoryFile) -> float:
    if tf.delta_sec is None:
        raise ConfigMismatch("trajectory file has no delta_sec header; run prepare first")
    return tf.delta_sec


def require_labels(tf: TrajectoryFile) -> None:
    if not tf.is_labeled:
        raise ConfigMismatch("labeled mode needs a labeled trajectory file (prepare with --polygons)")


# ------------------------------------------------------------
# synth / prepare
# ------------------------------------------------------------
@dataclass(frozen=True)
class PreparedData:
    trajectories: list[Trajectory]
    pattern_names: list[str]
    delta_sec: float
    stats: DatasetStats


def prepare(
    data: bytes,
    schema: SchemaConfig,
    *,
    polygons_text: Optional[str],
    delta_min: float,
    gap_sec: float,
    ship_type: Optional[str] = None,
) -> PreparedData:
    """
    parse -> assemble -> (label) -> resample。

    NOTE: ラベル付けはリサンプル前の生レポートで行う（箱を短時間で横切る船も拾える）
    """
    spec = parse_polygons(polygons_text) if polygons_text is not None else None
    delta_sec = float(delta_min) * 60.0

    parsed = parse_records(data, schema)
    raw = assemble_trajectories(parsed.records, gap_threshold=float(gap_sec), ship_type=ship_type)
    if spec is not None:
        labeled = label_trajectories(raw, spec)
        pattern_names = spec.pattern_names
        kept = labeled
    else:
        labeled = []
        pattern_names = []
        kept = raw
    resampled = resample_all(kept, delta_sec)

    stats = dataset_stats(
        parse_stats=parsed.stats,
        raw=raw,
        labeled=labeled,
        resampled=resampled,
        pattern_names=pattern_names,
    )
    return PreparedData(trajectories=resampled, pattern_names=pattern_names, delta_sec=delta_sec, stats=stats)


def write_prepared(out_dir: Path, prepared: PreparedData) -> Path:
    path = out_dir / "trajectories.txt"
    write_trajectories(
        path, prepared.trajectories, delta_sec=prepared.delta_sec, pattern_names=prepared.pattern_names
    )
    return path


def format_stats(stats: DatasetStats) -> list[str]:
    lines = [
        f"records={stats.n_records} dropped={stats.n_dropped}",
        f"raw_trajectories={stats.n_raw_trajectories} labeled={stats.n_labeled} resampled={stats.n_resampled}",
        f"mean_report_interval_sec={stats.mean_report_interval_sec:.3f} mean_length={stats.mean_length:.3f}",
    ]
    lines += [f"pattern={name} trajectories={count}" for name, count in stats.per_pattern.items()]
    return lines


def synth(out_dir: Path, cfg: SynthConfig, *, delta_min: float, gap_sec: float) -> PreparedData:
    """合成データ一式（ais.csv, schema.txt, polygons.txt, trajectories.txt）を書く。"""
    data = generate_ais_csv(cfg)
    schema_text = SYNTH_SCHEMA.to_text()
    polygons_text = format_polygons(synth_polygons())

    (out_dir / "ais.csv").write_bytes(data)
    (out_dir / "schema.txt").write_text(schema_text, encoding="utf-8")
    (out_dir / "polygons.txt").write_text(polygons_text, encoding="utf-8")

    prepared = prepare(data, SYNTH_SCHEMA, polygons_text=polygons_text, delta_min=delta_min, gap_sec=gap_sec)
    write_prepared(out_dir, prepared)
    return prepared


# ------------------------------------------------------------
# window
# ------------------------------------------------------------
def window(tf: TrajectoryFile, *, ell: int, h: int, labeled: bool) -> tuple[list[WindowSample], Standardizer, int]:
    """全航跡で標準化を fit して窓に切る。戻り値の int は ψ の次元（ラベル無しなら 0）。"""
    if labeled:
        require_labels(tf)
    if not tf.trajectories:
        raise TooFewTrajectories("no trajectories to segment")
    standardizer = fit_standardizer_array(np.concatenate([t.lonlat for t in tf.trajectories]))
    P = tf.n_patterns if labeled else 0
    samples = segment_all(tf.trajectories, ell, h, standardizer=standardizer, n_patterns=P or None)
    return samples, standardizer, P


# ------------------------------------------------------------
# train
# ------------------------------------------------------------
@dataclass
class TrainOutcome:
    model: TrajectoryModel
    standardizer: Standardizer
    report: TrainReport
    n_train: int
    n_val: int


def split_train_val(ids: Sequence[int], seed: int, val_fraction: float) -> tuple[list[int], list[int]]:
    """航跡単位で学習/検証に分ける（検証はシード順の先頭 ⌈f·n⌉ 本、最低1本）。"""
    ordered = sorted(ids)
    if len(ordered) < 2:
        raise TooFewTrajectories("training needs at least 2 trajectories", n=len(ordered))
    perm = make_rng(seed, "split").permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n_val = min(len(ordered) - 1, max(1, math.ceil(val_fraction * len(ordered))))
    return shuffled[n_val:], shuffled[:n_val]


def train_model(
    tf: TrajectoryFile,
    config: ModelConfig,
    cfg: TrainConfig,
    *,
    val_fraction: float,
) -> TrainOutcome:
    if config.labeled:
        require_labels(tf)
    by_id = {t.traj_id: t for t in tf.trajectories}
    train_ids, val_ids = split_train_val(list(by_id), cfg.seed, val_fraction)

    standardizer = fit_standardizer_array(np.concatenate([by_id[i].lonlat for i in train_ids]))
    n_patterns = config.P if config.labeled else None

    def batch(ids: list[int]) -> SampleBatch:
        samples = segment_all([by_id[i] for i in ids], config.ell, config.h, standardizer=standardizer, n_patterns=n_patterns)
        return stack_samples(samples, ell=config.ell, h=config.h, d=config.d)

    train_set, val_set = batch(train_ids), batch(val_ids)
    logger.info("training %s labeled=%s on %d/%d windows", config.model_id, config.labeled, len(train_set), len(val_set))
    model = build_model(config, make_rng(cfg.seed, "model", config.model_id, int(config.labeled)))
    report = train(model, train_set, val_set, cfg)
    return TrainOutcome(model=model, standardizer=standardizer, report=report, n_train=len(train_set), n_val=len(val_set))


def save_outcome(out_dir: Path, outcome: TrainOutcome, cfg: TrainConfig, patterns: Sequence[str]) -> tuple[Path, Path]:
    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(
        ckpt_path,
        outcome.model.params,
        model=outcome.model.config.to_dict(),
        standardizer=outcome.standardizer.to_dict(),
        adam=cfg.adam,
        step=outcome.report.steps,
        version=settings.SEATRACK_VERSION,
        patterns=patterns if outcome.model.config.labeled else (),
    )
    report_path = out_dir / "train_report.json"
    payload = {"train": outcome.report.to_dict(), "config": cfg.to_dict(), "n_train": outcome.n_train, "n_val": outcome.n_val}
    report_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return ckpt_path, report_path


def restore_model(ckpt: Checkpoint) -> tuple[TrajectoryModel, Standardizer]:
    config = ModelConfig.from_dict(ckpt.model)
    if ckpt.standardizer is None:
        raise ConfigMismatch("checkpoint has no standardizer")
    model = build_model(config, 0)
    model.params.load(ckpt.arrays)
    return model, Standardizer.from_dict(ckpt.standardizer)


# ------------------------------------------------------------
# evaluate / crossval
# ------------------------------------------------------------
def evaluate_checkpoint(ckpt: Checkpoint, tf: TrajectoryFile, *, origin: Optional[GeoPoint]) -> ReportBundle:
    model, standardizer = restore_model(ckpt)
    config = model.config
    if config.labeled:
        require_labels(tf)
        if tf.n_patterns != config.P:
            raise ConfigMismatch(f"checkpoint expects {config.P} patterns, file has {tf.n_patterns}")

    samples = segment_all(
        tf.trajectories, config.ell, config.h, standardizer=standardizer, n_patterns=config.P if config.labeled else None
    )
    batch = stack_samples(samples, ell=config.ell, h=config.h, d=config.d)
    report = evaluate_model(
        model, batch, standardizer, origin=origin or default_origin(tf.trajectories), trajectories=tf.trajectories
    )
    return ReportBundle(
        delta_sec=delta_of(tf), h=config.h, reports=(report,), pattern_names=tuple(tf.pattern_names)
    )


def crossval_configs(
    model_ids: Sequence[str],
    modes: Sequence[bool],
    *,
    ell: int,
    h: int,
    P: int,
    hidden: int,
    mlp_width: int,
    teacher_forcing: bool,
) -> list[ModelConfig]:
    configs = []
    for model_id in model_ids:
        kind, aggregation = parse_model_id(model_id)
        for labeled in modes:
            configs.append(
                ModelConfig(
                    kind=kind,
                    ell=ell,
                    h=h,
                    P=P,
                    labeled=labeled,
                    aggregation=aggregation,
                    hidden=hidden,
                    mlp_width=mlp_width,
                    teacher_forcing=teacher_forcing and kind == "encdec",
                )
            )
    return configs


def run_crossval(
    tf: TrajectoryFile,
    configs: Sequence[ModelConfig],
    cfg: TrainConfig,
    *,
    K: int,
    val_fraction: float,
    origin: Optional[GeoPoint],
) -> tuple[CrossValResult, ReportBundle]:
    if any(c.labeled for c in configs):
        require_labels(tf)
    result = cross_validate(
        tf.trajectories,
        configs,
        cfg,
        K=K,
        delta_sec=delta_of(tf),
        pattern_names=tf.pattern_names,
        val_fraction=val_fraction,
        origin=origin,
    )
    bundle = ReportBundle(
        delta_sec=result.delta_sec,
        h=result.h,
        reports=tuple(result.reports),
        pattern_names=tuple(tf.pattern_names),
        failures=tuple(result.failures),
    )
    return result, bundle


def write_reports(
    out_dir: Path,
    bundle: ReportBundle,
    fmt: str,
    *,
    bin_nmi: float,
    per_route: bool,
) -> list[Path]:
    """fmt='all' なら4形式すべて。未知の形式は emit_report が UnsupportedFormat にする。"""
    formats = list(REPORT_FILES) if fmt == "all" else [fmt]
    # 書き始める前に全形式を作る（途中で失敗しても半端なファイルを残さない）
    blobs = [(f, emit_report(bundle, f, bin_nmi=bin_nmi, per_route=per_route)) for f in formats]
    paths = []
    for f, blob in blobs:
        path = out_dir / REPORT_FILES[f]
        path.write_bytes(blob)
        paths.append(path)
        logger.info("wrote %s", path)
    return paths


# ------------------------------------------------------------
# predict
# ------------------------------------------------------------
@dataclass(frozen=True)
class Prediction:
    points: list[GeoPoint]
    alphas: Optional[np.ndarray]  # h×ℓ（attention のときだけ）


def predict_sequence(ckpt: Checkpoint, sequence: Sequence[GeoPoint], label: Optional[str]) -> Prediction:
    """
    仕様:
    - 入力は ℓ 点以上。多い場合は最後の ℓ 点を使う
    - ラベル付きモデルは --label が必須、ラベル無しモデルでは --label を無視する
    """
    model, standardizer = restore_model(ckpt)
    config = model.config
    if len(sequence) < config.ell:
        raise ShapeMismatch(f"sequence has {len(sequence)} points, model needs {config.ell}")

    index = resolve_label(label, ckpt.patterns, config.P)
    if config.labeled and index is None:
        raise ConfigMismatch("labeled checkpoint needs --label")
    if not config.labeled and index is not None:
        logger.warning("ignoring --label for an unlabeled model")
    psi = one_hot(index, config.P)[None, :] if config.labeled else None

    lonlat = np.array([[p.lon, p.lat] for p in sequence[-config.ell:]], dtype=np.float64)
    X = standardizer.apply_array(lonlat)[None, :, :]
    if hasattr(model, "predict_with_attention"):
        Yhat, alphas = model.predict_with_attention(X, psi)
    else:
        Yhat, alphas = model.predict(X, psi), None

    out = standardizer.invert_array(Yhat[0])
    points = [GeoPoint(lat=float(lat), lon=float(lon)) for lon, lat in out]
    return Prediction(points=points, alphas=None if alphas is None else alphas[0])


def format_prediction(pred: Prediction) -> str:
    lines = ["# step lat lon"]
    lines += [f"{j + 1} {p.lat:.6f} {p.lon:.6f}" for j, p in enumerate(pred.points)]
    return "\n".join(lines) + "\n"


def format_attention(alphas: np.ndarray) -> str:
    lines = ["# row j = decode step j, column t = encoder step t"]
    lines += [" ".join(f"{a:.6f}" for a in row) for row in alphas]
    return "\n".join(lines) + "\n"

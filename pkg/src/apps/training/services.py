# src/apps/training/services.py
"""
学習ループ（ミニバッチ + Adam + early stopping）と K-fold 実験ドライバ。

方針:
- 乱数はすべて make_rng(seed, ...) から取る（同じ設定なら同じ結果）
- 早期終了の判定は標準化空間の検証損失、報告する指標は地理空間の MAE
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from django.conf import settings

from apps.ais.schemas import Trajectory
from apps.baselines.services import LinearModel, MlpModel
from apps.common.errors import ConfigMismatch, NonFiniteLoss, SeatrackError
from apps.evaluation.services import default_origin, evaluate_model
from apps.geo.schemas import GeoPoint
from apps.geo.services import fit_standardizer_array
from apps.nn.losses import get_loss
from apps.nn.params import adam_step
from apps.nn.rng import make_rng
from apps.nn.schemas import ModelConfig, TrajectoryModel
from apps.seq2seq.services import EncDecModel
from apps.windowing.schemas import SampleBatch
from apps.windowing.services import kfold_split, segment_all, stack_samples

from .schemas import CrossValResult, FoldResult, TrainConfig, TrainReport

logger = logging.getLogger(__name__)

MODEL_REGISTRY = {
    "linear": LinearModel,
    "mlp": MlpModel,
    "encdec": EncDecModel,
}


def build_model(config: ModelConfig, seed) -> TrajectoryModel:
    try:
        cls = MODEL_REGISTRY[config.kind]
    except KeyError:
        raise ConfigMismatch(f"unknown model kind: {config.kind}")
    return cls(config, seed=seed)


def parse_model_id(model_id: str) -> tuple[str, Optional[str]]:
    """'encdec-attn' -> ('encdec', 'attn'), 'mlp' -> ('mlp', None)"""
    kind, _, aggregation = model_id.partition("-")
    if kind not in MODEL_REGISTRY or (kind == "encdec") != bool(aggregation):
        raise ConfigMismatch(f"unknown model: {model_id!r} (use linear, mlp, encdec-max, encdec-avg, encdec-attn)")
    return kind, aggregation or None


def validation_loss(model: TrajectoryModel, batch: SampleBatch, loss_name: str, chunk: int) -> float:
    """検証損失（要素数で重み付けした平均なので、チャンクに分けても全体の平均と同じ）。"""
    loss_fn = get_loss(loss_name)
    total = 0.0
    count = 0
    for start in range(0, len(batch), chunk):
        part = batch.take(np.arange(start, min(start + chunk, len(batch))))
        loss, _ = loss_fn(model.predict(part.X, part.psi), part.Y)
        total += loss * part.Y.size
        count += part.Y.size
    return total / count


def train(
    model: TrajectoryModel,
    train_set: SampleBatch,
    val_set: SampleBatch,
    cfg: TrainConfig,
) -> TrainReport:
    """
    モデルを学習し、検証損失が最小だった時点のパラメータに戻して返す。

    仕様:
    - epoch ごとにシード付きでシャッフルしたミニバッチ（最後の端数バッチも使う）
    - 検証損失が patience epoch 続けて改善しなければ終了（改善は厳密に小さくなった場合だけ）
    - 線形モデルは閉形式の fit を1回だけ行い、1 epoch として記録する
    - 損失が有限でなくなったら NonFiniteLoss（epoch, batch, パラメータのノルム付き）
    """
    if len(train_set) < 1 or len(val_set) < 1:
        raise ConfigMismatch("training needs non-empty train and validation sets")
    config = model.config
    if config.labeled and (train_set.psi is None or val_set.psi is None):
        raise ConfigMismatch("labeled model needs labeled samples")

    started = time.perf_counter()
    report = TrainReport(
        model_id=config.model_id,
        labeled=config.labeled,
        initial_val_loss=validation_loss(model, val_set, cfg.loss, cfg.batch_size),
    )

    if isinstance(model, LinearModel):
        model.fit(train_set.X, train_set.Y, train_set.psi)
        train_loss = validation_loss(model, train_set, cfg.loss, cfg.batch_size)
        val_loss = validation_loss(model, val_set, cfg.loss, cfg.batch_size)
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)
        report.best_epoch = 1
        report.best_val_loss = val_loss
        report.wall_time = time.perf_counter() - started
        return report

    loss_fn = get_loss(cfg.loss)
    rng = make_rng(cfg.seed, "shuffle", config.model_id, int(config.labeled))
    params = model.params
    best_snapshot = params.snapshot()
    bad_epochs = 0
    n = len(train_set)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_total = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = train_set.take(idx)
            Yhat, cache = model.forward(batch.X, batch.psi, Y=batch.Y)
            loss, dY = loss_fn(Yhat, batch.Y)
            if not math.isfinite(loss):
                raise NonFiniteLoss(
                    f"training loss became {loss} at epoch {epoch}, batch {batch_no}",
                    epoch=epoch,
                    batch=batch_no,
                    norms=params.norms(),
                )
            model.backward(cache, dY)
            report.steps += 1
            adam_step(params, report.steps, cfg.adam)
            epoch_total += loss * len(idx)

        val_loss = validation_loss(model, val_set, cfg.loss, cfg.batch_size)
        if not math.isfinite(val_loss):
            raise NonFiniteLoss(
                f"validation loss became {val_loss} at epoch {epoch}",
                epoch=epoch,
                batch=None,
                norms=params.norms(),
            )
        report.train_losses.append(epoch_total / n)
        report.val_losses.append(val_loss)
        logger.debug("%s epoch %d train=%.6f val=%.6f", config.model_id, epoch, epoch_total / n, val_loss)

        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_snapshot = params.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                report.stopped_early = True
                break

    params.load(best_snapshot)
    report.wall_time = time.perf_counter() - started
    logger.info(
        "%s labeled=%s stopped after %d epochs (best epoch %d, val %.6f, early=%s)",
        config.model_id, config.labeled, report.epochs_run, report.best_epoch, report.best_val_loss, report.stopped_early,
    )
    return report


# ------------------------------------------------------------
# K-fold
# ------------------------------------------------------------
def _run_fold(
    fold: int,
    plan,
    by_id: dict[int, Trajectory],
    model_configs: Sequence[ModelConfig],
    cfg: TrainConfig,
    n_patterns: int,
    origin: Optional[GeoPoint],
) -> FoldResult:
    train_ids, val_ids, test_ids = plan.split(fold)
    ell, h = model_configs[0].ell, model_configs[0].h

    try:
        # 標準化は学習側の航跡だけで決める
        train_points = np.concatenate([by_id[t].lonlat for t in train_ids])
        standardizer = fit_standardizer_array(train_points)
        fold_origin = origin or default_origin([by_id[t] for t in test_ids])
    except SeatrackError as exc:
        logger.warning("fold %d failed before training: %s", fold, exc.one_line())
        return FoldResult(fold=fold, n_train=0, n_val=0, n_test=0, failures=[f"fold={fold} {exc.one_line()}"])

    def window(ids):
        return stack_samples(
            segment_all([by_id[t] for t in ids], ell, h, standardizer=standardizer, n_patterns=n_patterns or None),
            ell=ell,
            h=h,
        )

    train_set, val_set, test_set = window(train_ids), window(val_ids), window(test_ids)
    result = FoldResult(fold=fold, n_train=len(train_set), n_val=len(val_set), n_test=len(test_set))
    logger.info("fold %d: %d/%d/%d windows (train/val/test)", fold, len(train_set), len(val_set), len(test_set))

    for mc in model_configs:
        tag = f"fold={fold} model={mc.model_id} labeled={int(mc.labeled)}"
        try:
            model = build_model(mc, make_rng(cfg.seed, "fold", fold, mc.model_id, int(mc.labeled)))
            if not mc.labeled:
                tr, va, te = train_set.without_psi(), val_set.without_psi(), test_set.without_psi()
            else:
                tr, va, te = train_set, val_set, test_set
            result.train_reports.append(train(model, tr, va, cfg))
            result.reports.append(evaluate_model(
                    model, te, standardizer, origin=fold_origin, fold=fold, trajectories=[by_id[t] for t in test_ids]
                ))
        except SeatrackError as exc:
            logger.warning("%s failed: %s", tag, exc.one_line())
            result.failures.append(f"{tag} {exc.one_line()}")
    return result


def cross_validate(
    trajectories: Sequence[Trajectory],
    model_configs: Sequence[ModelConfig],
    cfg: TrainConfig,
    *,
    K: int,
    delta_sec: float,
    pattern_names: Sequence[str] = (),
    val_fraction: float = 0.1,
    origin: Optional[GeoPoint] = None,
    threads: Optional[int] = None,
) -> CrossValResult:
    """
    航跡単位の K-fold。fold ごとに標準化・窓切り出し・学習・評価を行う。

    NOTE:
    - fold 同士は独立なのでスレッドで並列に回す（上限は SEATRACK_THREADS）
    - 結果は fold 番号の順に並べる
    - 1モデルが失敗しても他の fold / モデルは続ける（failures に記録）
    """
    if not model_configs:
        raise ConfigMismatch("at least one model is required")
    if len({(mc.ell, mc.h) for mc in model_configs}) != 1:
        raise ConfigMismatch("all models in one experiment must share ell and h")
    if any(mc.labeled for mc in model_configs) and any(t.label is None for t in trajectories):
        raise ConfigMismatch("labeled models need every trajectory to carry a pattern label")

    by_id = {t.traj_id: t for t in trajectories}
    plan = kfold_split(by_id.keys(), K, cfg.seed, val_fraction=val_fraction)
    n_patterns = len(pattern_names)
    workers = max(1, min(threads or settings.SEATRACK_THREADS, K))
    logger.info("cross validation: K=%d, %d trajectories, %d models, %d threads", K, len(by_id), len(model_configs), workers)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        folds = list(
            pool.map(
                lambda f: _run_fold(f, plan, by_id, model_configs, cfg, n_patterns, origin),
                range(K),
            )
        )
    return CrossValResult(delta_sec=delta_sec, h=model_configs[0].h, folds=folds, pattern_names=tuple(pattern_names))

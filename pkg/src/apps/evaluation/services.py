# src/apps/evaluation/services.py
from __future__ import annotations

import logging
import math
from typing import Iterable, Optional

import numpy as np

from apps.ais.schemas import Trajectory
from apps.common.errors import ShapeMismatch, UnsupportedFormat
from apps.geo.schemas import GeoPoint, Standardizer
from apps.geo.services import haversine_nmi_array
from apps.windowing.schemas import SampleBatch

from .schemas import EvalReport, ReportBundle

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("table", "kv", "cdf", "distance")


# ------------------------------------------------------------
# 指標
# ------------------------------------------------------------
def errors_per_step(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """N×h×2（[lon, lat], 度）どうしの大円距離 N×h（海里）。"""
    if preds.shape != targets.shape or preds.ndim != 3 or preds.shape[-1] != 2:
        raise ShapeMismatch(f"preds {preds.shape} vs targets {targets.shape}")
    return haversine_nmi_array(preds[..., 1], preds[..., 0], targets[..., 1], targets[..., 0])


def mae_per_horizon(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """MAE_j = ステップ j の距離誤差のサンプル平均。"""
    return errors_per_step(preds, targets).mean(axis=0)


def empirical_cdf(errors: np.ndarray) -> list[tuple[float, float]]:
    """
    並べ替えた誤差 e_(k) と k/N の組。同じ値が並んでもそれぞれ1点ずつ出す。
    """
    values = np.sort(np.asarray(errors, dtype=np.float64).reshape(-1))
    n = values.size
    if n < 1:
        raise ShapeMismatch("empirical CDF needs at least one value")
    return [(float(v), (k + 1) / n) for k, v in enumerate(values)]


def default_origin(trajectories: Iterable[Trajectory]) -> GeoPoint:
    """評価対象の航跡の始点の平均（距離別の誤差曲線の原点）。"""
    firsts = [t.states[0] for t in trajectories]
    if not firsts:
        raise ShapeMismatch("cannot pick an origin without trajectories")
    return GeoPoint(lat=sum(p.lat for p in firsts) / len(firsts), lon=sum(p.lon for p in firsts) / len(firsts))


def traveled_distances(
    trajectories: Iterable[Trajectory],
    traj_ids: np.ndarray,
    anchors: np.ndarray,
    origin: GeoPoint,
) -> np.ndarray:
    """
    原点から航跡に沿って進んだ距離（海里）。サンプルごとに、原点から航跡の始点まで
    の大円距離に、始点からアンカー k までの区間距離の和を足す。
    """
    cumulative: dict[int, np.ndarray] = {}
    for t in trajectories:
        lonlat = t.lonlat
        legs = haversine_nmi_array(lonlat[:-1, 1], lonlat[:-1, 0], lonlat[1:, 1], lonlat[1:, 0])
        start = haversine_nmi_array(
            np.array([origin.lat]), np.array([origin.lon]), lonlat[:1, 1], lonlat[:1, 0]
        )[0]
        cumulative[t.traj_id] = start + np.concatenate([[0.0], np.cumsum(legs)])

    out = np.empty(len(traj_ids), dtype=np.float64)
    for i, (tid, k) in enumerate(zip(traj_ids, anchors)):
        path = cumulative.get(int(tid))
        if path is None or not 0 <= int(k) < path.size:
            raise ShapeMismatch("sample does not belong to the given trajectories", traj=int(tid), k=int(k))
        out[i] = path[int(k)]
    return out


def predict_batched(model, batch: SampleBatch, chunk: int = 1000) -> np.ndarray:
    outs = []
    for start in range(0, len(batch), chunk):
        part = batch.take(np.arange(start, min(start + chunk, len(batch))))
        outs.append(model.predict(part.X, part.psi))
    return np.concatenate(outs, axis=0)


def evaluate_model(
    model,
    batch: SampleBatch,
    standardizer: Standardizer,
    *,
    origin: GeoPoint,
    fold: Optional[int] = None,
    trajectories: Optional[Iterable[Trajectory]] = None,
) -> EvalReport:
    """
    標準化空間の予測を地理座標に戻してから誤差を計算する。

    NOTE:
    - batch は標準化済み（窓切り出しで standardizer を通したもの）
    - trajectories を渡すと距離別曲線の横軸は原点から航跡に沿って進んだ距離。
      無ければ原点から最後の観測点までの大円距離で代用する
    """
    if len(batch) < 1:
        raise ShapeMismatch("no samples to evaluate", model=model.config.model_id)

    preds = standardizer.invert_array(predict_batched(model, batch))
    targets = standardizer.invert_array(batch.Y)
    errors = errors_per_step(preds, targets)

    if trajectories is not None:
        anchors = traveled_distances(trajectories, batch.traj_ids, batch.anchors, origin)
    else:
        last = standardizer.invert_array(batch.X[:, -1, :])
        anchors = haversine_nmi_array(
            np.full(len(batch), origin.lat), np.full(len(batch), origin.lon), last[:, 1], last[:, 0]
        )
    labels = None if batch.psi is None else np.argmax(batch.psi, axis=1)

    report = EvalReport(
        model_id=model.config.model_id,
        labeled=model.config.labeled,
        fold=fold,
        mae_per_horizon=errors.mean(axis=0),
        final_errors=errors[:, -1],
        anchor_distances=anchors,
        route_labels=labels,
    )
    logger.info(
        "evaluated %s labeled=%s fold=%s on %d samples: final MAE %.4f nmi",
        report.model_id, report.labeled, fold, report.n_samples, report.mae_per_horizon[-1],
    )
    return report


def mae_vs_distance(report: EvalReport, bin_nmi: float) -> list[tuple[float, float, int]]:
    """
    原点からの距離でビンに分けた最終ステップ誤差の平均。
    戻り値は (ビン中心, 平均誤差, 件数)。空のビンは出さない。
    """
    return _distance_rows(report.anchor_distances, report.final_errors, bin_nmi)


def _distance_rows(distances: np.ndarray, errors: np.ndarray, bin_nmi: float) -> list[tuple[float, float, int]]:
    if not bin_nmi > 0.0:
        raise ValueError("bin width must be positive")
    bins = np.floor(distances / bin_nmi).astype(np.int64)
    rows = []
    for b in np.unique(bins):
        mask = bins == b
        rows.append(((b + 0.5) * bin_nmi, float(errors[mask].mean()), int(mask.sum())))
    return rows


def per_route_mae(report: EvalReport) -> dict[int, float]:
    """ルート（ラベル）ごとの最終ステップ MAE。ラベルが無ければ空。"""
    if report.route_labels is None:
        return {}
    return {
        int(label): float(report.final_errors[report.route_labels == label].mean())
        for label in np.unique(report.route_labels)
    }


def improvement_percent(unlabeled: float, labeled: float) -> int:
    """(U−L)/U を整数パーセントに四捨五入（0.5 は切り上げ）。"""
    return int(math.floor((unlabeled - labeled) / unlabeled * 100.0 + 0.5))


# ------------------------------------------------------------
# 出力
# ------------------------------------------------------------
def emit_report(bundle: ReportBundle, fmt: str, *, bin_nmi: float = 5.0, per_route: bool = False) -> bytes:
    """
    仕様:
    - table: モデルを行、各ホライズンの Unlabeled / Labeled / 改善率 を列にした表
    - kv: 1行1レコードの key=value（fold ごと + fold 平均）
    - cdf: モデルごとのブロックに「誤差 累積割合」の2列
    - distance: モデルごとのブロックに「ビン中心 平均誤差 件数」の3列
    - 数値は固定小数点なので、同じ結果なら同じバイト列になる
    """
    if fmt == "table":
        text = _format_table(bundle)
    elif fmt == "kv":
        text = _format_kv(bundle, per_route=per_route)
    elif fmt == "cdf":
        text = _format_cdf(bundle)
    elif fmt == "distance":
        text = _format_distance(bundle, bin_nmi)
    else:
        raise UnsupportedFormat(f"unsupported report format: {fmt!r} (choose from {', '.join(REPORT_FORMATS)})")
    return text.encode("utf-8")


def _horizon_label(step: int, delta_sec: float) -> str:
    minutes = step * delta_sec / 60.0
    if abs(minutes % 60.0) < 1e-9:
        return f"{int(round(minutes / 60.0))}h"
    return f"{minutes:g}min"


def _groups(bundle: ReportBundle) -> list[tuple[str, bool]]:
    out: list[tuple[str, bool]] = []
    for r in bundle.reports:
        key = (r.model_id, r.labeled)
        if key not in out:
            out.append(key)
    return out


def _format_table(bundle: ReportBundle) -> str:
    horizons = bundle.horizons
    folds = [f for f in bundle.folds if f is not None]
    lines = [f"# MAE (nmi), mean over {max(1, len(folds))} fold(s), delta={bundle.delta_sec / 60.0:g} min"]

    head = f"{'model':<14}"
    for j in horizons:
        label = _horizon_label(j, bundle.delta_sec)
        head += f" | {label + ' U':>8} {label + ' L':>8} {'impr':>5}"
    lines.append(head)
    lines.append("-" * len(head))

    for model_id in bundle.model_ids:
        u = bundle.mean_mae(model_id, False)
        lab = bundle.mean_mae(model_id, True)
        row = f"{model_id:<14}"
        for j in horizons:
            u_val = None if u is None else float(u[j - 1])
            l_val = None if lab is None else float(lab[j - 1])
            row += " | " + _cell(u_val) + " " + _cell(l_val) + " "
            if u_val is not None and l_val is not None and u_val > 0.0:
                row += f"{str(improvement_percent(u_val, l_val)) + '%':>5}"
            else:
                row += f"{'-':>5}"
        lines.append(row)

    for failure in bundle.failures:
        lines.append(f"# failed: {failure}")
    return "\n".join(lines) + "\n"


def _cell(value: Optional[float]) -> str:
    return f"{'-':>8}" if value is None else f"{value:>8.3f}"


def _format_kv(bundle: ReportBundle, *, per_route: bool) -> str:
    lines = []
    for r in bundle.reports:
        lines.append(_kv_line(r.model_id, r.labeled, "-" if r.fold is None else str(r.fold), r.n_samples, r.mae_per_horizon))
        if per_route:
            for label, mae in per_route_mae(r).items():
                name = bundle.pattern_names[label] if label < len(bundle.pattern_names) else str(label)
                lines.append(
                    f"model={r.model_id} labeled={int(r.labeled)} fold={'-' if r.fold is None else r.fold} "
                    f"route={name} mae_final={mae:.6f}"
                )
    if len(bundle.folds) > 1:
        for model_id, labeled in _groups(bundle):
            chosen = bundle.select(model_id, labeled)
            n = sum(r.n_samples for r in chosen)
            lines.append(_kv_line(model_id, labeled, "mean", n, bundle.mean_mae(model_id, labeled)))
    for failure in bundle.failures:
        lines.append(f"failed={failure}")
    return "\n".join(lines) + "\n"


def _kv_line(model_id: str, labeled: bool, fold: str, n: int, mae: np.ndarray) -> str:
    parts = [f"model={model_id}", f"labeled={int(labeled)}", f"fold={fold}", f"n={n}"]
    parts += [f"mae_{j + 1}={v:.6f}" for j, v in enumerate(mae)]
    return " ".join(parts)


def _pooled(bundle: ReportBundle, model_id: str, labeled: bool, attr: str) -> np.ndarray:
    return np.concatenate([getattr(r, attr) for r in bundle.select(model_id, labeled)])


def _format_cdf(bundle: ReportBundle) -> str:
    blocks = []
    for model_id, labeled in _groups(bundle):
        lines = [f"# model={model_id} labeled={int(labeled)}", "# error_nmi fraction"]
        for e, frac in empirical_cdf(_pooled(bundle, model_id, labeled, "final_errors")):
            lines.append(f"{e:.6f} {frac:.6f}")
        blocks.append("\n".join(lines))
    # gnuplot の index で選べるよう、ブロックの間は空行2つ
    return "\n\n\n".join(blocks) + "\n"


def _format_distance(bundle: ReportBundle, bin_nmi: float) -> str:
    blocks = []
    for model_id, labeled in _groups(bundle):
        lines = [f"# model={model_id} labeled={int(labeled)} bin_nmi={bin_nmi:g}", "# distance_nmi mean_error_nmi count"]
        rows = _distance_rows(
            _pooled(bundle, model_id, labeled, "anchor_distances"),
            _pooled(bundle, model_id, labeled, "final_errors"),
            bin_nmi,
        )
        for centre, err, count in rows:
            lines.append(f"{centre:.3f} {err:.6f} {count}")
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"

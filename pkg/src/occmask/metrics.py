"""Standard depth-evaluation metrics (Abs Rel, Sq Rel, RMSE, RMSE log, delta accuracies)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidInputError

# evaluation protocol constants
DEFAULT_CAP = 80.0
MIN_PRED_DEPTH = 1e-3

COLUMNS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3")
HEADERS = ("Abs Rel", "Sq Rel", "RMSE", "RMSE log", "d<1.25", "d<1.25^2", "d<1.25^3")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    a1: float
    a2: float
    a3: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in COLUMNS)


def _valid_pixels(pred, gt, valid, cap: float) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if not cap > 0:
        raise InvalidInputError(f"depth cap must be positive, got {cap}")
    if valid is None:
        mask = gt > 0
    else:
        mask = np.asarray(valid).astype(bool)
        if mask.shape != gt.shape:
            raise InvalidInputError("valid mask does not match the depth maps")
        if np.any(~(gt[mask] > 0)):
            raise InvalidInputError("ground truth must be positive on valid pixels")
    mask = mask & (gt <= cap)
    if not np.any(mask):
        raise InvalidInputError("no valid pixels to evaluate")
    return pred[mask], gt[mask]


def depth_metrics(pred, gt, valid=None, cap: float = DEFAULT_CAP) -> DepthMetrics:
    """Metrics over valid pixels whose ground truth does not exceed ``cap``.

    ``valid`` defaults to ``gt > 0``. Predictions are floored at 1e-3 m before
    any computation; a nonpositive prediction on a valid pixel is an error.
    Accuracy thresholds are strict: ``delta < 1.25 ** i``.
    """
    p, g = _valid_pixels(pred, gt, valid, cap)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InvalidInputError("predictions must be finite and positive on valid pixels")
    p = np.maximum(p, MIN_PRED_DEPTH)

    delta = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        a1=float(np.mean(delta < 1.25)),
        a2=float(np.mean(delta < 1.25**2)),
        a3=float(np.mean(delta < 1.25**3)),
    )


def median_scaling(pred, gt, valid=None, cap: float = DEFAULT_CAP) -> float:
    """Scale factor ``median(gt) / median(pred)`` over the valid pixels."""
    p, g = _valid_pixels(pred, gt, valid, cap)
    med = float(np.median(p))
    if med == 0 or not np.isfinite(med):
        raise InvalidInputError("median prediction is zero; cannot scale")
    return float(np.median(g)) / med


def mean_metrics(items: Sequence[DepthMetrics]) -> DepthMetrics:
    if not items:
        raise InvalidInputError("no metrics to average")
    arr = np.array([m.as_tuple() for m in items])
    return DepthMetrics(*(float(x) for x in arr.mean(axis=0)))


def format_table(rows: Mapping[str, DepthMetrics] | DepthMetrics, precision: int = 3) -> str:
    """Aligned plain-text table in the column order Abs Rel ... d<1.25^3."""
    if isinstance(rows, DepthMetrics):
        rows = {"": rows}
    label_w = max([len(name) for name in rows] + [0])
    col_w = max(max(len(h) for h in HEADERS), precision + 3)
    head = " " * label_w + ("  " if label_w else "") + "  ".join(h.rjust(col_w) for h in HEADERS)
    lines = [head]
    for name, m in rows.items():
        cells = "  ".join(f"{v:.{precision}f}".rjust(col_w) for v in m.as_tuple())
        lines.append(name.ljust(label_w) + ("  " if label_w else "") + cells)
    return "\n".join(lines)


def metrics_from_dict(data: Mapping[str, float]) -> DepthMetrics:
    try:
        return DepthMetrics(**{f.name: float(data[f.name]) for f in fields(DepthMetrics)})
    except KeyError as exc:
        raise InvalidInputError(f"metrics missing field {exc.args[0]!r}") from None


def evaluate_pairs(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    median_scale: bool = False,
    cap: float = DEFAULT_CAP,
    valid: Optional[Sequence[np.ndarray]] = None,
) -> DepthMetrics:
    """Average per-image metrics, optionally aligning each prediction by median scaling."""
    results = []
    for i, (pred, gt) in enumerate(pairs):
        mask = None if valid is None else valid[i]
        pred = np.asarray(pred, dtype=np.float64)
        if median_scale:
            pred = pred * median_scaling(pred, gt, mask, cap)
        results.append(depth_metrics(pred, gt, mask, cap))
    return mean_metrics(results)

"""Prequential (test-then-train) evaluation.

Every round the learner predicts, sees the label, then updates; the
prediction recorded for a round is always the pre-update one.

Window convention: round ``t`` (1-based) of a ``T``-round run falls in the
fractional window ``[a, b)`` iff ``a*T < t <= b*T``. So ``[0.10, 0.15)`` on
``T = 1000`` covers rounds 101..150 and ``[0, 1)`` covers the whole run.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

ROUNDS_HEADER = ("round", "correct", "combined_loss", "cumulative_error")


@dataclass(frozen=True, order=True)
class SegmentWindow:
    start: float
    end: float

    def __post_init__(self):
        if not 0 <= self.start < self.end <= 1:
            raise ValueError(f"window needs 0 <= start < end <= 1, got [{self.start}, {self.end}]")

    def bounds(self, T: int) -> tuple[int, int]:
        """``(lo, hi)`` such that the window holds rounds ``lo + 1 .. hi``."""
        # the epsilon absorbs binary representation error, e.g. 0.15 * 1000
        return math.floor(self.start * T + 1e-9), math.floor(self.end * T + 1e-9)

    @property
    def label(self) -> str:
        return f"{self.start * 100:g}-{self.end * 100:g}%"

    @classmethod
    def parse(cls, value) -> "SegmentWindow":
        if isinstance(value, SegmentWindow):
            return value
        start, end = value
        return cls(float(start), float(end))


FULL = SegmentWindow(0.0, 1.0)
FIRST_HALF_PERCENT = SegmentWindow(0.0, 0.005)
EARLY = SegmentWindow(0.10, 0.15)
LATE = SegmentWindow(0.60, 0.80)
TABLE_WINDOWS = (FIRST_HALF_PERCENT, EARLY, LATE)


class TrainingError(RuntimeError):
    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
        self.round = round_index


@dataclass
class ExperimentResult:
    correct: np.ndarray = field(repr=False)
    combined_loss: np.ndarray = field(repr=False)
    window_errors: dict[SegmentWindow, float]
    alpha_rounds: np.ndarray = field(repr=False)
    alpha_trajectory: np.ndarray = field(repr=False)
    expected_depths: np.ndarray = field(repr=False)
    head_depths: tuple[int, ...]
    wall_time: float

    @property
    def step_count(self) -> int:
        return len(self.correct)

    @property
    def mistakes(self) -> int:
        return int(self.step_count - self.correct.sum())

    @property
    def final_cumulative_error(self) -> float:
        return self.mistakes / self.step_count if self.step_count else 0.0

    @property
    def cumulative_error(self) -> np.ndarray:
        t = np.arange(1, self.step_count + 1)
        return np.cumsum(~self.correct) / t

    def window_error(self, window: SegmentWindow) -> float:
        return window_error(self.correct, window)

    def mean_expected_depth(self, window: SegmentWindow) -> float:
        lo, hi = window.bounds(self.step_count)
        return float(self.expected_depths[lo:hi].mean()) if hi > lo else math.nan


def window_error(correct: np.ndarray, window: SegmentWindow) -> float:
    """Error rate among the rounds inside ``window``; NaN if it holds no rounds."""
    lo, hi = window.bounds(len(correct))
    if hi <= lo:
        return math.nan
    return float(np.count_nonzero(~correct[lo:hi]) / (hi - lo))


def expected_depth(alpha_snapshot, depths=None) -> float:
    """Hedge-weighted mean depth; ``depths`` defaults to ``1..K``."""
    alpha = np.asarray(alpha_snapshot, dtype=np.float64)
    if depths is None:
        depths = np.arange(1, len(alpha) + 1)
    return float(alpha @ np.asarray(depths, dtype=np.float64))


def run_prequential(
    trainer,
    stream: Iterable,
    windows: Iterable[SegmentWindow] = (),
    alpha_log_stride: int = 100,
) -> ExperimentResult:
    """Drive ``trainer.step`` over ``stream`` and collect prequential metrics.

    Alpha snapshots (taken after each update) are logged on round 1 and every
    ``alpha_log_stride`` rounds; expected depth is kept for every round.
    Exceptions from the trainer are re-raised as ``TrainingError`` carrying
    the 1-based round index.
    """
    if alpha_log_stride < 1:
        raise ValueError(f"alpha_log_stride must be >= 1, got {alpha_log_stride}")
    depths = np.asarray(trainer.net.config.head_depths, dtype=np.float64)
    correct, losses, exp_depth = [], [], []
    alpha_rounds, alphas = [], []
    started = time.perf_counter()
    t = 0
    for t, (x, y) in enumerate(stream, start=1):
        try:
            rec = trainer.step(x, y)
        except Exception as exc:
            raise TrainingError(t, exc) from exc
        correct.append(rec.correct)
        losses.append(rec.combined_loss)
        exp_depth.append(float(rec.alpha_snapshot @ depths))
        if t == 1 or t % alpha_log_stride == 0:
            alpha_rounds.append(t)
            alphas.append(rec.alpha_snapshot)
    wall = time.perf_counter() - started
    correct_arr = np.array(correct, dtype=bool)
    k = len(depths)
    result = ExperimentResult(
        correct=correct_arr,
        combined_loss=np.array(losses),
        window_errors={},
        alpha_rounds=np.array(alpha_rounds, dtype=np.int64),
        alpha_trajectory=np.array(alphas).reshape(-1, k),
        expected_depths=np.array(exp_depth),
        head_depths=tuple(int(d) for d in depths),
        wall_time=wall,
    )
    result.window_errors = {w: window_error(correct_arr, w) for w in windows}
    return result


# ---------------------------------------------------------------------------
# metrics files


def _fmt(v: float) -> str:
    return repr(float(v))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_dict(result: ExperimentResult, name: str, config: dict | None = None) -> dict:
    return {
        "name": name,
        "step_count": result.step_count,
        "mistakes": result.mistakes,
        "final_cumulative_error": result.final_cumulative_error,
        "window_errors": {w.label: result.window_errors[w] for w in sorted(result.window_errors)},
        "head_depths": list(result.head_depths),
        "final_alphas": result.alpha_trajectory[-1].tolist() if len(result.alpha_trajectory) else [],
        "config": config,
    }


def write_metrics(result: ExperimentResult, out_dir, name: str, config: dict | None = None) -> list[Path]:
    """Write ``<name>.rounds.csv``, ``<name>.alphas.csv`` and ``<name>.summary.json``.

    * rounds: ``round,correct,combined_loss,cumulative_error`` (correct is 0/1)
    * alphas: ``round,alpha_1..alpha_K`` at the logged rounds
    * summary: final and windowed errors plus the echoed config

    Wall time is left out so identical runs give identical bytes. Each file
    is written to a temporary name and renamed; on failure all files of the
    run are removed.
    """
    out = Path(out_dir)
    paths = [out / f"{name}.rounds.csv", out / f"{name}.alphas.csv", out / f"{name}.summary.json"]
    cum = result.cumulative_error
    rounds = (
        (t, int(c), _fmt(loss), _fmt(e))
        for t, (c, loss, e) in enumerate(zip(result.correct, result.combined_loss, cum), start=1)
    )
    k = len(result.head_depths)
    alpha_rows = (
        (int(t), *(_fmt(a) for a in row)) for t, row in zip(result.alpha_rounds, result.alpha_trajectory)
    )
    texts = [
        _csv_text(ROUNDS_HEADER, rounds),
        _csv_text(("round", *(f"alpha_{i}" for i in range(1, k + 1))), alpha_rows),
        json.dumps(summary_dict(result, name, config), indent=2, sort_keys=True) + "\n",
    ]
    try:
        for path, text in zip(paths, texts):
            _atomic_write(path, text)
    except BaseException:
        for path in paths:
            path.unlink(missing_ok=True)
        raise
    return paths

"""Experiment configs, suite execution and the desk-scale replication presets.

Config files are JSON. A suite looks like::

    {
      "output_dir": "results/demo",
      "parallelism": 2,
      "experiments": [
        {
          "name": "hbp-syn8",
          "dataset": "Syn8",
          "stream": {"recipe": "syn8", "length": 100000},
          "model": {"kind": "hbp", "depth": 16, "width": 32},
          "hyperparams": {"eta": 0.01, "beta": 0.99, "s": 0.2},
          "windows": [[0, 0.005], [0.1, 0.15], [0.6, 0.8]],
          "seeds": {"stream": 0, "init": 0},
          "alpha_log_stride": 100
        }
      ]
    }

See the README for every key.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import (
    FULL,
    TABLE_WINDOWS,
    ExperimentResult,
    SegmentWindow,
    _atomic_write,
    _csv_text,
    run_prequential,
    summary_dict,
    write_metrics,
)
from .network import NetConfig, init_network
from .numeric import make_rng
from .streams import ConceptSpec, CsvSource, StreamSpec, cd1, cd2, syn8
from .trainers import (
    DEFAULT_MOMENTUM_ETA,
    BaselineHyperParams,
    HbpHyperParams,
    HedgeBackprop,
    OnlineBackprop,
)

log = logging.getLogger(__name__)

MODEL_KINDS = ("hbp", "ogd", "linear")
RECIPES = {"syn8": syn8, "cd1": cd1, "cd2": cd2}
DESK_WIDTH = 32


class ConfigError(ValueError):
    """Every problem found in a config, one message per violation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    net: NetConfig
    hyperparams: HbpHyperParams | BaselineHyperParams

    @property
    def depth(self) -> int:
        return self.net.num_hidden + 1

    @property
    def method(self) -> str:
        if self.kind == "hbp":
            return "Hedge BP"
        if self.kind == "linear":
            return "Linear OGD"
        hp = self.hyperparams
        if hp.nesterov:
            return "OGD+Nesterov"
        return "OGD+Momentum" if hp.momentum else "OGD (Online BP)"

    def build(self, init_seed: int):
        net = init_network(self.net, make_rng(init_seed))
        if self.kind == "hbp":
            return HedgeBackprop(net, self.hyperparams)
        return OnlineBackprop(net, self.hyperparams)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "net": self.net.to_dict(), "hyperparams": _hp_dict(self.hyperparams)}


def _hp_dict(hp) -> dict:
    d = dict(hp.__dict__)
    if "hedge_loss_clip" in d:
        d["hedge_loss_clip"] = list(d["hedge_loss_clip"])
    return d


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    stream: StreamSpec
    model: ModelSpec
    windows: tuple[SegmentWindow, ...] = TABLE_WINDOWS
    init_seed: int = 0
    dataset: str = "custom"
    alpha_log_stride: int = 100

    def run(self) -> ExperimentResult:
        windows = self.windows if FULL in self.windows else (*self.windows, FULL)
        return run_prequential(self.model.build(self.init_seed), self.stream, windows, self.alpha_log_stride)

    def echo(self) -> dict:
        s = self.stream
        stream = (
            {"csv": dict(s.csv.__dict__), "length": s.length_hint}
            if s.csv is not None
            else {"seed": s.seed, "segments": [{"concept": c.to_dict(), "count": n} for c, n in s.segments]}
        )
        return {
            "name": self.name,
            "dataset": self.dataset,
            "stream": stream,
            "model": self.model.to_dict(),
            "windows": [[w.start, w.end] for w in self.windows],
            "init_seed": self.init_seed,
            "alpha_log_stride": self.alpha_log_stride,
        }


@dataclass(frozen=True)
class SuiteConfig:
    experiments: tuple[ExperimentConfig, ...]
    output_dir: str = "results"
    parallelism: int = 1


# ---------------------------------------------------------------------------
# parsing and validation


class _Collector:
    def __init__(self):
        self.problems: list[str] = []

    def add(self, where: str, msg: str):
        self.problems.append(f"{where}: {msg}" if where else msg)

    def build(self, where: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, TypeError, KeyError) as exc:
            if isinstance(exc, KeyError):
                self.add(where, f"missing key {exc.args[0]!r}")
                return None
            msg = str(exc)
            # "invalid <Type>: a; b" carries one problem per clause
            if msg.startswith("invalid ") and ": " in msg:
                msg = msg.split(": ", 1)[1]
            for part in msg.split("; "):
                self.add(where, part)
            return None


def _check_keys(col: _Collector, where: str, d, allowed: set[str]):
    if not isinstance(d, dict):
        col.add(where, f"expected an object, got {type(d).__name__}")
        return False
    for k in sorted(set(d) - allowed):
        col.add(where, f"unknown key {k!r}")
    return True


def parse_stream(d: dict, col: _Collector, where: str = "stream", base_dir: Path | None = None) -> StreamSpec | None:
    if not _check_keys(col, where, d, {"recipe", "seed", "length", "segment_length", "width", "concept", "segments", "csv"}):
        return None
    seed = d.get("seed", 0)
    if "recipe" in d:
        recipe = d["recipe"]
        if recipe not in RECIPES:
            col.add(f"{where}.recipe", f"must be one of {sorted(RECIPES)}, got {recipe!r}")
            return None
        kwargs = {"seed": seed, "width": d.get("width", DESK_WIDTH), **d.get("concept", {})}
        if recipe == "syn8":
            if "length" in d:
                kwargs["length"] = d["length"]
        elif "segment_length" in d:
            kwargs["segment_length"] = d["segment_length"]
        spec = col.build(where, RECIPES[recipe], **kwargs)
    elif "csv" in d:
        c = dict(d["csv"])
        if base_dir is not None and "path" in c and not Path(c["path"]).is_absolute():
            c["path"] = str(base_dir / c["path"])
        for key in ("label_values", "feature_ranges"):
            if c.get(key) is not None:
                c[key] = tuple(tuple(v) if isinstance(v, list) else v for v in c[key])
        source = col.build(f"{where}.csv", CsvSource, **c)
        spec = source and StreamSpec(csv=source, length_hint=d.get("length"))
    elif "segments" in d:
        segs = []
        for i, seg in enumerate(d["segments"]):
            w = f"{where}.segments[{i}]"
            if not _check_keys(col, w, seg, {"concept", "count"}):
                continue
            concept = col.build(f"{w}.concept", lambda c: ConceptSpec(**c), seg.get("concept", {}))
            if concept is not None:
                segs.append((concept, seg.get("count", 0)))
        spec = StreamSpec(tuple(segs), seed=seed)
    else:
        col.add(where, "needs one of 'recipe', 'segments' or 'csv'")
        return None
    if spec is not None:
        for p in spec.problems():
            col.add(where, p)
    return spec


def parse_model(d: dict, stream: StreamSpec | None, col: _Collector, where: str, hp_dict: dict | None):
    if not _check_keys(col, where, d, {"kind", "depth", "width", "hidden_widths", "attach_input_classifier", "heads",
                                       "input_dim", "num_classes", "activation"}):
        return None
    kind = d.get("kind")
    if kind not in MODEL_KINDS:
        col.add(f"{where}.kind", f"must be one of {list(MODEL_KINDS)}, got {kind!r}")
        return None
    dims = (stream.input_dim, stream.num_classes) if stream is not None and (stream.segments or stream.csv) else (None, None)
    input_dim = d.get("input_dim", dims[0])
    num_classes = d.get("num_classes", dims[1])
    if None not in dims and (input_dim, num_classes) != dims:
        col.add(where, f"model (input_dim, num_classes) = {(input_dim, num_classes)} but stream provides {dims}")
        return None
    if input_dim is None:
        return None
    width = d.get("width", DESK_WIDTH)
    if kind == "linear":
        net = col.build(where, NetConfig.fixed_depth, input_dim, 1, width, num_classes)
    elif "hidden_widths" in d:
        heads = d.get("heads")
        if kind == "ogd" and heads is None:
            heads = [len(d["hidden_widths"])]
        net = col.build(where, NetConfig, input_dim, tuple(d["hidden_widths"]), num_classes,
                        activation=d.get("activation", "relu"),
                        attach_input_classifier=d.get("attach_input_classifier", False),
                        heads=None if heads is None else tuple(heads))
    elif "depth" in d:
        make = NetConfig.hedged if kind == "hbp" else NetConfig.fixed_depth
        net = col.build(where, make, input_dim, d["depth"], width, num_classes)
    else:
        col.add(where, "needs 'depth' or 'hidden_widths'")
        return None
    if net is not None and kind != "hbp" and net.num_classifiers != 1:
        col.add(where, f"{kind} models need exactly one classifier, got {net.num_classifiers}")
        net = None

    hp_dict = dict(hp_dict or {})
    hp_where = where.rsplit(".", 1)[0] + ".hyperparams"
    if kind == "hbp":
        if "hedge_loss_clip" in hp_dict:
            hp_dict["hedge_loss_clip"] = tuple(hp_dict["hedge_loss_clip"])
        hp = col.build(hp_where, HbpHyperParams, **hp_dict)
    else:
        if hp_dict.get("momentum") and "eta" not in hp_dict:
            hp_dict["eta"] = DEFAULT_MOMENTUM_ETA
        hp = col.build(hp_where, BaselineHyperParams, **hp_dict)
    if net is None or hp is None:
        return None
    return ModelSpec(kind, net, hp)


def parse_experiment(d: dict, col: _Collector, where: str, base_dir: Path | None = None) -> ExperimentConfig | None:
    if not _check_keys(col, where, d, {"name", "dataset", "stream", "model", "hyperparams", "windows", "seeds",
                                       "alpha_log_stride"}):
        return None
    name = d.get("name")
    if not isinstance(name, str) or not name or "/" in name:
        col.add(f"{where}.name", f"needs a non-empty name without '/', got {name!r}")
    seeds = d.get("seeds", {})
    if _check_keys(col, f"{where}.seeds", seeds, {"stream", "init"}):
        for k in ("stream", "init"):
            if k not in seeds:
                col.add(f"{where}.seeds", f"missing seed {k!r}")
            elif not isinstance(seeds[k], int) or seeds[k] < 0:
                col.add(f"{where}.seeds.{k}", f"must be a non-negative integer, got {seeds[k]!r}")
    stream_d = dict(d.get("stream", {}))
    if isinstance(seeds, dict) and isinstance(seeds.get("stream"), int):
        stream_d["seed"] = seeds["stream"]
    stream = parse_stream(stream_d, col, f"{where}.stream", base_dir) if "stream" in d else None
    if "stream" not in d:
        col.add(where, "missing 'stream'")
    model = parse_model(d.get("model", {}), stream, col, f"{where}.model", d.get("hyperparams"))
    windows = []
    for i, w in enumerate(d.get("windows", [[w.start, w.end] for w in TABLE_WINDOWS])):
        win = col.build(f"{where}.windows[{i}]", SegmentWindow.parse, w)
        if win is not None:
            windows.append(win)
    stride = d.get("alpha_log_stride", 100)
    if not isinstance(stride, int) or stride < 1:
        col.add(f"{where}.alpha_log_stride", f"must be a positive integer, got {stride!r}")
    if stream is None or model is None or not isinstance(seeds, dict) or col.problems:
        return None
    return ExperimentConfig(
        name=name,
        stream=stream,
        model=model,
        windows=tuple(windows),
        init_seed=seeds["init"],
        dataset=d.get("dataset", stream_d.get("recipe", "custom")),
        alpha_log_stride=stride,
    )


def parse_suite(d: dict, base_dir: Path | None = None) -> SuiteConfig:
    """Validate a whole suite, raising ``ConfigError`` with every violation."""
    col = _Collector()
    if not _check_keys(col, "", d, {"experiments", "output_dir", "parallelism"}):
        raise ConfigError(col.problems)
    exps = d.get("experiments")
    if not isinstance(exps, list) or not exps:
        col.add("experiments", "needs a non-empty list")
        exps = []
    names = [e.get("name") for e in exps if isinstance(e, dict)]
    for dup in sorted({n for n in names if isinstance(n, str) and names.count(n) > 1}):
        col.add("experiments", f"duplicate experiment name {dup!r}")
    par = d.get("parallelism", 1)
    if not isinstance(par, int) or par < 1:
        col.add("parallelism", f"must be a positive integer, got {par!r}")
    parsed = []
    for i, e in enumerate(exps):
        sub = _Collector()
        cfg = parse_experiment(e, sub, f"experiments[{i}]", base_dir)
        col.problems += sub.problems
        parsed.append(cfg)
    if col.problems:
        raise ConfigError(col.problems)
    return SuiteConfig(tuple(parsed), str(d.get("output_dir", "results")), par)


def load_suite(path) -> SuiteConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON: {exc}"]) from None
    return parse_suite(data, base_dir=path.parent)


def load_stream(path) -> StreamSpec:
    path = Path(path)
    col = _Collector()
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON: {exc}"]) from None
    spec = parse_stream(data, col, "stream", base_dir=path.parent)
    if col.problems:
        raise ConfigError(col.problems)
    return spec


# ---------------------------------------------------------------------------
# running


def _run_one(cfg: ExperimentConfig, out_dir: str) -> dict:
    row = {"name": cfg.name, "dataset": cfg.dataset, "method": cfg.model.method, "layers": cfg.model.depth}
    try:
        result = cfg.run()
        write_metrics(result, out_dir, cfg.name, cfg.echo())
    except Exception as exc:  # recorded in the suite summary
        log.error("experiment %s failed: %s", cfg.name, exc)
        return {**row, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    summary = summary_dict(result, cfg.name)
    log.info("experiment %s: final error %.4f (%.1fs)", cfg.name, result.final_cumulative_error, result.wall_time)
    return {**row, "status": "ok", "final_error": result.final_cumulative_error,
            "window_errors": summary["window_errors"]}


def run_suite(suite: SuiteConfig, output_dir=None, parallelism: int | None = None) -> list[dict]:
    """Run every experiment, write per-run metrics plus ``suite_summary.csv``
    and ``suite_table.csv``; returns one row per experiment in config order."""
    out = str(output_dir or suite.output_dir)
    workers = parallelism or suite.parallelism
    if workers > 1 and len(suite.experiments) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, suite.experiments, [out] * len(suite.experiments)))
    else:
        rows = [_run_one(cfg, out) for cfg in suite.experiments]
    write_suite_tables(rows, out)
    return rows


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_suite_tables(rows: list[dict], out_dir):
    """``suite_summary.csv``: one line per experiment.
    ``suite_table.csv``: method x layers rows, one column per dataset (final error)."""
    out = Path(out_dir)
    summary = [
        (r["name"], r["dataset"], r["method"], r["layers"], r["status"], _fmt(r.get("final_error")), r.get("error", ""))
        for r in rows
    ]
    _atomic_write(out / "suite_summary.csv",
                  _csv_text(("name", "dataset", "method", "layers", "status", "final_error", "error"), summary))
    datasets = list(dict.fromkeys(r["dataset"] for r in rows))
    methods = list(dict.fromkeys((r["method"], r["layers"]) for r in rows))
    cell = {(r["method"], r["layers"], r["dataset"]): r for r in rows}
    table = []
    for method, layers in methods:
        line = [method, layers]
        for ds in datasets:
            r = cell.get((method, layers, ds))
            line.append("" if r is None else ("failed" if r["status"] != "ok" else _fmt(r["final_error"])))
        table.append(line)
    _atomic_write(out / "suite_table.csv", _csv_text(("method", "layers", *datasets), table))


# ---------------------------------------------------------------------------
# desk-scale presets (seeds are fixed so every user gets the same numbers)

PRESET_SEED = 2017
MOMENTUM = 0.9
MAIN_TABLE_DEPTHS = (2, 3, 4, 8, 16, 20)
DILEMMA_DEPTHS = (2, 4, 8, 16)
ROBUSTNESS_DEPTHS = (12, 16, 20, 30)
PRESETS = ("depth-dilemma", "main-table", "alpha-evolution", "drift", "depth-robustness")


def model_spec(kind: str, depth: int, input_dim: int, num_classes: int, width: int = DESK_WIDTH,
               momentum: float = 0.0, nesterov: bool = False, hp=None) -> ModelSpec:
    if kind == "hbp":
        return ModelSpec("hbp", NetConfig.hedged(input_dim, depth, width, num_classes), hp or HbpHyperParams())
    if kind == "linear":
        depth = 1
    if hp is None:
        hp = (BaselineHyperParams(DEFAULT_MOMENTUM_ETA, momentum, nesterov) if momentum
              else BaselineHyperParams())
    return ModelSpec("ogd" if kind != "linear" else "linear",
                     NetConfig.fixed_depth(input_dim, depth, width, num_classes), hp)


def _stream(dataset: str, seed: int, length: int | None) -> StreamSpec:
    if dataset == "syn8":
        return syn8(seed) if length is None else syn8(seed, length=length)
    fn = RECIPES[dataset]
    return fn(seed) if length is None else fn(seed, segment_length=max(1, length // 3))


def _exp(name, dataset, stream, model, windows=TABLE_WINDOWS, seed=PRESET_SEED, stride=100):
    return ExperimentConfig(name, stream, model, windows, init_seed=seed, dataset=dataset, alpha_log_stride=stride)


def preset_suite(name: str, length: int | None = None) -> SuiteConfig:
    """The experiments behind one replication preset.

    ``length`` shrinks the streams (total instances) for quick looks; the
    default is the desk scale of 10^5 Syn8 instances and 3 x 3*10^4 drift
    instances.
    """
    seed = PRESET_SEED
    if name == "depth-dilemma":
        s = _stream("syn8", seed, length)
        exps = [_exp(f"ogd-{d}", "Syn8", s, model_spec("ogd", d, 50, 2)) for d in DILEMMA_DEPTHS]
    elif name == "main-table":
        exps = []
        for ds, label in (("syn8", "Syn8"), ("cd1", "CD1"), ("cd2", "CD2")):
            s = _stream(ds, seed, length)
            exps.append(_exp(f"{ds}-linear", label, s, model_spec("linear", 1, 50, 2)))
            exps += [_exp(f"{ds}-ogd-{d}", label, s, model_spec("ogd", d, 50, 2)) for d in MAIN_TABLE_DEPTHS]
            exps.append(_exp(f"{ds}-momentum-20", label, s, model_spec("ogd", 20, 50, 2, momentum=MOMENTUM)))
            exps.append(_exp(f"{ds}-nesterov-20", label, s,
                             model_spec("ogd", 20, 50, 2, momentum=MOMENTUM, nesterov=True)))
            exps.append(_exp(f"{ds}-hbp-20", label, s, model_spec("hbp", 20, 50, 2)))
    elif name == "alpha-evolution":
        s = _stream("syn8", seed, length)
        exps = [_exp("hbp-16", "Syn8", s, model_spec("hbp", 16, 50, 2), stride=10)]
    elif name == "drift":
        exps = []
        for ds, label in (("cd1", "CD1"), ("cd2", "CD2")):
            s = _stream(ds, seed, length)
            exps += [_exp(f"{ds}-ogd-{d}", label, s, model_spec("ogd", d, 50, 2)) for d in (2, 4, 16)]
            exps.append(_exp(f"{ds}-hbp-16", label, s, model_spec("hbp", 16, 50, 2)))
    elif name == "depth-robustness":
        s = _stream("syn8", seed, length)
        exps = []
        for d in ROBUSTNESS_DEPTHS:
            exps.append(_exp(f"ogd-{d}", "Syn8", s, model_spec("ogd", d, 50, 2)))
            exps.append(_exp(f"hbp-{d}", "Syn8", s, model_spec("hbp", d, 50, 2)))
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {list(PRESETS)}")
    return SuiteConfig(tuple(exps), output_dir=str(Path("results") / name))


def _read_rounds(out: Path, name: str) -> np.ndarray:
    with open(out / f"{name}.rounds.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[3]) for r in rows])


def _read_alphas(out: Path, name: str) -> tuple[np.ndarray, np.ndarray]:
    with open(out / f"{name}.alphas.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(v) for v in r] for r in rows])
    return arr[:, 0].astype(int), arr[:, 1:]


def replicate(name: str, output_dir=None, length: int | None = None, parallelism: int = 1) -> list[dict]:
    """Run a preset suite and write its analysis table next to the run metrics."""
    suite = preset_suite(name, length)
    out = Path(output_dir) if output_dir else Path(suite.output_dir)
    rows = run_suite(suite, out, parallelism)
    ok = {r["name"]: r for r in rows if r["status"] == "ok"}
    labels = [w.label for w in TABLE_WINDOWS]

    if name == "depth-dilemma":
        table = [(ok[n]["layers"], _fmt(ok[n]["final_error"]), *(_fmt(ok[n]["window_errors"][l]) for l in labels))
                 for n in ok]
        _atomic_write(out / "depth_dilemma.csv", _csv_text(("layers", "final", *labels), table))
    elif name == "depth-robustness":
        table = []
        for d in ROBUSTNESS_DEPTHS:
            o, h = ok.get(f"ogd-{d}"), ok.get(f"hbp-{d}")
            table.append((d, _fmt(o and o["final_error"]), _fmt(h and h["final_error"])))
        _atomic_write(out / "depth_robustness.csv", _csv_text(("depth", "online_bp", "hbp"), table))
    elif name == "alpha-evolution" and "hbp-16" in ok:
        rounds, alphas = _read_alphas(out, "hbp-16")
        T = suite.experiments[0].stream.length
        depths = suite.experiments[0].model.net.head_depths
        table = []
        for w in TABLE_WINDOWS:
            lo, hi = w.bounds(T)
            sel = (rounds > lo) & (rounds <= hi)
            mean = alphas[sel].mean(axis=0) if sel.any() else np.full(alphas.shape[1], np.nan)
            table.append((w.label, *(_fmt(a) for a in mean)))
        _atomic_write(out / "alpha_windows.csv", _csv_text(("window", *(f"depth_{d}" for d in depths)), table))
    elif name == "drift":
        curves = {n: _read_rounds(out, n) for n in ok}
        if curves:
            T = max(len(c) for c in curves.values())
            stride = max(1, T // 1000)
            names = list(curves)
            lines = []
            for t in range(stride, T + 1, stride):
                lines.append((t, *(_fmt(curves[n][t - 1]) if t <= len(curves[n]) else "" for n in names)))
            _atomic_write(out / "convergence.csv", _csv_text(("round", *names), lines))
    return rows

"""Instance streams: synthetic concepts from random deep tanh networks,
piecewise concept drift, and row-by-row CSV ingestion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .numeric import make_rng

CHUNK = 1024
MIN_CLASS_FRACTION = 0.05
BALANCE_PROBE = 10_000
MAX_RETRIES = 32


class LabeledInstance(NamedTuple):
    features: np.ndarray
    label: int


class CsvFormatError(ValueError):
    def __init__(self, path, row: int, message: str):
        super().__init__(f"{path}: row {row}: {message}")
        self.path = path
        self.row = row


def derive_seed(seed: int, *tags: int) -> int:
    """A 63-bit seed deterministically derived from ``seed`` and ``tags``."""
    state = np.random.SeedSequence([seed, *tags]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


@dataclass(frozen=True)
class ConceptSpec:
    """A labelling function drawn as a random tanh network.

    Hidden weights are Gaussian with std ``gain / sqrt(fan_in)``; biases are
    Gaussian with std ``bias_std``. The label is the argmax of the linear
    output layer.
    """

    input_dim: int
    hidden_layers: int
    width: int
    num_classes: int = 2
    seed: int = 0
    label_noise: float = 0.0
    gain: float = 4.0
    bias_std: float = 0.1

    def problems(self) -> list[str]:
        out = []
        if self.input_dim < 1:
            out.append(f"concept input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            out.append(f"concept num_classes must be >= 2, got {self.num_classes}")
        if self.hidden_layers < 0:
            out.append(f"concept hidden_layers must be >= 0, got {self.hidden_layers}")
        if self.width < 1:
            out.append(f"concept width must be >= 1, got {self.width}")
        if not 0 <= self.label_noise < 1:
            out.append(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if self.seed < 0:
            out.append(f"concept seed must be >= 0, got {self.seed}")
        return out

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Concept:
    spec: ConceptSpec
    weights: tuple[np.ndarray, ...] = field(repr=False)
    biases: tuple[np.ndarray, ...] = field(repr=False)
    attempt: int = 0

    def clean_labels(self, X: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(X, dtype=np.float64))
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W.T + b)
        out = h @ self.weights[-1].T + self.biases[-1]
        return np.argmax(out, axis=1)

    def label(self, x) -> int:
        return int(self.clean_labels(x)[0])

    def sample(self, n: int, feature_rng: np.random.Generator, noise_rng: np.random.Generator):
        """Draw ``n`` features uniform on [-1, 1]^d and their (possibly noisy) labels.

        A noisy label is replaced by a different class chosen uniformly.
        """
        X = feature_rng.uniform(-1.0, 1.0, size=(n, self.spec.input_dim))
        y = self.clean_labels(X)
        p = self.spec.label_noise
        if p > 0:
            flip = noise_rng.random(n) < p
            shift = noise_rng.integers(1, self.spec.num_classes, size=n)
            y = np.where(flip, (y + shift) % self.spec.num_classes, y)
        return X, y


def _draw_concept(spec: ConceptSpec, attempt: int) -> Concept:
    rng = make_rng(spec.seed, attempt)
    dims = [spec.input_dim] + [spec.width] * spec.hidden_layers + [spec.num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * (spec.gain / np.sqrt(fan_in)))
        biases.append(rng.standard_normal(fan_out) * spec.bias_std)
    return Concept(spec, tuple(weights), tuple(biases), attempt)


@lru_cache(maxsize=64)
def generate_concept(spec: ConceptSpec) -> Concept:
    """Build the labelling network for ``spec``.

    If a probe of 10^4 uniform inputs gives some class under 5% of the labels,
    the network is redrawn from the next derived sub-seed (at most 32 tries).
    """
    problems = spec.problems()
    if problems:
        raise ValueError("invalid ConceptSpec: " + "; ".join(problems))
    probe = make_rng(spec.seed, 2**32).uniform(-1.0, 1.0, size=(BALANCE_PROBE, spec.input_dim))
    for attempt in range(MAX_RETRIES):
        concept = _draw_concept(spec, attempt)
        counts = np.bincount(concept.clean_labels(probe), minlength=spec.num_classes)
        if counts.min() >= MIN_CLASS_FRACTION * BALANCE_PROBE:
            return concept
    raise RuntimeError(f"no class-balanced concept found for {spec} after {MAX_RETRIES} draws")


def compose_drift(segments: Iterable[tuple[ConceptSpec, int]], seed: int = 0) -> Iterator[LabeledInstance]:
    """Yield instances segment by segment, each labelled by its own concept.

    Segments that share a ``ConceptSpec`` share the same labelling network, so
    an A-B-A schedule returns to exactly the first concept. Features and label
    noise come from two sub-streams of ``seed`` that run across segments.
    """
    segments = list(segments)
    if not segments:
        raise ValueError("a stream needs at least one segment")
    feature_rng = make_rng(seed, 1)
    noise_rng = make_rng(seed, 2)
    for spec, count in segments:
        concept = generate_concept(spec)
        remaining = count
        while remaining > 0:
            n = min(CHUNK, remaining)
            X, y = concept.sample(n, feature_rng, noise_rng)
            for i in range(n):
                yield LabeledInstance(X[i], int(y[i]))
            remaining -= n


@dataclass(frozen=True)
class CsvSource:
    """Declared layout of a CSV stream; nothing is sniffed from the file."""

    path: str
    input_dim: int
    num_classes: int
    label_column: int = -1
    header: bool = False
    label_values: tuple[str, ...] | None = None
    feature_ranges: tuple[tuple[float, float], ...] | None = None

    def problems(self) -> list[str]:
        out = []
        if self.input_dim < 1:
            out.append(f"csv input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            out.append(f"csv num_classes must be >= 2, got {self.num_classes}")
        if self.label_values is not None and len(self.label_values) != self.num_classes:
            out.append(f"label_values has {len(self.label_values)} entries, expected {self.num_classes}")
        if self.feature_ranges is not None:
            if len(self.feature_ranges) != self.input_dim:
                out.append(f"feature_ranges has {len(self.feature_ranges)} entries, expected {self.input_dim}")
            elif any(not lo < hi for lo, hi in self.feature_ranges):
                out.append("every feature range needs lo < hi")
        if not -(self.input_dim + 1) <= self.label_column <= self.input_dim:
            out.append(f"label_column {self.label_column} outside a row of {self.input_dim + 1} columns")
        return out


def read_csv_stream(
    path,
    input_dim: int,
    num_classes: int,
    label_column: int = -1,
    header: bool = False,
    label_values: Iterable[str] | None = None,
    feature_ranges=None,
) -> Iterator[LabeledInstance]:
    """Stream ``(features, label)`` pairs from a CSV file one row at a time.

    Labels are integer class indices unless ``label_values`` is given, in
    which case the label text is looked up in it. ``feature_ranges`` applies a
    per-feature min-max rescale to [0, 1]. Row numbers in errors are 1-based
    file lines.
    """
    width = input_dim + 1
    label_pos = label_column % width
    lookup = None if label_values is None else {v: i for i, v in enumerate(label_values)}
    if feature_ranges is not None:
        ranges = np.asarray(feature_ranges, dtype=np.float64)
        lo, span = ranges[:, 0], ranges[:, 1] - ranges[:, 0]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            line = reader.line_num
            if header and line == 1:
                continue
            if not row:
                continue
            if len(row) != width:
                raise CsvFormatError(path, line, f"expected {width} columns ({input_dim} features + label), got {len(row)}")
            raw_label = row[label_pos].strip()
            try:
                feats = np.array([float(v) for i, v in enumerate(row) if i != label_pos])
            except ValueError as exc:
                raise CsvFormatError(path, line, f"bad feature value: {exc}") from None
            if not np.all(np.isfinite(feats)):
                raise CsvFormatError(path, line, "non-finite feature value")
            if lookup is not None:
                if raw_label not in lookup:
                    raise CsvFormatError(path, line, f"label {raw_label!r} not in declared label set")
                label = lookup[raw_label]
            else:
                try:
                    label = int(raw_label)
                except ValueError:
                    raise CsvFormatError(path, line, f"label {raw_label!r} is not a class index") from None
                if not 0 <= label < num_classes:
                    raise CsvFormatError(path, line, f"label {label} outside 0..{num_classes - 1}")
            if feature_ranges is not None:
                feats = (feats - lo) / span
            yield LabeledInstance(feats, label)


def write_csv_stream(instances: Iterable[LabeledInstance], path, input_dim: int) -> int:
    """Write instances with a header ``x1..xd,label``; returns the row count.

    Floats use ``repr`` so re-reading reproduces them bit for bit.
    """
    path = Path(path)
    n = 0
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{i}" for i in range(1, input_dim + 1)] + ["label"])
            for x, y in instances:
                if len(x) != input_dim:
                    raise ValueError(f"instance {n + 1} has {len(x)} features, expected {input_dim}")
                writer.writerow([repr(float(v)) for v in x] + [int(y)])
                n += 1
    except BaseException:
        path.unlink(missing_ok=True)
        raise
    return n


@dataclass(frozen=True)
class StreamSpec:
    """A synthetic schedule of ``(ConceptSpec, count)`` segments, or a CSV source."""

    segments: tuple[tuple[ConceptSpec, int], ...] = ()
    seed: int = 0
    csv: CsvSource | None = None
    length_hint: int | None = None

    @property
    def length(self) -> int | None:
        if self.csv is not None:
            return self.length_hint
        return sum(count for _, count in self.segments)

    @property
    def input_dim(self) -> int:
        return self.csv.input_dim if self.csv is not None else self.segments[0][0].input_dim

    @property
    def num_classes(self) -> int:
        return self.csv.num_classes if self.csv is not None else self.segments[0][0].num_classes

    def problems(self) -> list[str]:
        if self.csv is not None:
            out = self.csv.problems()
            if self.segments:
                out.append("a stream is either synthetic segments or a CSV source, not both")
            if not Path(self.csv.path).is_file():
                out.append(f"csv file not found: {self.csv.path}")
            return out
        if not self.segments:
            return ["stream has no segments"]
        out = []
        for i, (spec, count) in enumerate(self.segments, start=1):
            out += [f"segment {i}: {p}" for p in spec.problems()]
            if count < 1:
                out.append(f"segment {i}: count must be >= 1, got {count}")
        dims = {(s.input_dim, s.num_classes) for s, _ in self.segments}
        if len(dims) > 1:
            out.append(f"segments disagree on (input_dim, num_classes): {sorted(dims)}")
        if self.seed < 0:
            out.append(f"stream seed must be >= 0, got {self.seed}")
        return out

    def validate(self) -> "StreamSpec":
        problems = self.problems()
        if problems:
            raise ValueError("invalid StreamSpec: " + "; ".join(problems))
        return self

    def instances(self) -> Iterator[LabeledInstance]:
        self.validate()
        if self.csv is not None:
            c = self.csv
            return read_csv_stream(
                c.path, c.input_dim, c.num_classes, c.label_column, c.header, c.label_values, c.feature_ranges
            )
        return compose_drift(self.segments, self.seed)

    def __iter__(self):
        return self.instances()


# Desk-scale recipes. Feature counts and generator depths follow the original
# datasets; widths and lengths are shrunk.

SYN_FEATURES = 50
DESK_WIDTH = 32
DESK_LENGTH = 100_000


def syn8(seed: int = 0, length: int = DESK_LENGTH, width: int = DESK_WIDTH, **concept) -> StreamSpec:
    a = ConceptSpec(SYN_FEATURES, 8, width, 2, derive_seed(seed, 8), **concept)
    return StreamSpec(((a, length),), seed=seed)


def cd1(seed: int = 0, segment_length: int = 30_000, width: int = DESK_WIDTH, **concept) -> StreamSpec:
    """Concepts A-B-A, both from 8-hidden-layer generators; A is reused verbatim."""
    a = ConceptSpec(SYN_FEATURES, 8, width, 2, derive_seed(seed, 11), **concept)
    b = ConceptSpec(SYN_FEATURES, 8, width, 2, derive_seed(seed, 12), **concept)
    return StreamSpec(((a, segment_length), (b, segment_length), (a, segment_length)), seed=seed)


def cd2(seed: int = 0, segment_length: int = 30_000, width: int = DESK_WIDTH, **concept) -> StreamSpec:
    """Concepts A-B-C; B comes from a shallower 6-hidden-layer generator."""
    a = ConceptSpec(SYN_FEATURES, 8, width, 2, derive_seed(seed, 21), **concept)
    b = ConceptSpec(SYN_FEATURES, 6, width, 2, derive_seed(seed, 22), **concept)
    c = ConceptSpec(SYN_FEATURES, 8, width, 2, derive_seed(seed, 23), **concept)
    return StreamSpec(((a, segment_length), (b, segment_length), (c, segment_length)), seed=seed)

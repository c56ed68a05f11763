"""Conditional vectors and training-by-sampling.

During training a conditioning column is picked uniformly and an option (mode
or class) with probability proportional to ``log(1 + count)``, which boosts
rare options. At generation time options follow their empirical frequency so
the sampled marginals match the training data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncodedMatrix, TabularEncoder
from .errors import NoMatchingRow, OptionOutOfRange


@dataclass(frozen=True)
class Segment:
    column: str
    option_count: int
    source_offset: int  # first one-hot slot in the encoded row
    offset: int  # first bit in the conditional vector


@dataclass(frozen=True)
class CondLayout:
    segments: tuple[Segment, ...]

    @classmethod
    def from_sizes(cls, sizes, names=None) -> "CondLayout":
        names = names or [f"c{i}" for i in range(len(sizes))]
        segs, off = [], 0
        for name, n in zip(names, sizes):
            segs.append(Segment(name, int(n), -1, off))
            off += int(n)
        return cls(tuple(segs))

    @classmethod
    def from_encoder(cls, encoder: TabularEncoder) -> "CondLayout":
        segs, off = [], 0
        for b in encoder.layout:
            if b.n_options:
                segs.append(Segment(b.name, b.n_options, b.option_offset, off))
                off += b.n_options
        return cls(tuple(segs))

    @property
    def total_bits(self) -> int:
        return sum(s.option_count for s in self.segments)

    def index_of(self, column) -> int:
        if isinstance(column, (int, np.integer)):
            if not 0 <= column < len(self.segments):
                raise OptionOutOfRange(f"segment {column} out of range")
            return int(column)
        for i, s in enumerate(self.segments):
            if s.column == column:
                return i
        raise OptionOutOfRange(f"no conditional segment for column {column!r}")


def build_cond_vector(layout: CondLayout, column, option: int) -> np.ndarray:
    seg = layout.segments[layout.index_of(column)]
    if not 0 <= option < seg.option_count:
        raise OptionOutOfRange(f"option {option} outside segment {seg.column!r} of size {seg.option_count}")
    v = np.zeros(layout.total_bits)
    v[seg.offset + option] = 1.0
    return v


def cond_matrix(layout: CondLayout, segments: np.ndarray, options: np.ndarray) -> np.ndarray:
    """Batch of conditional vectors, one per (segment index, option) pair."""
    offsets = np.array([s.offset for s in layout.segments], dtype=np.int64)
    out = np.zeros((len(segments), layout.total_bits))
    if len(segments):
        out[np.arange(len(segments)), offsets[segments] + options] = 1.0
    return out


class SamplerState:
    """Option frequencies per segment, the matching row index, and the RNG."""

    def __init__(self, layout: CondLayout, counts: list[np.ndarray], seed: int = 0,
                 row_index: list[list[np.ndarray]] | None = None):
        self.layout = layout
        self.counts = [np.asarray(c, dtype=np.int64) for c in counts]
        self.row_index = row_index
        self.rng = np.random.default_rng(seed)
        self.log_probs = []
        self.freq_probs = []
        for c in self.counts:
            w = np.log1p(c.astype(np.float64))
            self.log_probs.append(w / w.sum() if w.sum() > 0 else w)
            self.freq_probs.append(c / c.sum() if c.sum() > 0 else c.astype(np.float64))
        self._log_cdf = [np.cumsum(p) for p in self.log_probs]
        self._freq_cdf = [np.cumsum(p) for p in self.freq_probs]

    @classmethod
    def fit(cls, encoder: TabularEncoder, matrix: EncodedMatrix, seed: int = 0) -> "SamplerState":
        layout = CondLayout.from_encoder(encoder)
        counts, index = [], []
        for seg in layout.segments:
            block = matrix.rows[:, seg.source_offset:seg.source_offset + seg.option_count]
            active = np.argmax(block, axis=1) if len(block) else np.zeros(0, dtype=np.int64)
            counts.append(np.bincount(active, minlength=seg.option_count))
            index.append([np.flatnonzero(active == o) for o in range(seg.option_count)])
        return cls(layout, counts, seed, index)

    @property
    def n_segments(self) -> int:
        return len(self.layout.segments)

    def _draw(self, cdfs, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        segs = rng.integers(self.n_segments, size=n)
        u = rng.random(n)
        opts = np.empty(n, dtype=np.int64)
        for s in range(self.n_segments):
            hit = segs == s
            if hit.any():
                cdf = cdfs[s]
                opts[hit] = np.minimum(np.searchsorted(cdf, u[hit] * cdf[-1], side="right"), len(cdf) - 1)
        return segs, opts

    def sample_conditions(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Training-time draws: uniform column, log-frequency option."""
        return self._draw(self._log_cdf, n, self.rng)

    def sample_original(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Generation-time draws: uniform column, empirical-frequency option."""
        return self._draw(self._freq_cdf, n, rng)

    def sample_condition(self) -> tuple[str, int]:
        s, o = self.sample_conditions(1)
        return self.layout.segments[s[0]].column, int(o[0])

    def draw_matching_rows(self, segments: np.ndarray, options: np.ndarray) -> np.ndarray:
        out = np.empty(len(segments), dtype=np.int64)
        for i, (s, o) in enumerate(zip(segments, options)):
            out[i] = draw_matching_real(self.row_index, (int(s), int(o)), self.rng)
        return out

    def to_dict(self) -> dict:
        return {"counts": [c.tolist() for c in self.counts]}


def draw_matching_real(row_index, cond: tuple[int, int], rng: np.random.Generator) -> int:
    """Uniformly pick a real row whose segment ``cond[0]`` has option ``cond[1]`` active.

    ``row_index`` holds per-segment, per-option row ids (see :func:`matching_rows`).
    """
    seg, opt = cond
    rows = row_index[seg][opt]
    if len(rows) == 0:
        raise NoMatchingRow(f"no real row has option {opt} in segment {seg}")
    return int(rows[rng.integers(len(rows))])


def matching_rows(data: EncodedMatrix, layout: CondLayout) -> list[list[np.ndarray]]:
    index = []
    for seg in layout.segments:
        block = data.rows[:, seg.source_offset:seg.source_offset + seg.option_count]
        active = np.argmax(block, axis=1)
        index.append([np.flatnonzero(active == o) for o in range(seg.option_count)])
    return index

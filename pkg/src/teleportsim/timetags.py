"""Time-tag generation (detector model) and streaming coincidence counting.

Tags are integer picoseconds since acquisition start; per-channel streams
are non-decreasing.  Coincidence semantics, fixed here once:

* the configured window ``w`` is a FULL width: a 2-fold group requires
  ``|t1 - t2| <= w/2``, an n-fold group (n >= 3) requires
  ``max - min <= w``;
* matching is greedy earliest-first: tags are scanned in time order
  (ties broken by channel id) and a group commits as soon as every
  required channel holds an unconsumed tag inside the span, consuming the
  earliest available tag per channel;
* each tag joins at most one group, and results are independent of how
  the stream is chunked when fed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (
    dead_time_filter,
    insertion_sort_nearly_sorted,
    is_sorted,
    match_groups,
    merge_labeled,
)
from .sources import ConfigError, poisson_times_ps

TAG_DTYPE = np.dtype([("channel", "u1"), ("t", "<u8")])
_MAGIC = b"TTSIM1\x00\x00"


class StreamOrderError(ValueError):
    """A tag stream was not time-sorted; sorting is the caller's job."""


class VisibilityError(ValueError):
    """Visibility is undefined (no reference counts)."""


@dataclass(frozen=True)
class DetectorConfig:
    """Single-channel detector: efficiency, jitter, dead time, dark counts."""

    efficiency: float = 1.0
    jitter_sigma_ps: float = 0.0
    dead_time_ps: int = 0
    dark_rate_cps: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("detector efficiency must lie in [0, 1]")
        if self.jitter_sigma_ps < 0 or self.dead_time_ps < 0 or self.dark_rate_cps < 0:
            raise ConfigError("detector parameters must be non-negative")


@dataclass(frozen=True)
class CoincidenceWindow:
    """Coincidence acceptance: full width in ps, channel set and fold."""

    width_ps: int
    channels: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if self.width_ps <= 0:
            raise ConfigError("coincidence window width must be positive")
        if len(set(self.channels)) != len(self.channels) or len(self.channels) < 2:
            raise ConfigError("window needs at least two distinct channels")

    @property
    def fold(self) -> int:
        return len(self.channels)

    @property
    def span_ps(self) -> int:
        """Maximum allowed tag span: w/2 for pairs, w for higher folds."""
        return self.width_ps // 2 if self.fold == 2 else self.width_ps


def _require_sorted(times: np.ndarray, label: str) -> np.ndarray:
    t = np.ascontiguousarray(times, dtype=np.int64)
    if t.size > 1 and not is_sorted(t):
        raise StreamOrderError(f"stream {label!r} is not time-sorted")
    return t


def detect(
    times_ps,
    cfg: DetectorConfig,
    duration_s: float,
    rng,
) -> np.ndarray:
    """Turn photon arrivals on one channel into detector tags.

    Photons survive with probability ``efficiency``; survivors receive
    Gaussian timing jitter and are re-sorted; dark counts join the stream
    as an independent Poisson process; finally, any tag within
    ``dead_time_ps`` of the previously accepted tag is dropped.
    """
    t = _require_sorted(times_ps, "detect input")
    if cfg.efficiency < 1.0:
        t = t[rng.random(t.size) < cfg.efficiency]
    if cfg.jitter_sigma_ps > 0.0 and t.size:
        t = t + np.rint(rng.normal(0.0, cfg.jitter_sigma_ps, size=t.size)).astype(
            np.int64
        )
        if t.size > (1 << 20):
            insertion_sort_nearly_sorted(t)
        else:
            t.sort()
    if cfg.dark_rate_cps > 0.0:
        darks = poisson_times_ps(cfg.dark_rate_cps, duration_s, rng)
        t = np.sort(np.concatenate([t, darks]))
    if cfg.dead_time_ps > 0 and t.size:
        t = t[dead_time_filter(t, np.int64(cfg.dead_time_ps))]
    return t


@dataclass
class CoincidenceResult:
    count: int
    group_times: np.ndarray  # (count, fold), one column per window channel


class CoincidenceCounter:
    """Streaming greedy matcher; feed chunks in any segmentation.

    Tags already seen but still matchable are buffered internally, so the
    committed groups are byte-identical however the input was chunked.
    """

    def __init__(self, window: CoincidenceWindow):
        self.window = window
        self._span = np.int64(window.span_ps)
        self._n_ch = window.fold
        self._pending = {c: [] for c in window.channels}
        self._frontier = {c: None for c in window.channels}
        self._queues = [np.empty(0, dtype=np.int64) for _ in window.channels]
        self._groups = []

    def feed(self, streams: dict[int, np.ndarray]) -> None:
        for ch, arr in streams.items():
            if ch not in self._pending:
                raise ConfigError(f"channel {ch} not part of this window")
            t = _require_sorted(arr, f"channel {ch}")
            if t.size == 0:
                continue
            if self._frontier[ch] is not None and t[0] < self._frontier[ch]:
                raise StreamOrderError(
                    f"channel {ch} chunk starts before previously fed tags"
                )
            self._pending[ch].append(t)
            self._frontier[ch] = int(t[-1])
        if any(f is None for f in self._frontier.values()):
            return
        cut = min(self._frontier.values()) - 1
        self._process_upto(cut)

    def _process_upto(self, cut: int) -> None:
        # Per-channel: leftover queue state followed by ready new tags;
        # both pieces are sorted and leftovers precede new tags, so plain
        # concatenation stays sorted.  Re-running the matcher over the
        # leftovers is exact: no group can complete among tags that were
        # all simultaneously available and uncommitted in a previous pass.
        per_channel = []
        any_new = False
        for idx, ch in enumerate(self.window.channels):
            chunks = self._pending[ch]
            if chunks:
                merged = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
                k = int(np.searchsorted(merged, cut, side="right"))
                ready = merged[:k]
                self._pending[ch] = [merged[k:]] if k < merged.size else []
            else:
                ready = np.empty(0, dtype=np.int64)
            if ready.size:
                any_new = True
            q = self._queues[idx]
            per_channel.append(
                np.concatenate([q, ready]) if q.size else ready
            )
        if not any_new:
            return
        offsets = np.zeros(len(per_channel) + 1, dtype=np.int64)
        for i, arr in enumerate(per_channel):
            offsets[i + 1] = offsets[i] + arr.size
        flat = (
            np.concatenate(per_channel)
            if offsets[-1]
            else np.empty(0, dtype=np.int64)
        )
        times, chans = merge_labeled(flat, offsets)
        idx = match_groups(times, chans, self._n_ch, self._span)
        if idx.size:
            self._groups.append(times[idx])
        consumed = np.zeros(times.size, dtype=bool)
        if idx.size:
            consumed[idx.ravel()] = True
        # Tags older than cut - span can never join a future group: all
        # future arrivals exceed cut, so prune them to bound memory.
        floor = cut - int(self._span)
        self._queues = [
            times[(chans == c) & ~consumed & (times >= floor)]
            for c in range(self._n_ch)
        ]

    def finish(self) -> CoincidenceResult:
        self._process_upto(np.iinfo(np.int64).max - 1)
        if self._groups:
            g = np.vstack(self._groups)
        else:
            g = np.empty((0, self._n_ch), dtype=np.int64)
        return CoincidenceResult(count=g.shape[0], group_times=g)


def count_coincidences(
    streams: dict[int, np.ndarray], window: CoincidenceWindow
) -> CoincidenceResult:
    """One-shot coincidence count over complete per-channel streams.

    Single forward pass over the merged stream; deterministic; rejects
    unsorted input.  See the module docstring for the matching semantics.
    """
    counter = CoincidenceCounter(window)
    counter.feed({ch: streams.get(ch, np.empty(0, dtype=np.int64)) for ch in window.channels})
    return counter.finish()


def threefold_herald_counts(
    ch1: np.ndarray,
    ch2: np.ndarray,
    ch3: np.ndarray,
    window: CoincidenceWindow | int,
) -> np.ndarray:
    """Signal tags heralded by a (ch1, ch2, ch3) threefold coincidence.

    Returns the channel-3 tag times of every committed triple: these are
    the teleported photons handed to tomography.
    """
    if isinstance(window, CoincidenceWindow):
        if window.fold != 3:
            raise ConfigError("threefold heralding needs a 3-channel window")
        win = window
    else:
        win = CoincidenceWindow(width_ps=int(window), channels=(1, 2, 3))
    res = count_coincidences({win.channels[0]: ch1, win.channels[1]: ch2, win.channels[2]: ch3}, win)
    return res.group_times[:, 2] if res.count else np.empty(0, dtype=np.int64)


def estimate_visibility(dip_counts: float, far_counts: float) -> tuple[float, float]:
    """Visibility V = (C_far - C_dip)/C_far with Poisson error propagation."""
    if far_counts <= 0:
        raise VisibilityError("far-from-dip counts are zero; V undefined")
    v = (far_counts - dip_counts) / far_counts
    var = dip_counts / far_counts**2 * (1.0 + dip_counts / far_counts)
    return float(v), float(np.sqrt(var))


def write_tag_file(path, streams: dict[int, np.ndarray], metadata: dict | None = None):
    """Binary tag dump: versioned JSON header then (u8 channel, u64 ps) records."""
    channels = sorted(streams)
    header = {
        "version": 1,
        "channels": [int(c) for c in channels],
        "metadata": metadata or {},
    }
    total = sum(int(np.asarray(streams[c]).size) for c in channels)
    records = np.empty(total, dtype=TAG_DTYPE)
    pos = 0
    pieces_t = [np.asarray(streams[c], dtype=np.int64) for c in channels]
    pieces_c = [np.full(t.size, c, dtype=np.uint8) for c, t in zip(channels, pieces_t)]
    all_t = np.concatenate(pieces_t) if total else np.empty(0, dtype=np.int64)
    all_c = np.concatenate(pieces_c) if total else np.empty(0, dtype=np.uint8)
    order = np.lexsort((all_c, all_t))
    records["channel"][: total] = all_c[order]
    records["t"][: total] = all_t[order].astype(np.uint64)
    pos = total
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(records[:pos].tobytes())


def read_tag_file(path) -> tuple[dict[int, np.ndarray], dict]:
    """Inverse of :func:`write_tag_file`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ConfigError(f"not a tag file: bad magic {magic!r}")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(blob_len).decode())
        body = fh.read()
    records = np.frombuffer(body, dtype=TAG_DTYPE)
    streams = {}
    for c in header["channels"]:
        streams[int(c)] = records["t"][records["channel"] == c].astype(np.int64)
    return streams, header


def write_tag_text(path, streams: dict[int, np.ndarray]):
    """Plain-text debug format: one 'channel,t_ps' line per tag."""
    with open(path, "w") as fh:
        for c in sorted(streams):
            for t in np.asarray(streams[c], dtype=np.int64):
                fh.write(f"{c},{t}\n")


def read_tag_text(path) -> dict[int, np.ndarray]:
    chans, times = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            c, t = line.split(",")
            chans.append(int(c))
            times.append(int(t))
    chans = np.asarray(chans)
    times = np.asarray(times, dtype=np.int64)
    return {int(c): np.sort(times[chans == c]) for c in np.unique(chans)}

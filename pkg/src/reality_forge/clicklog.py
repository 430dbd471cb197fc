"""Clickstream logs: parsing, serialization and synthetic generation.

A log holds one record per click.  Two line-oriented encodings are supported:

* ``jsonl`` -- one JSON object per line with keys ``stream_id``, ``seq``,
  ``timestamp_ms``, ``query`` and ``response`` (plus an optional ``latent``
  coordinate list written by the synthetic generator);
* ``tsv`` -- the same five fields separated by literal tabs, no quoting.
"""

from __future__ import annotations

import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from ._validation import check_positive_int, check_positive_real, check_seed
from .errors import ConfigError, DecodeError, FormatError, OrderError, SequenceError

FORMATS = ("jsonl", "tsv")

_TOKEN_RE = re.compile(r"[^\W_]+")
_CONTROL_RE = re.compile(r"[\x00-\x1f\x7f]")

TermBag = Counter


def tokenize(text: str) -> Counter:
    """Lower-case ``text`` and count its alphanumeric runs.

    >>> tokenize("Cat cat, DOG")
    Counter({'cat': 2, 'dog': 1})
    """
    return Counter(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class Click:
    stream_id: str
    seq: int
    timestamp: int
    query_text: str
    response_text: str
    latent: tuple[float, ...] | None = field(default=None, compare=True)

    def bag(self) -> Counter:
        """Term counts of query and response taken together."""
        bag = tokenize(self.query_text)
        bag.update(tokenize(self.response_text))
        return bag


@dataclass(frozen=True)
class Clickstream:
    stream_id: str
    clicks: tuple[Click, ...]

    def __post_init__(self):
        object.__setattr__(self, "clicks", tuple(self.clicks))
        if not self.clicks:
            raise ConfigError(f"stream {self.stream_id!r} is empty")
        prev_ts = None
        for k, click in enumerate(self.clicks):
            if click.stream_id != self.stream_id:
                raise ConfigError(
                    f"click with stream_id {click.stream_id!r} in stream {self.stream_id!r}"
                )
            if click.seq != k:
                raise SequenceError(f"stream {self.stream_id!r}: expected seq {k}, got {click.seq}")
            if prev_ts is not None and click.timestamp < prev_ts:
                raise OrderError(f"stream {self.stream_id!r}: timestamp decreases at seq {k}")
            prev_ts = click.timestamp

    def __len__(self):
        return len(self.clicks)

    def __iter__(self) -> Iterator[Click]:
        return iter(self.clicks)

    def __getitem__(self, k) -> Click:
        return self.clicks[k]


class ClickstreamCollection:
    """An immutable, validated set of clickstreams plus their vocabulary.

    Term ids are assigned in order of first occurrence (streams in order,
    clicks by seq, query before response).
    """

    def __init__(self, streams: Iterable[Clickstream] = ()):
        streams = tuple(streams)
        seen = set()
        for s in streams:
            if s.stream_id in seen:
                raise ConfigError(f"duplicate stream_id {s.stream_id!r}")
            seen.add(s.stream_id)
        vocab: dict[str, int] = {}
        for s in streams:
            for click in s:
                for text in (click.query_text, click.response_text):
                    for term in _TOKEN_RE.findall(text.lower()):
                        if term not in vocab:
                            vocab[term] = len(vocab)
        self._streams = streams
        self._vocabulary = MappingProxyType(vocab)

    @property
    def streams(self) -> tuple[Clickstream, ...]:
        return self._streams

    @property
    def vocabulary(self) -> Mapping[str, int]:
        return self._vocabulary

    @property
    def n_clicks(self) -> int:
        return sum(len(s) for s in self._streams)

    def __len__(self):
        return len(self._streams)

    def __iter__(self) -> Iterator[Clickstream]:
        return iter(self._streams)

    def __getitem__(self, k) -> Clickstream:
        return self._streams[k]

    def __eq__(self, other):
        if not isinstance(other, ClickstreamCollection):
            return NotImplemented
        return self._streams == other._streams

    def __hash__(self):
        return hash(self._streams)

    def __repr__(self):
        return f"ClickstreamCollection(streams={len(self)}, clicks={self.n_clicks})"

    def clicks(self) -> Iterator[tuple[int, Click]]:
        """Yield ``(stream_index, click)`` for every click."""
        for i, s in enumerate(self._streams):
            for click in s:
                yield i, click


# --------------------------------------------------------------------------
# parsing


def _read_lines(source) -> Iterator[bytes]:
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))
    elif isinstance(source, str):
        raise TypeError("parse_log expects bytes or a binary stream; open files in 'rb' mode")
    yield from source


def _decode_line(raw: bytes, lineno: int) -> str:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"invalid UTF-8 ({exc.reason})", line=lineno) from None
    if text.endswith("\n"):
        text = text[:-1]
        if text.endswith("\r"):
            text = text[:-1]
    return text


def _require_int(value, name, lineno):
    if isinstance(value, bool) or not isinstance(value, int):
        raise DecodeError(f"{name} must be an integer, got {value!r}", line=lineno)
    return value


def _record_from_json(text: str, lineno: int) -> Click:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed JSON: {exc.msg}", line=lineno) from None
    if not isinstance(rec, dict):
        raise DecodeError("record must be a JSON object", line=lineno)
    missing = [k for k in ("stream_id", "seq", "timestamp_ms", "query", "response") if k not in rec]
    if missing:
        raise DecodeError(f"missing field(s) {', '.join(missing)}", line=lineno)
    stream_id = rec["stream_id"]
    if isinstance(stream_id, int) and not isinstance(stream_id, bool):
        stream_id = str(stream_id)
    if not isinstance(stream_id, str) or not stream_id:
        raise DecodeError("stream_id must be a nonempty string", line=lineno)
    seq = _require_int(rec["seq"], "seq", lineno)
    if seq < 0:
        raise DecodeError("seq must be nonnegative", line=lineno)
    ts = _require_int(rec["timestamp_ms"], "timestamp_ms", lineno)
    query, response = rec["query"], rec["response"]
    if not isinstance(query, str) or not isinstance(response, str):
        raise DecodeError("query and response must be strings", line=lineno)
    latent = rec.get("latent")
    if latent is not None:
        if not isinstance(latent, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in latent
        ):
            raise DecodeError("latent must be a list of numbers", line=lineno)
        latent = tuple(float(v) for v in latent)
    return Click(stream_id, seq, ts, query, response, latent)


def _record_from_tsv(text: str, lineno: int) -> Click:
    fields = text.split("\t")
    if len(fields) != 5:
        raise DecodeError(f"expected 5 tab-separated fields, got {len(fields)}", line=lineno)
    for f in fields:
        if _CONTROL_RE.search(f):
            raise DecodeError("control character in field", line=lineno)
    stream_id, seq_s, ts_s, query, response = fields
    if not stream_id:
        raise DecodeError("stream_id must be nonempty", line=lineno)
    try:
        seq = int(seq_s)
        ts = int(ts_s)
    except ValueError:
        raise DecodeError("seq and timestamp_ms must be integers", line=lineno) from None
    if seq < 0:
        raise DecodeError("seq must be nonnegative", line=lineno)
    return Click(stream_id, seq, ts, query, response)


def parse_log(source, format: str = "jsonl") -> ClickstreamCollection:
    """Parse a clickstream log into a validated collection.

    ``source`` is ``bytes`` or a binary file object.  Records may appear in
    any order; they are grouped by ``stream_id`` (streams keep the order of
    their first record) and sorted by ``seq``.

    Raises
    ------
    DecodeError
        Bad UTF-8 or a malformed record.
    SequenceError
        A stream whose seq values are not exactly ``0, 1, ..., k-1``.
    OrderError
        A timestamp that decreases along a stream.

    All three carry the offending 1-based line number in ``.line``.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown log format {format!r}; expected one of {FORMATS}")
    to_click = _record_from_json if format == "jsonl" else _record_from_tsv

    groups: dict[str, list[tuple[Click, int]]] = {}
    for lineno, raw in enumerate(_read_lines(source), start=1):
        text = _decode_line(raw, lineno)
        if not text.strip():
            continue
        click = to_click(text, lineno)
        groups.setdefault(click.stream_id, []).append((click, lineno))

    streams = []
    for stream_id, recs in groups.items():
        # stable sort keeps file order among duplicate seqs, so the later line is blamed
        recs.sort(key=lambda r: r[0].seq)
        for k, (click, lineno) in enumerate(recs):
            if click.seq != k:
                what = "duplicate" if k > 0 and click.seq == recs[k - 1][0].seq else "gap before"
                raise SequenceError(
                    f"stream {stream_id!r}: {what} seq {click.seq} (expected {k})", line=lineno
                )
            if k > 0 and click.timestamp < recs[k - 1][0].timestamp:
                raise OrderError(
                    f"stream {stream_id!r}: timestamp {click.timestamp} at seq {k} precedes "
                    f"{recs[k - 1][0].timestamp} at seq {k - 1}",
                    line=lineno,
                )
        streams.append(Clickstream(stream_id, tuple(c for c, _ in recs)))
    return ClickstreamCollection(streams)


def read_log(path, format: str | None = None) -> ClickstreamCollection:
    """Parse a log file; the format defaults from the ``.tsv`` suffix."""
    if format is None:
        format = "tsv" if str(path).endswith(".tsv") else "jsonl"
    with open(path, "rb") as fh:
        return parse_log(fh, format)


def serialize_log(collection: ClickstreamCollection, format: str = "jsonl") -> bytes:
    """Encode ``collection`` so that ``parse_log`` reproduces it exactly.

    TSV cannot carry latent coordinates or control characters; both raise
    :class:`FormatError`.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown log format {format!r}; expected one of {FORMATS}")
    out = []
    for _, c in collection.clicks():
        if format == "jsonl":
            rec = {
                "stream_id": c.stream_id,
                "seq": c.seq,
                "timestamp_ms": c.timestamp,
                "query": c.query_text,
                "response": c.response_text,
            }
            if c.latent is not None:
                rec["latent"] = list(c.latent)
            out.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
        else:
            if c.latent is not None:
                raise FormatError("TSV cannot carry latent coordinates; use jsonl")
            fields = [c.stream_id, str(c.seq), str(c.timestamp), c.query_text, c.response_text]
            for f in fields:
                if _CONTROL_RE.search(f):
                    raise FormatError(f"control character in TSV field of stream {c.stream_id!r}")
            out.append("\t".join(fields))
    return "".join(line + "\n" for line in out).encode("utf-8")


# --------------------------------------------------------------------------
# synthetic logs

MODES = ("random", "planted_geodesic")


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape of a synthetic log.

    In ``planted_geodesic`` mode every stream walks a straight line in a flat
    latent space of dimension ``n`` with ``step`` latent units per click.
    Start points are uniform in a ball of radius ``spread``; headings are a
    shared drift direction perturbed by Gaussian noise of scale
    ``heading_spread``.

    Term bags come from ``directions`` fixed projection axes.  Each axis is
    cut into bins (``bins_per_window`` bins per window); a click carries one
    term per bin inside a window centred on its projected coordinate.  The
    window width is chosen so that cosine distance between two bags matches
    latent Euclidean distance to first order.
    """

    num_streams: int = 20
    stream_len: int = 30
    n: int = 2
    mode: str = "planted_geodesic"
    step: float = 0.05
    spread: float = 0.3
    heading_spread: float = 0.15
    directions: int = 24
    bins_per_window: int = 128
    vocab_size: int = 50
    words_per_click: int = 8
    start_ms: int = 1_700_000_000_000

    def validate(self) -> "SyntheticConfig":
        check_positive_int(self.num_streams, "num_streams")
        check_positive_int(self.stream_len, "stream_len")
        check_positive_int(self.n, "n")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        check_positive_real(self.step, "step")
        check_positive_real(self.spread, "spread", allow_zero=True)
        check_positive_real(self.heading_spread, "heading_spread", allow_zero=True)
        check_positive_int(self.directions, "directions")
        check_positive_int(self.bins_per_window, "bins_per_window")
        check_positive_int(self.vocab_size, "vocab_size")
        check_positive_int(self.words_per_click, "words_per_click")
        return self


def projection_axes(n: int, count: int) -> np.ndarray:
    """Fixed unit vectors used to discretize the latent space.

    One axis for ``n == 1``; ``count`` equally spaced half-circle directions
    for ``n == 2``; otherwise a fixed pseudo-random set (independent of the
    generator seed so that the term geometry is the same for every log).
    """
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        theta = np.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    g = np.random.default_rng(0x5EED).standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def window_width(axes: np.ndarray) -> float:
    """Window width making cosine distance ~ Euclidean distance.

    For a small displacement ``u`` the bag overlap along axis ``a`` shrinks
    by ``|a.u| / width``, so the cosine distance is the mean of ``|a.u|``
    over axes divided by the width.  Averaging over the axes the mean of
    ``|a.u|`` for unit ``u`` is the isotropic constant below.
    """
    n = axes.shape[1]
    if n == 1:
        return 1.0 / axes.shape[0]
    if n == 2 and np.allclose(axes, projection_axes(2, axes.shape[0])):
        # exact value of the mean over equispaced directions, for u along x
        return float(np.mean(np.abs(axes[:, 0])))
    # E|a.u| for a uniform on the sphere S^{n-1}
    return math.gamma(n / 2) / (math.sqrt(math.pi) * math.gamma((n + 1) / 2))


def _bin_term(axis: int, b: int) -> str:
    return f"d{axis}{'n' if b < 0 else 'p'}{abs(b)}"


def latent_terms(x: np.ndarray, axes: np.ndarray, bins_per_window: int) -> list[str]:
    """Terms of a latent point: every bin centre inside its window, per axis."""
    width = window_width(axes)
    h = width / bins_per_window
    terms = []
    for m, proj in enumerate(axes @ x):
        lo = math.ceil((proj - width / 2) / h - 0.5)
        hi = math.floor((proj + width / 2) / h - 0.5)
        terms.extend(_bin_term(m, b) for b in range(lo, hi + 1))
    return terms


def generate_synthetic(config: SyntheticConfig, seed: int) -> ClickstreamCollection:
    """Deterministic synthetic log for a fixed ``(config, seed)``."""
    config.validate()
    rng = np.random.default_rng(check_seed(seed))
    if config.mode == "random":
        return _generate_random(config, rng)
    return _generate_planted(config, rng)


def _timestamps(rng, length, start_ms):
    gaps = rng.integers(500, 60_000, size=length)
    gaps[0] = 0
    return start_ms + np.cumsum(gaps)


def _generate_random(config, rng):
    words = [f"w{i}" for i in range(config.vocab_size)]
    streams = []
    for i in range(config.num_streams):
        sid = f"s{i:04d}"
        ts = _timestamps(rng, config.stream_len, config.start_ms + int(rng.integers(0, 86_400_000)))
        clicks = []
        for k in range(config.stream_len):
            q = rng.integers(0, config.vocab_size, size=int(rng.integers(1, 4)))
            r = rng.integers(0, config.vocab_size, size=config.words_per_click)
            clicks.append(
                Click(sid, k, int(ts[k]), " ".join(words[j] for j in q), " ".join(words[j] for j in r))
            )
        streams.append(Clickstream(sid, tuple(clicks)))
    return ClickstreamCollection(streams)


def _generate_planted(config, rng):
    n = config.n
    axes = projection_axes(n, config.directions)
    drift = rng.standard_normal(n)
    drift /= np.linalg.norm(drift)
    streams = []
    for i in range(config.num_streams):
        sid = f"s{i:04d}"
        # uniform in the ball: gaussian direction, radius ~ U^(1/n)
        g = rng.standard_normal(n)
        start = g / np.linalg.norm(g) * config.spread * rng.random() ** (1.0 / n)
        heading = drift + config.heading_spread * rng.standard_normal(n)
        heading /= np.linalg.norm(heading)
        ts = _timestamps(rng, config.stream_len, config.start_ms + int(rng.integers(0, 86_400_000)))
        clicks = []
        for k in range(config.stream_len):
            x = start + (k * config.step) * heading
            terms = latent_terms(x, axes, config.bins_per_window)
            half = len(terms) // 2
            clicks.append(
                Click(
                    sid,
                    k,
                    int(ts[k]),
                    " ".join(terms[:half]),
                    " ".join(terms[half:]),
                    tuple(float(v) for v in x),
                )
            )
        streams.append(Clickstream(sid, tuple(clicks)))
    return ClickstreamCollection(streams)


def write_log(collection: ClickstreamCollection, fh: IO[bytes], format: str = "jsonl") -> None:
    fh.write(serialize_log(collection, format))

"""Trade-level market data: LOBSTER ingestion, cleaning and price-change datasets.

Prices are kept as integers in 1e-4 currency units (LOBSTER's native unit)
until a :class:`RegressionDataset` is built, where they become floats.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import os
import warnings
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000
# LOBSTER session (seconds after midnight): 09:30 to 16:00.
DEFAULT_SESSION = (34_200, 57_600)
# LOBSTER marks empty book levels with these sentinel prices.
_DUMMY_ASK = 9_999_999_999
_DUMMY_BID = -9_999_999_999
VISIBLE_EXECUTION = 4
HIDDEN_EXECUTION = 5

EVENT_CSV_HEADER = ("timestamp_ns", "direction", "size", "mid_before", "mid_after")


class ParseError(ValueError):
    """Malformed input row; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OrderingError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class PriceConvention(enum.Enum):
    POST_TRADE = "PostTrade"  # Hasbrouck: dp_t = p_t - p_{t-1}, p = mid after trade
    PRE_TRADE = "PreTrade"  # TIM: dp_t = p_{t+1} - p_t, p = mid before trade


@dataclass(frozen=True, slots=True)
class TradeTick:
    timestamp: int
    size: int
    direction: int
    mid_before: int
    mid_after: int
    trade_price: int | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"size must be positive, got {self.size}")
        if self.direction not in (-1, 1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")
        if self.mid_before <= 0 or self.mid_after <= 0:
            raise ValueError("midprices must be positive")

    @property
    def signed_volume(self) -> int:
        return self.direction * self.size


@dataclass(frozen=True)
class EventSeries:
    ticks: tuple[TradeTick, ...]
    session_bounds: tuple[int, int]
    asset_id: str = ""
    rejected: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ticks", tuple(self.ticks))
        start, end = self.session_bounds
        for tk in self.ticks:
            if not start <= tk.timestamp <= end:
                raise ValueError(f"tick at {tk.timestamp} outside session {self.session_bounds}")

    def __len__(self):
        return len(self.ticks)

    def signed_volumes(self) -> np.ndarray:
        return np.array([tk.signed_volume for tk in self.ticks], dtype=float)


@dataclass(frozen=True)
class RegressionDataset:
    dp: np.ndarray
    v: np.ndarray
    convention: PriceConvention = PriceConvention.POST_TRADE

    def __post_init__(self):
        dp = np.asarray(self.dp, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if dp.ndim != 1 or dp.shape != v.shape or dp.size < 1:
            raise ValueError("dp and v must be 1-d arrays of equal, nonzero length")
        object.__setattr__(self, "dp", dp)
        object.__setattr__(self, "v", v)

    def __len__(self):
        return self.dp.size


@dataclass(frozen=True)
class LmfFlowParams:
    """Parameters of the Lillo-Mike-Farmer superposition of metaorders.

    ``max_length`` optionally truncates the length law (``1`` gives i.i.d. signs).
    """

    n_metaorders: int
    size_tail_exponent: float
    horizon: int
    child_size: int = 1
    seed: int = 0
    max_length: int | None = None

    def __post_init__(self):
        if self.n_metaorders < 1:
            raise ValueError("n_metaorders must be >= 1")
        if not self.size_tail_exponent > 1:
            raise ValueError("size_tail_exponent must be > 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.child_size < 1:
            raise ValueError("child_size must be >= 1")
        if self.max_length is not None and self.max_length < 1:
            raise ValueError("max_length must be >= 1")


# --------------------------------------------------------------------------
# Parsing


def _open_text(src) -> IO[str]:
    if isinstance(src, (str, os.PathLike)):
        return open(src, "r", newline="")
    if isinstance(src, (bytes, bytearray)):
        return io.StringIO(bytes(src).decode("utf-8"))
    if isinstance(src, io.TextIOBase):
        return src
    return io.TextIOWrapper(src, encoding="utf-8", newline="")


def _rows(stream) -> Iterable[tuple[int, list[str]]]:
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if line:
            yield lineno, [x.strip() for x in line.split(",")]


def _seconds_to_ns(text: str) -> int:
    return int(Decimal(text) * NS_PER_SECOND)


def _price_units(text: str) -> int:
    # LOBSTER stores dollars * 1e4 as integers; accept decimal dollars too.
    if "." in text:
        return int(Decimal(text) * 10_000)
    return int(text)


def parse_trade_file(
    messages,
    orderbook,
    *,
    asset_id: str = "",
    session: tuple[float, float] = DEFAULT_SESSION,
    include_hidden: bool = True,
    min_size: int = 1,
    invert_direction: bool = False,
) -> EventSeries:
    """Extract executions from a LOBSTER message file and its orderbook file.

    Row ``i`` of the orderbook is the book state after message ``i``, so the
    midprice before an execution comes from row ``i - 1`` and the one after
    from row ``i``. Executions lacking a valid quote on either side are
    rejected and counted in ``EventSeries.rejected``.

    The direction column is taken as the trade sign. Raw LOBSTER files
    record the side of the *resting* order instead; pass
    ``invert_direction=True`` for those.

    Timestamps are returned in integer nanoseconds since ``session[0]``
    (seconds after midnight); rows outside the session are dropped.
    """
    start_ns = _seconds_to_ns(str(session[0]))
    end_ns = _seconds_to_ns(str(session[1]))
    kinds = {VISIBLE_EXECUTION, HIDDEN_EXECUTION} if include_hidden else {VISIBLE_EXECUTION}

    msg_stream = _open_text(messages)
    book_stream = _open_text(orderbook)
    try:
        msg_rows = list(_rows(msg_stream))
        book_rows = list(_rows(book_stream))
    finally:
        if isinstance(messages, (str, os.PathLike)):
            msg_stream.close()
        if isinstance(orderbook, (str, os.PathLike)):
            book_stream.close()

    if len(book_rows) != len(msg_rows):
        raise ParseError(
            f"orderbook has {len(book_rows)} rows but message file has {len(msg_rows)}",
            line=min(len(book_rows), len(msg_rows)) + 1,
        )

    mids: list[int | None] = []
    for lineno, row in book_rows:
        if len(row) < 4 or len(row) % 4:
            raise ParseError(f"orderbook row needs 4 columns per level, got {len(row)}", lineno)
        try:
            ask, bid = _price_units(row[0]), _price_units(row[2])
        except (InvalidOperation, ValueError) as exc:
            raise ParseError(f"bad orderbook price ({exc})", lineno) from None
        if ask == _DUMMY_ASK or bid == _DUMMY_BID or ask <= 0 or bid <= 0:
            mids.append(None)
        else:
            # prices are multiples of the tick (100 units), so the half is exact
            mids.append((ask + bid) // 2)

    ticks = []
    rejected = 0
    prev_ts = None
    for i, (lineno, row) in enumerate(msg_rows):
        if len(row) != 6:
            raise ParseError(f"expected 6 columns, got {len(row)}", lineno)
        try:
            ts = _seconds_to_ns(row[0])
            kind, size, price, direction = int(row[1]), int(row[3]), _price_units(row[4]), int(row[5])
        except (InvalidOperation, ValueError) as exc:
            raise ParseError(f"bad field ({exc})", lineno) from None
        if prev_ts is not None and ts < prev_ts:
            raise OrderingError(f"line {lineno}: timestamp {row[0]} precedes previous row")
        prev_ts = ts
        if kind not in kinds or size < min_size:
            continue
        if not start_ns <= ts <= end_ns:
            continue
        if direction not in (-1, 1):
            raise ParseError(f"direction must be 1 or -1, got {direction}", lineno)
        before = mids[i - 1] if i > 0 else None
        after = mids[i]
        if before is None or after is None:
            rejected += 1
            continue
        ticks.append(
            TradeTick(
                timestamp=ts - start_ns,
                size=size,
                direction=-direction if invert_direction else direction,
                mid_before=before,
                mid_after=after,
                trade_price=price,
            )
        )
    if rejected:
        log.warning("rejected %d executions without quote context", rejected)
    return EventSeries(tuple(ticks), (0, end_ns - start_ns), asset_id=asset_id, rejected=rejected)


# --------------------------------------------------------------------------
# Cleaning


def merge_same_timestamp(series: EventSeries) -> EventSeries:
    """Collapse consecutive same-nanosecond, same-sign ticks into one."""
    merged: list[TradeTick] = []
    for tk in series.ticks:
        last = merged[-1] if merged else None
        if last is not None and last.timestamp == tk.timestamp and last.direction == tk.direction:
            merged[-1] = replace(last, size=last.size + tk.size, mid_after=tk.mid_after)
        else:
            merged.append(tk)
    return replace(series, ticks=tuple(merged))


def clip_session(series: EventSeries, head: int = 30 * 60 * NS_PER_SECOND,
                 tail: int = 30 * 60 * NS_PER_SECOND) -> EventSeries:
    """Keep ticks in ``[start + head, end - tail]`` (durations in ns)."""
    start, end = series.session_bounds
    if head < 0 or tail < 0 or head + tail >= end - start and (head or tail):
        raise ValueError("head + tail must be shorter than the session")
    lo, hi = start + head, end - tail
    kept = tuple(tk for tk in series.ticks if lo <= tk.timestamp <= hi)
    notes = series.warnings
    if not kept:
        msg = f"clip_session left no ticks in [{lo}, {hi}]"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes = notes + ("empty-series",)
    return replace(series, ticks=kept, warnings=notes)


def price_changes(series: EventSeries,
                  convention: PriceConvention = PriceConvention.POST_TRADE) -> RegressionDataset:
    if len(series) < 2:
        raise InsufficientDataError("need at least 2 ticks to form price changes")
    vol = series.signed_volumes()
    if convention is PriceConvention.POST_TRADE:
        after = np.array([tk.mid_after for tk in series.ticks], dtype=np.int64)
        return RegressionDataset(np.diff(after).astype(float), vol[1:], convention)
    before = np.array([tk.mid_before for tk in series.ticks], dtype=np.int64)
    return RegressionDataset(np.diff(before).astype(float), vol[:-1], convention)


# --------------------------------------------------------------------------
# Synthetic LMF order flow

PLACEHOLDER_MID = 1_000_000


def _lmf_lengths(rng: np.random.Generator, a: float, n: int, cap: int | None) -> np.ndarray:
    # discrete Pareto P(L >= l) = l**-a by inverse transform; 1 - U lies in (0, 1]
    u = 1.0 - rng.random(n)
    lengths = np.floor(u ** (-1.0 / a))
    lengths = np.minimum(lengths, 2.0**62)
    if cap is not None:
        lengths = np.minimum(lengths, cap)
    return lengths.astype(np.int64)


def lmf_signs(params: LmfFlowParams) -> np.ndarray:
    """Trade signs of the LMF superposition as an int8 array."""
    rng = np.random.default_rng(params.seed)
    m, a, horizon = params.n_metaorders, params.size_tail_exponent, params.horizon
    remaining = _lmf_lengths(rng, a, m, params.max_length).tolist()
    sign = (2 * rng.integers(0, 2, m) - 1).tolist()
    picks = rng.integers(0, m, horizon).tolist()

    # fresh metaorders are drawn from pre-generated blocks to keep the loop cheap
    block = max(1024, horizon // 16)
    fresh_len: list[int] = []
    fresh_sign: list[int] = []
    out = np.empty(horizon, dtype=np.int8)
    for t, j in enumerate(picks):
        out[t] = sign[j]
        remaining[j] -= 1
        if remaining[j] == 0:
            if not fresh_len:
                fresh_len = _lmf_lengths(rng, a, block, params.max_length).tolist()[::-1]
                fresh_sign = (2 * rng.integers(0, 2, block) - 1).tolist()
            remaining[j] = fresh_len.pop()
            sign[j] = fresh_sign.pop()
    return out


def synth_lmf_orderflow(params: LmfFlowParams) -> EventSeries:
    """Synthetic order flow as an :class:`EventSeries` (one tick per step).

    Timestamps are step indices 1..horizon; midprices are a constant
    placeholder since the generator models flow only.
    """
    signs = lmf_signs(params)
    ticks = tuple(
        TradeTick(t + 1, params.child_size, int(s), PLACEHOLDER_MID, PLACEHOLDER_MID)
        for t, s in enumerate(signs)
    )
    return EventSeries(ticks, (0, params.horizon), asset_id="lmf-synthetic")


# --------------------------------------------------------------------------
# CSV


def write_event_csv(series: EventSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_CSV_HEADER)
        for tk in series.ticks:
            w.writerow((tk.timestamp, tk.direction, tk.size, tk.mid_before, tk.mid_after))


def read_event_csv(path, *, asset_id: str = "", session_bounds: Sequence[int] | None = None) -> EventSeries:
    ticks = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_CSV_HEADER:
            raise ParseError(f"expected header {','.join(EVENT_CSV_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts, d, sz, mb, ma = (int(x) for x in row)
                ticks.append(TradeTick(ts, sz, d, mb, ma))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if session_bounds is None:
        session_bounds = (ticks[0].timestamp, ticks[-1].timestamp) if ticks else (0, 0)
    return EventSeries(tuple(ticks), tuple(session_bounds), asset_id=asset_id)

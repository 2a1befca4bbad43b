"""Round-trip latency samples, statistics and report rendering.

Note on the RTT definition: the source formula as printed reads
out-minus-in, which is negative for a send/receive pair; this module uses
t_in - t_out and raises NegativeRtt on clock anomalies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .core import MS, Timestamp
from .errors import EmptySamples, MixedClockDomain, NegativeRtt

HIST_BIN_NS = 1 * MS
HIST_BINS = 200  # 1 ms bins covering [0, 200) ms, plus one overflow bin


@dataclass(frozen=True)
class RttSample:
    task_id: int
    value: float
    t_out: Timestamp
    t_in: Timestamp
    rtt_ns: int

    def __post_init__(self):
        if self.rtt_ns < 0:
            raise NegativeRtt(f"rtt {self.rtt_ns} ns")


def compute_rtt(t_out: Timestamp, t_in: Timestamp) -> int:
    """Round trip time in nanoseconds (receive minus send)."""
    if t_out.clock != t_in.clock:
        raise MixedClockDomain(f"{t_out.clock!r} vs {t_in.clock!r}")
    rtt = t_in.nanos - t_out.nanos
    if rtt < 0:
        raise NegativeRtt(f"t_in {t_in.nanos} earlier than t_out {t_out.nanos}")
    return rtt


def make_sample(task_id: int, value: float, t_out: Timestamp,
                t_in: Timestamp) -> RttSample:
    return RttSample(task_id, value, t_out, t_in, compute_rtt(t_out, t_in))


def nearest_rank_p99(sorted_ns: list[int]) -> int:
    """Nearest-rank percentile: element at index ceil(0.99 * n) of the sorted list."""
    n = len(sorted_ns)
    rank = math.ceil(0.99 * n)
    return sorted_ns[max(0, rank - 1)]


@dataclass(frozen=True)
class LatencyStats:
    count: int
    min_ns: int
    mean_ns: float
    max_ns: int
    p99_ns: int
    lost: int = 0
    histogram: tuple = field(default=())  # HIST_BINS + 1 counts, last = overflow

    def to_json_dict(self) -> dict:
        return {
            "count": self.count,
            "min_ms": self.min_ns / MS,
            "mean_ms": self.mean_ns / MS,
            "max_ms": self.max_ns / MS,
            "p99_ms": self.p99_ns / MS,
            "lost": self.lost,
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), sort_keys=True,
                          separators=(",", ":")).encode() + b"\n"


def compute_stats(samples: list[RttSample], lost: int = 0) -> LatencyStats:
    """Exact min/mean/max, nearest-rank p99, and the 1 ms histogram."""
    if not samples:
        raise EmptySamples("no RTT samples")
    rtts = sorted(s.rtt_ns for s in samples)
    hist = [0] * (HIST_BINS + 1)
    for rtt in rtts:
        hist[min(rtt // HIST_BIN_NS, HIST_BINS)] += 1
    return LatencyStats(
        count=len(rtts),
        min_ns=rtts[0],
        mean_ns=sum(rtts) / len(rtts),
        max_ns=rtts[-1],
        p99_ns=nearest_rank_p99(rtts),
        lost=lost,
        histogram=tuple(hist),
    )


def one_way_estimate(stats: LatencyStats) -> float:
    """Average one-way latency: half the mean round trip, nanoseconds."""
    return stats.mean_ns / 2.0


def _fmt_ms(nanos: float) -> str:
    text = f"{nanos / MS:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


def render_summary(stats: LatencyStats) -> str:
    """One-line figure-caption style summary."""
    return (f"Min: {_fmt_ms(stats.min_ns)} ms. "
            f"Avg: {_fmt_ms(stats.mean_ns)} ms. "
            f"Max: {_fmt_ms(stats.max_ns)} ms. "
            f"@99%: {_fmt_ms(stats.p99_ns)} ms.")


def render_histogram_csv(stats: LatencyStats) -> str:
    lines = ["bin_start_ms,count"]
    for i, count in enumerate(stats.histogram):
        label = str(i) if i < HIST_BINS else f"{HIST_BINS}+"
        lines.append(f"{label},{count}")
    return "\n".join(lines) + "\n"


def render_report(stats: LatencyStats) -> tuple[str, str]:
    """(summary line, histogram CSV)."""
    return render_summary(stats), render_histogram_csv(stats)

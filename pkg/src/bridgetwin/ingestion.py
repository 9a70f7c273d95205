"""Detection-log and weather-record ingestion.

Converts per-frame vehicle detections into a stabilized observed density for
the traffic solver, replays weather CSVs, and generates synthetic detection
logs for desk-scale runs.

File formats
------------
Detection CSV   header ``timestamp,class,x,y,w,h,confidence``; one row per
                detection, rows of one frame share a timestamp.  A frame with
                zero detections is encoded as a single marker row with every
                field after the timestamp empty, so logs round-trip losslessly.
Detection JSONL one object per frame:
                ``{"t": <int>, "det": [{"c": "car", "b": [x,y,w,h], "p": <float>}]}``
Weather CSV     header ``timestamp,temp_c,precip_mmh,wind_ms``
"""

from __future__ import annotations

import enum
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

from .errors import ConfigError, ParseError
from .seeding import RandomStream, derive_seed


class VehicleClass(enum.Enum):
    CAR = "car"
    TRUCK = "truck"
    BUS = "bus"


CLASS_ORDER = (VehicleClass.CAR, VehicleClass.TRUCK, VehicleClass.BUS)


@dataclass(frozen=True)
class Detection:
    """One detected vehicle: class label, pixel box (x, y, w, h), confidence."""

    vehicle_class: VehicleClass
    box: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self) -> None:
        x, y, w, h = self.box
        if x < 0 or y < 0:
            raise ValueError(f"box origin must be non-negative, got ({x}, {y})")
        if w <= 0 or h <= 0:
            raise ValueError(f"box size must be positive, got ({w}, {h})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DetectionFrame:
    """All detections of one camera frame; ``timestamp`` is integer epoch seconds."""

    timestamp: int
    detections: tuple[Detection, ...] = ()


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: int
    temperature: float  # deg C
    precipitation: float  # mm/h
    wind_speed: float  # m/s

    def __post_init__(self) -> None:
        if self.precipitation < 0:
            raise ValueError(f"precipitation must be >= 0, got {self.precipitation}")
        if self.wind_speed < 0:
            raise ValueError(f"wind speed must be >= 0, got {self.wind_speed}")


@dataclass(frozen=True)
class SegmentConfig:
    """Camera segment geometry and the observation filter parameters."""

    effective_length: float = 250.0  # m
    min_confidence: float = 0.25
    ema_alpha: float = 0.3

    def __post_init__(self) -> None:
        if self.effective_length <= 0:
            raise ConfigError(f"effective_length must be > 0, got {self.effective_length}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError(f"min_confidence must be in [0, 1], got {self.min_confidence}")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ConfigError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")


@dataclass(frozen=True)
class ObservedDensity:
    """Per-frame observed traffic state: raw count density and its EMA."""

    timestamp: int
    rho_raw: float  # veh/m
    rho_stable: float  # veh/m, exponentially smoothed
    vehicle_count: int
    class_counts: Mapping[VehicleClass, int] = field(default_factory=dict)
    valid: bool = True


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant arrival-rate profile for the synthetic generator."""

    base_rate: float = 0.5  # veh/s outside the peak window
    peak_rate: float = 2.0  # veh/s inside [peak_start, peak_end)
    peak_start: float = 300.0
    peak_end: float = 600.0
    class_mix: Mapping[VehicleClass, float] = field(
        default_factory=lambda: {
            VehicleClass.CAR: 0.85,
            VehicleClass.TRUCK: 0.10,
            VehicleClass.BUS: 0.05,
        }
    )
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.base_rate < 0 or self.peak_rate < 0:
            raise ConfigError("arrival rates must be >= 0")
        if self.scale < 0:
            raise ConfigError(f"demand scale must be >= 0, got {self.scale}")
        if self.peak_end < self.peak_start:
            raise ConfigError("peak_end must be >= peak_start")
        total = sum(self.class_mix.values())
        if any(v < 0 for v in self.class_mix.values()) or abs(total - 1.0) > 1e-9:
            raise ConfigError(f"class_mix fractions must be >= 0 and sum to 1, got sum {total}")

    def rate_at(self, t: float) -> float:
        rate = self.peak_rate if self.peak_start <= t < self.peak_end else self.base_rate
        return rate * self.scale


_DETECTION_HEADER = "timestamp,class,x,y,w,h,confidence"
_WEATHER_HEADER = "timestamp,temp_c,precip_mmh,wind_ms"
_CLASS_BY_LABEL = {c.value: c for c in CLASS_ORDER}


def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


def _parse_int(text: str, fieldname: str, source: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"field '{fieldname}' is not an integer: {text!r}", source, line) from None


def _parse_float(text: str, fieldname: str, source: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"field '{fieldname}' is not a number: {text!r}", source, line) from None
    if math.isnan(value) or math.isinf(value):
        raise ParseError(f"field '{fieldname}' must be finite: {text!r}", source, line)
    return value


def parse_detection_log(stream: TextIO | Iterable[str], fmt: str = "csv",
                        source: str = "<input>") -> list[DetectionFrame]:
    """Parse a detection log into frames with strictly increasing timestamps.

    ``fmt`` is ``csv`` or ``jsonl``.  Malformed rows raise :class:`ParseError`
    naming the line and field; non-monotone timestamps raise naming the
    offending timestamp.
    """
    if fmt == "csv":
        return _parse_detection_csv(stream, source)
    if fmt == "jsonl":
        return _parse_detection_jsonl(stream, source)
    raise ConfigError(f"unknown detection log format: {fmt!r}")


def _parse_detection_csv(stream: TextIO | Iterable[str], source: str) -> list[DetectionFrame]:
    frames: list[DetectionFrame] = []
    current_ts: int | None = None
    current: list[Detection] = []

    def close_frame() -> None:
        if current_ts is not None:
            frames.append(DetectionFrame(current_ts, tuple(current)))

    saw_header = False
    for lineno, raw in enumerate(stream, start=1):
        row = raw.rstrip("\n").rstrip("\r")
        if not row:
            continue
        if not saw_header:
            if row != _DETECTION_HEADER:
                raise ParseError(f"expected header {_DETECTION_HEADER!r}, got {row!r}", source, lineno)
            saw_header = True
            continue
        fields = row.split(",")
        if len(fields) != 7:
            raise ParseError(f"expected 7 fields, got {len(fields)}", source, lineno)
        ts = _parse_int(fields[0], "timestamp", source, lineno)
        if current_ts is not None and ts < current_ts:
            raise ParseError(f"non-monotone timestamp {ts} (previous {current_ts})", source, lineno)
        if ts != current_ts:
            close_frame()
            if frames and ts <= frames[-1].timestamp:
                raise ParseError(f"non-monotone timestamp {ts}", source, lineno)
            current_ts = ts
            current = []
        if all(f == "" for f in fields[1:]):
            # Empty-frame marker: a frame observed with zero vehicles.
            if current:
                raise ParseError("empty-frame marker mixed with detections", source, lineno)
            continue
        label = fields[1]
        if label not in _CLASS_BY_LABEL:
            raise ParseError(f"field 'class' has unknown label {label!r}", source, lineno)
        x = _parse_float(fields[2], "x", source, lineno)
        y = _parse_float(fields[3], "y", source, lineno)
        w = _parse_float(fields[4], "w", source, lineno)
        h = _parse_float(fields[5], "h", source, lineno)
        conf = _parse_float(fields[6], "confidence", source, lineno)
        try:
            det = Detection(_CLASS_BY_LABEL[label], (x, y, w, h), conf)
        except ValueError as exc:
            raise ParseError(str(exc), source, lineno) from None
        current.append(det)
    close_frame()
    return frames


def _parse_detection_jsonl(stream: TextIO | Iterable[str], source: str) -> list[DetectionFrame]:
    frames: list[DetectionFrame] = []
    for lineno, raw in enumerate(stream, start=1):
        row = raw.strip()
        if not row:
            continue
        try:
            obj = json.loads(row)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", source, lineno) from None
        if not isinstance(obj, dict) or "t" not in obj or "det" not in obj:
            raise ParseError("frame object must have keys 't' and 'det'", source, lineno)
        if not isinstance(obj["t"], int):
            raise ParseError(f"field 't' is not an integer: {obj['t']!r}", source, lineno)
        ts = obj["t"]
        if frames and ts <= frames[-1].timestamp:
            raise ParseError(f"non-monotone timestamp {ts}", source, lineno)
        detections = []
        for det in obj["det"]:
            label = det.get("c")
            if label not in _CLASS_BY_LABEL:
                raise ParseError(f"field 'c' has unknown label {label!r}", source, lineno)
            box = det.get("b")
            if not isinstance(box, list) or len(box) != 4:
                raise ParseError("field 'b' must be a 4-element list", source, lineno)
            conf = det.get("p")
            if not isinstance(conf, (int, float)):
                raise ParseError(f"field 'p' is not a number: {conf!r}", source, lineno)
            try:
                detections.append(Detection(_CLASS_BY_LABEL[label], tuple(float(v) for v in box), float(conf)))
            except ValueError as exc:
                raise ParseError(str(exc), source, lineno) from None
        frames.append(DetectionFrame(ts, tuple(detections)))
    return frames


def write_detection_log(frames: Iterable[DetectionFrame], fmt: str = "csv") -> str:
    """Serialize frames; ``parse_detection_log`` inverts this exactly."""
    if fmt == "csv":
        lines = [_DETECTION_HEADER]
        for frame in frames:
            if not frame.detections:
                lines.append(f"{frame.timestamp},,,,,,")
                continue
            for det in frame.detections:
                x, y, w, h = det.box
                lines.append(
                    f"{frame.timestamp},{det.vehicle_class.value},"
                    f"{_fmt(x)},{_fmt(y)},{_fmt(w)},{_fmt(h)},{_fmt(det.confidence)}"
                )
        return "\n".join(lines) + "\n"
    if fmt == "jsonl":
        lines = []
        for frame in frames:
            obj = {
                "t": frame.timestamp,
                "det": [
                    {"c": d.vehicle_class.value, "b": list(d.box), "p": d.confidence}
                    for d in frame.detections
                ],
            }
            lines.append(json.dumps(obj, separators=(",", ":")))
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown detection log format: {fmt!r}")


def parse_weather_log(stream: TextIO | Iterable[str], source: str = "<input>") -> list[WeatherRecord]:
    """Parse a weather CSV; output is sorted by timestamp."""
    records: list[WeatherRecord] = []
    saw_header = False
    for lineno, raw in enumerate(stream, start=1):
        row = raw.rstrip("\n").rstrip("\r")
        if not row:
            continue
        if not saw_header:
            if row != _WEATHER_HEADER:
                raise ParseError(f"expected header {_WEATHER_HEADER!r}, got {row!r}", source, lineno)
            saw_header = True
            continue
        fields = row.split(",")
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", source, lineno)
        ts = _parse_int(fields[0], "timestamp", source, lineno)
        temp = _parse_float(fields[1], "temp_c", source, lineno)
        precip = _parse_float(fields[2], "precip_mmh", source, lineno)
        wind = _parse_float(fields[3], "wind_ms", source, lineno)
        try:
            records.append(WeatherRecord(ts, temp, precip, wind))
        except ValueError as exc:
            raise ParseError(str(exc), source, lineno) from None
    records.sort(key=lambda r: r.timestamp)
    return records


def write_weather_log(records: Iterable[WeatherRecord]) -> str:
    lines = [_WEATHER_HEADER]
    for rec in records:
        lines.append(
            f"{rec.timestamp},{_fmt(rec.temperature)},{_fmt(rec.precipitation)},{_fmt(rec.wind_speed)}"
        )
    return "\n".join(lines) + "\n"


def align_weather(records: list[WeatherRecord], timestamp: float) -> WeatherRecord:
    """Step-hold lookup: latest record at or before ``timestamp``, else the earliest."""
    if not records:
        raise ValueError("cannot align against an empty weather log")
    stamps = [r.timestamp for r in records]
    idx = bisect_right(stamps, timestamp)
    return records[max(idx - 1, 0)]


def map_to_density(frame: DetectionFrame, prev: ObservedDensity | None,
                   cfg: SegmentConfig) -> ObservedDensity:
    """Map one frame to observed density and fold it into the EMA.

    Detections below ``cfg.min_confidence`` are excluded from the count.
    With smoothing weight ``a = cfg.ema_alpha``:
    ``rho_stable = a * rho_raw + (1 - a) * prev.rho_stable``.
    """
    counts = {c: 0 for c in CLASS_ORDER}
    for det in frame.detections:
        if det.confidence >= cfg.min_confidence:
            counts[det.vehicle_class] += 1
    n = sum(counts.values())
    rho_raw = n / cfg.effective_length
    if prev is None:
        rho_stable = rho_raw
    else:
        a = cfg.ema_alpha
        rho_stable = a * rho_raw + (1.0 - a) * prev.rho_stable
    return ObservedDensity(frame.timestamp, rho_raw, rho_stable, n, counts, valid=True)


def handle_missing_frame(prev: ObservedDensity, timestamp: int) -> ObservedDensity:
    """Hold the stabilized density through a dropped frame and flag it invalid."""
    return ObservedDensity(
        timestamp,
        rho_raw=0.0,
        rho_stable=prev.rho_stable,
        vehicle_count=0,
        class_counts={c: 0 for c in CLASS_ORDER},
        valid=False,
    )


def generate_synthetic_traffic(profile: DemandProfile, duration: float, seed: int,
                               start_time: int = 0) -> list[DetectionFrame]:
    """Generate a 1 Hz detection log with Poisson arrivals at the profile rate.

    Each frame owns an independent stream derived from ``(seed, frame index)``;
    the first draw of a frame is the arrival count, taken by inverse CDF, so
    scaling the demand up never removes vehicles from a frame.  Deterministic
    for a fixed seed and profile.
    """
    if duration <= 0:
        raise ConfigError(f"duration must be > 0, got {duration}")
    cumulative: list[tuple[float, str]] = []
    acc = 0.0
    for cls in CLASS_ORDER:
        acc += profile.class_mix.get(cls, 0.0)
        cumulative.append((acc, cls.value))

    # Rough pixel-box geometry per class: (width base, width jitter).
    box_geometry = {
        VehicleClass.CAR: (60.0, 20.0),
        VehicleClass.TRUCK: (110.0, 30.0),
        VehicleClass.BUS: (100.0, 25.0),
    }

    frames: list[DetectionFrame] = []
    for k in range(int(duration)):
        t = start_time + k
        stream = RandomStream(derive_seed(seed, k, "frame"))
        count = stream.poisson(profile.rate_at(float(k)))
        detections = []
        for _ in range(count):
            cls = _CLASS_BY_LABEL[stream.choice_weighted(cumulative)]
            w_base, w_jit = box_geometry[cls]
            w = stream.uniform(w_base - w_jit, w_base + w_jit)
            h = stream.uniform(0.5 * w, 0.8 * w)
            x = stream.uniform(0.0, 1920.0 - w)
            y = stream.uniform(0.0, 1080.0 - h)
            conf = stream.uniform(0.3, 0.99)
            detections.append(Detection(cls, (x, y, w, h), conf))
        frames.append(DetectionFrame(t, tuple(detections)))
    return frames

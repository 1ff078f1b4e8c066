"""Event catalog ingestion: CSV parsing, unit-square mapping and grid binning."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class ConfigError(ValueError):
    """Bad column mapping or malformed input file."""


DEFAULT_COLUMNS = {
    "latitude": "latitude",
    "longitude": "longitude",
    "mag": "magnitude",
    "time": "timestamp",
}


@dataclass(frozen=True)
class RawEvent:
    longitude: float
    latitude: float
    magnitude: Optional[float] = None
    timestamp: Optional[str] = None


@dataclass(frozen=True)
class SkippedRow:
    line: int
    reason: str


def parse_usgs_csv(data, column_map: dict | None = None):
    """Parse a header-driven earthquake CSV.

    ``data`` may be bytes, a str, a path, or a binary/text stream.  ``column_map``
    maps CSV column names to roles (longitude, latitude, magnitude, timestamp).

    Returns ``(events, skipped)``; unparseable or out-of-range rows land in
    ``skipped`` with a reason instead of aborting the parse.
    """
    text = _read_text(data)
    column_map = DEFAULT_COLUMNS if column_map is None else column_map
    if not text.strip():
        return [], []

    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    roles = {}
    for name, role in column_map.items():
        if name in header:
            roles[role] = header.index(name)
    missing = [r for r in ("longitude", "latitude") if r not in roles]
    if missing:
        raise ConfigError(f"CSV header {header} has no column for role(s) {missing}")

    events, skipped = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            lon = float(row[roles["longitude"]])
            lat = float(row[roles["latitude"]])
        except (ValueError, IndexError):
            skipped.append(SkippedRow(line_no, "unparseable coordinates"))
            continue
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            skipped.append(SkippedRow(line_no, f"coordinates out of range ({lon}, {lat})"))
            continue
        mag = None
        if "magnitude" in roles:
            try:
                mag = float(row[roles["magnitude"]])
            except (ValueError, IndexError):
                mag = None
        ts = None
        if "timestamp" in roles and roles["timestamp"] < len(row):
            ts = row[roles["timestamp"]] or None
        events.append(RawEvent(lon, lat, mag, ts))
    return events, skipped


def _read_text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    if isinstance(data, Path):
        return data.read_text(encoding="utf-8-sig")
    if isinstance(data, str):
        # a single line naming an existing file is treated as a path
        if "\n" not in data and data and Path(data).is_file():
            return Path(data).read_text(encoding="utf-8-sig")
        return data
    raw = data.read()
    return raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw


def filter_magnitude(events: Iterable[RawEvent], min_magnitude: float) -> list:
    """Keep events with known magnitude >= ``min_magnitude``."""
    return [e for e in events if e.magnitude is not None and e.magnitude >= min_magnitude]


# ----------------------------------------------------------------------------
# Unit-square frames
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """Affine map x = (lon - x_offset) / x_scale, y = (lat - y_offset) / y_scale."""

    x_offset: float
    x_scale: float
    y_offset: float
    y_scale: float
    kind: str = "global"

    def __post_init__(self):
        if self.x_scale == 0 or self.y_scale == 0:
            raise ValueError("frame scales must be nonzero")

    def forward(self, lon, lat):
        lon = np.asarray(lon, dtype=np.float64)
        lat = np.asarray(lat, dtype=np.float64)
        return (lon - self.x_offset) / self.x_scale, (lat - self.y_offset) / self.y_scale

    def inverse(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return x * self.x_scale + self.x_offset, y * self.y_scale + self.y_offset

    def to_dict(self):
        return {
            "kind": self.kind,
            "x_offset": self.x_offset,
            "x_scale": self.x_scale,
            "y_offset": self.y_offset,
            "y_scale": self.y_scale,
        }


GLOBAL_FRAME = Frame(-180.0, 360.0, -90.0, 180.0, "global")


@dataclass(frozen=True)
class PointPattern:
    points: np.ndarray  # (count, 2), columns x, y in [0, 1]
    frame: Frame = GLOBAL_FRAME

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("point coordinates must lie in the unit square")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def __len__(self):
        return self.count


def to_unit_square(events: list, frame: str = "global") -> PointPattern:
    """Map longitude/latitude to [0, 1]^2.

    ``frame="global"`` uses the fixed world rectangle; ``frame="bbox"`` uses the
    data bounding box (a zero-width extent falls back to unit scale).
    """
    lon = np.array([e.longitude for e in events], dtype=np.float64)
    lat = np.array([e.latitude for e in events], dtype=np.float64)
    if frame == "global" or lon.size == 0:
        fr = GLOBAL_FRAME
    elif frame == "bbox":
        xs = float(lon.max() - lon.min()) or 1.0
        ys = float(lat.max() - lat.min()) or 1.0
        fr = Frame(float(lon.min()), xs, float(lat.min()), ys, "bbox")
    else:
        raise ValueError(f"unknown frame {frame!r}")
    x, y = fr.forward(lon, lat)
    # rounding in the affine map can leave values a hair outside [0, 1]
    pts = np.clip(np.column_stack([x, y]), 0.0, 1.0) if lon.size else np.empty((0, 2))
    return PointPattern(pts, fr)


# ----------------------------------------------------------------------------
# Grid counts
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCounts:
    """Counts on an r x r grid, cell (row, col) stored at index row * r + col.

    Row 0 is the bottom strip y in [0, 1/r).
    """

    resolution: int
    counts: np.ndarray

    def __post_init__(self):
        r = int(self.resolution)
        if r < 1:
            raise ValueError("resolution must be >= 1")
        c = np.asarray(self.counts).reshape(-1)
        if c.size != r * r:
            raise ValueError(f"expected {r * r} counts for resolution {r}, got {c.size}")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("counts must be nonnegative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "resolution", r)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.resolution**2

    @property
    def cell_area(self) -> float:
        return 1.0 / self.n

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_matrix(self) -> np.ndarray:
        return self.counts.reshape(self.resolution, self.resolution)


def cell_index(points: np.ndarray, resolution: int) -> np.ndarray:
    """Row-major cell index of each point; coordinates equal to 1.0 go to the last cell."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    r = int(resolution)
    col = np.minimum(np.floor(pts[:, 0] * r).astype(np.int64), r - 1)
    row = np.minimum(np.floor(pts[:, 1] * r).astype(np.int64), r - 1)
    return row * r + col


def bin_counts(pattern: PointPattern, resolution: int) -> GridCounts:
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    idx = cell_index(pattern.points, resolution)
    counts = np.bincount(idx, minlength=resolution * resolution)
    return GridCounts(resolution, counts)


def aggregate(grid: GridCounts, factor: int = 2) -> GridCounts:
    """Sum counts over factor x factor blocks (coarsen the grid)."""
    r = grid.resolution
    if r % factor:
        raise ValueError(f"resolution {r} is not divisible by {factor}")
    m = grid.as_matrix().reshape(r // factor, factor, r // factor, factor)
    return GridCounts(r // factor, m.sum(axis=(1, 3)).reshape(-1))


# ----------------------------------------------------------------------------
# Grid CSV format: "resolution,r" then r rows of r values
# ----------------------------------------------------------------------------


def format_grid_csv(resolution: int, values) -> str:
    values = np.asarray(values).reshape(resolution, resolution)
    lines = [f"resolution,{resolution}"]
    if np.issubdtype(values.dtype, np.integer):
        for row in values:
            lines.append(",".join(str(int(v)) for v in row))
    else:
        for row in values:
            lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_grid_csv(path, resolution: int, values) -> None:
    Path(path).write_text(format_grid_csv(resolution, values))


def read_grid_csv(path, dtype=float) -> tuple:
    """Return ``(resolution, flat values)`` from a grid CSV."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty grid file")
    head = lines[0].split(",")
    if len(head) != 2 or head[0].strip() != "resolution":
        raise ConfigError(f"{path}: first line must be 'resolution,<r>'")
    try:
        r = int(head[1])
    except ValueError:
        raise ConfigError(f"{path}: bad resolution {head[1]!r}") from None
    if r < 1 or len(lines) != r + 1:
        raise ConfigError(f"{path}: expected {r} data rows, found {len(lines) - 1}")
    try:
        rows = [[dtype(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if any(len(row) != r for row in rows):
        raise ConfigError(f"{path}: every row must have {r} values")
    return r, np.array(rows).reshape(-1)


def read_grid_counts(path) -> GridCounts:
    r, values = read_grid_csv(path, dtype=int)
    try:
        return GridCounts(r, values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def is_grid_csv(path) -> bool:
    with open(path, encoding="utf-8-sig") as fh:
        first = fh.readline()
    return first.strip().startswith("resolution,")


def write_points_csv(path, pattern: PointPattern) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in pattern.points:
            w.writerow([repr(float(x)), repr(float(y))])


def read_points_csv(path) -> PointPattern:
    pts = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y"]:
            raise ConfigError(f"{path}: expected header x,y")
        for row in reader:
            if row:
                pts.append((float(row[0]), float(row[1])))
    return PointPattern(np.array(pts, dtype=np.float64).reshape(-1, 2))


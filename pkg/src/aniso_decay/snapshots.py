"""
Snapshot schedules, the in-memory snapshot store, and the ANS1 file format.

An ANS1 file is a 40-byte little-endian header

    magic "ANS1" | n_h, n_h, n_v as uint32 | L_h, L_v, t as float64

followed by the three velocity components, each n_h * n_h * n_v float64
values with x3 varying fastest. A store directory holds one file per
snapshot plus manifest.parquet listing (index, t, file).
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from aniso_decay.errors import GridError, ScheduleError, SnapshotFormatError
from aniso_decay.grid_spectral import Grid, VelocityField, to_physical

logger = logging.getLogger(__name__)

MAGIC = b"ANS1"
HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("n", "<u4", (3,)),
    ("params", "<f8", (3,)),
])
MANIFEST_NAME = "manifest.parquet"
MANIFEST_SCHEMA = pa.schema([
    ("index", pa.int32()),
    ("t", pa.float64()),
    ("file", pa.string()),
])
TIME_TOL = 1e-9


def _same_time(a: float, b: float) -> bool:
    return abs(a - b) <= TIME_TOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class Schedule:
    """
    Snapshot times: uniform spacing head_dt on (0, head_end], then geometric
    times 2^(k / per_octave) up to t_end, plus any extra times.
    """
    head_dt: float
    head_end: float
    per_octave: int
    t_end: float
    extra: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.head_dt > 0 or not self.head_end >= self.head_dt:
            raise ScheduleError(
                f"need 0 < head_dt <= head_end, got head_dt={self.head_dt}, head_end={self.head_end}")
        if self.per_octave < 1:
            raise ScheduleError(f"per_octave must be >= 1, got {self.per_octave}")
        if not self.t_end > 0:
            raise ScheduleError(f"t_end must be positive, got {self.t_end}")

    @property
    def times(self) -> np.ndarray:
        n_head = int(round(self.head_end / self.head_dt))
        head = self.head_dt * np.arange(1, n_head + 1)
        k_min = int(np.floor(self.per_octave * np.log2(self.head_end))) + 1
        k_max = int(np.floor(self.per_octave * np.log2(self.t_end) + 1e-9))
        tail = 2.0 ** (np.arange(k_min, k_max + 1) / self.per_octave)
        extra = np.asarray(self.extra + (self.t_end,), dtype=float)
        merged = np.concatenate([[0.0], head, tail, extra])
        merged = merged[merged <= self.t_end * (1 + TIME_TOL)]
        merged = np.unique(np.round(merged, 12))
        return merged

    @property
    def descriptor(self) -> dict:
        return {
            "head_dt": self.head_dt,
            "head_end": self.head_end,
            "per_octave": self.per_octave,
            "t_end": self.t_end,
            "extra": list(self.extra),
        }

    def refine(self) -> "Schedule":
        """Halve the head spacing and double the tail density; the old times stay included."""
        return Schedule(self.head_dt / 2, self.head_end, self.per_octave * 2, self.t_end, self.extra)


def make_schedule(head_dt: float, head_end: float, per_octave: int, t_end: float,
                  extra=()) -> Schedule:
    return Schedule(float(head_dt), float(head_end), int(per_octave), float(t_end),
                    tuple(float(t) for t in extra))


@dataclass
class SnapshotStore:
    """
    Time-ordered divergence-free snapshots on a single grid.

    Snapshots are kept in physical representation. Stores loaded from disk
    hold read-only memory maps, so only the snapshots actually touched are
    paged in.
    """
    grid: Grid
    schedule: dict = field(default_factory=dict)
    times: list[float] = field(default_factory=list)
    fields: list[VelocityField] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t: float, u: VelocityField) -> None:
        if u.grid != self.grid:
            raise GridError("snapshot lives on a different grid than the store")
        if not u.divergence_free:
            raise ScheduleError(f"snapshot at t={t} is not certified divergence-free")
        if not self.times and t != 0.0:
            raise ScheduleError(f"the first snapshot must be the initial data at t=0, got t={t}")
        if self.times and not t > self.times[-1]:
            raise ScheduleError(f"snapshot times must increase, got {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.fields.append(to_physical(u))

    @property
    def t_max(self) -> float:
        return self.times[-1]

    def index_of(self, t: float) -> int:
        """Index of the snapshot at time t; ScheduleError if t is off the grid."""
        times = np.asarray(self.times)
        i = int(np.argmin(np.abs(times - t)))
        if not _same_time(times[i], t):
            raise ScheduleError(f"t={t} is not a snapshot time (nearest {times[i]})")
        return i

    def at(self, t: float) -> VelocityField:
        return self.fields[self.index_of(t)]

    @property
    def initial(self) -> VelocityField:
        return self.fields[0]

    def subsample(self, times) -> "SnapshotStore":
        """Store restricted to the given snapshot times (t=0 is always kept)."""
        wanted = sorted({0.0, *(float(t) for t in times)})
        out = SnapshotStore(self.grid, dict(self.schedule))
        for t in wanted:
            i = self.index_of(t)
            out.times.append(self.times[i])
            out.fields.append(self.fields[i])
        return out

    def save(self, directory: str | os.PathLike) -> Path:
        """
        Write every snapshot as an ANS1 file plus the parquet manifest.

        Args:
            directory: output directory; created if missing.

        Returns: path of the manifest.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, (t, u) in enumerate(zip(self.times, self.fields)):
            name = f"snap_{i:05d}.ans"
            write_snapshot(directory / name, u, t)
            names.append(name)
        table = pa.Table.from_pydict(
            {"index": list(range(len(names))), "t": self.times, "file": names},
            schema=MANIFEST_SCHEMA.with_metadata(
                {"schedule": json.dumps(self.schedule, sort_keys=True)}),
        )
        manifest = directory / MANIFEST_NAME
        pq.write_table(table, manifest)
        logger.info(f"saved {len(names)} snapshots to {directory}")
        return manifest

    @classmethod
    def load(cls, directory: str | os.PathLike, mmap: bool = True) -> "SnapshotStore":
        """Read a store written by save; snapshot data is memory-mapped by default."""
        directory = Path(directory)
        manifest = directory / MANIFEST_NAME
        if not manifest.exists():
            raise SnapshotFormatError(f"no {MANIFEST_NAME} in {directory}")
        table = pq.read_table(manifest)
        metadata = table.schema.metadata or {}
        schedule = json.loads(metadata.get(b"schedule", b"{}"))
        frame = table.to_pandas().sort_values("index")
        store = None
        for t, name in zip(frame["t"], frame["file"]):
            grid, t_file, u = read_snapshot(directory / name, mmap=mmap)
            if not _same_time(t_file, t):
                raise SnapshotFormatError(f"{name} holds t={t_file}, manifest says t={t}")
            if store is None:
                store = cls(grid, schedule)
            store.append(t_file, u)
        if store is None:
            raise SnapshotFormatError(f"manifest in {directory} lists no snapshots")
        return store


def write_snapshot(path: str | os.PathLike, u: VelocityField, t: float) -> None:
    """Write one ANS1 file atomically (temporary file, then rename)."""
    path = Path(path)
    grid = u.grid
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["n"] = (grid.n_h, grid.n_h, grid.n_v)
    header["params"] = (grid.L_h, grid.L_v, t)
    data = np.ascontiguousarray(to_physical(u).data, dtype="<f8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        header.tofile(f)
        data.tofile(f)
    os.replace(tmp, path)


def read_snapshot(path: str | os.PathLike, mmap: bool = False) -> tuple[Grid, float, VelocityField]:
    """
    Read one ANS1 file.

    Args:
        path: the file.
        mmap: memory-map the component blocks instead of reading them.

    Returns: (grid, t, velocity); the velocity is certified divergence-free,
    since only solver snapshots are ever written.
    """
    path = Path(path)
    header = np.fromfile(path, dtype=HEADER_DTYPE, count=1)
    if header.size != 1 or header["magic"][0] != MAGIC:
        raise SnapshotFormatError(f"{path} is not an ANS1 snapshot")
    n1, n2, n_v = (int(n) for n in header["n"][0])
    L_h, L_v, t = (float(x) for x in header["params"][0])
    if n1 != n2:
        raise SnapshotFormatError(f"{path}: horizontal sizes differ ({n1}, {n2})")
    grid = Grid(n1, n_v, L_h, L_v)
    shape = (3, *grid.shape)
    expected = HEADER_DTYPE.itemsize + 8 * int(np.prod(shape))
    if path.stat().st_size != expected:
        raise SnapshotFormatError(
            f"{path} has {path.stat().st_size} bytes, expected {expected}")
    if mmap:
        data = np.memmap(path, dtype="<f8", mode="r", offset=HEADER_DTYPE.itemsize, shape=shape)
    else:
        data = np.fromfile(path, dtype="<f8", offset=HEADER_DTYPE.itemsize).reshape(shape)
    return grid, t, VelocityField(grid, data, "physical", True)

"""Binary grid/gather formats, flat-text configs, history CSVs and PGM renders.

Grid file (``SFWI``), little-endian::

    magic "SFWI" | u32 version=1 | u8 kind | u8 ndim | u32 dims[ndim] | f64 spacing
    | f32 payload[prod(dims)]   (z fastest)

kind: 1 velocity, 2 probability, 3 mask (0.0/1.0), 4 image. The grid origin
is not stored; grids read back with origin 0.

Gather file (``SFWG``), little-endian::

    magic "SFWG" | u32 version=1 | u32 shot_index | u32 nt | u32 n_receivers | u32 ndim
    | f64 dt | f64 source[ndim] | f64 receivers[n_receivers][ndim]
    | f32 payload[nt][n_receivers]   (receiver fastest)
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .acquisition import RickerWavelet, ShotGather, Survey, SurveyGeometry
from .errors import (ConfigurationError, FormatError, IngestionError, InvalidParameterError,
                     TruncationError)
from .grid import GridGeometry, ProbabilityCube, SaltMask, SedimentProfile, VelocityModel
from .inversion import STOP_REASONS, IterationHistory
from .propagation import MigrationImage, PropagatorConfig

GRID_MAGIC = b"SFWI"
GATHER_MAGIC = b"SFWG"
VERSION = 1

KIND_VELOCITY = 1
KIND_PROBABILITY = 2
KIND_MASK = 3
KIND_IMAGE = 4
_KINDS = {VelocityModel: KIND_VELOCITY, ProbabilityCube: KIND_PROBABILITY,
          SaltMask: KIND_MASK, MigrationImage: KIND_IMAGE}

HISTORY_COLUMNS = ("k", "phi_prime", "data_misfit", "reg_term", "grad_norm", "step")


# -- grids -----------------------------------------------------------------

def encode_grid(obj) -> bytes:
    try:
        kind = _KINDS[type(obj)]
    except KeyError:
        raise InvalidParameterError(f"cannot serialize {type(obj).__name__} as a grid") from None
    return pack_grid(kind, obj.geometry.dims, obj.geometry.spacing, obj.values)


def pack_grid(kind: int, dims, spacing: float, values) -> bytes:
    """Header plus float32 payload; no validation of the values themselves."""
    values = np.asarray(values)
    if values.shape != tuple(dims):
        raise InvalidParameterError(f"values shape {values.shape} does not match dims {tuple(dims)}")
    header = struct.pack("<4sIBB", GRID_MAGIC, VERSION, kind, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    header += struct.pack("<d", spacing)
    return header + np.ascontiguousarray(values, dtype="<f4").tobytes(order="C")


def decode_grid(data: bytes, name: str = "<bytes>"):
    fixed = struct.calcsize("<4sIBB")
    if len(data) < fixed:
        raise TruncationError(f"{name}: header truncated ({len(data)} bytes)")
    magic, version, kind, ndim = struct.unpack_from("<4sIBB", data, 0)
    if magic != GRID_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    if kind not in (KIND_VELOCITY, KIND_PROBABILITY, KIND_MASK, KIND_IMAGE):
        raise FormatError(f"{name}: unknown kind byte {kind}")
    if ndim not in (2, 3):
        raise FormatError(f"{name}: bad ndim {ndim}")
    head = fixed + 4 * ndim + 8
    if len(data) < head:
        raise TruncationError(f"{name}: header truncated ({len(data)} bytes)")
    dims = struct.unpack_from(f"<{ndim}I", data, fixed)
    (spacing,) = struct.unpack_from("<d", data, fixed + 4 * ndim)
    n = int(np.prod(dims))
    if len(data) - head < 4 * n:
        raise TruncationError(f"{name}: payload has {len(data) - head} bytes, expected {4 * n}")
    if len(data) - head > 4 * n:
        raise FormatError(f"{name}: {len(data) - head - 4 * n} trailing bytes after payload")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=head).reshape(dims).astype(np.float64)
    geom = GridGeometry(dims, spacing)
    if kind == KIND_VELOCITY:
        return VelocityModel(geom, values)
    if kind == KIND_PROBABILITY:
        if not np.all((values >= 0) & (values <= 1)):
            raise FormatError(f"{name}: probability payload outside [0, 1]")
        return ProbabilityCube(geom, values)
    if kind == KIND_MASK:
        if not np.all((values == 0) | (values == 1)):
            raise FormatError(f"{name}: mask payload must hold only 0.0/1.0")
        return SaltMask(geom, values == 1)
    return MigrationImage(geom, values)


def write_grid(path, obj):
    Path(path).write_bytes(encode_grid(obj))


def read_grid(path, expect=None):
    """Read a grid file; ``expect`` optionally names the required type."""
    obj = decode_grid(Path(path).read_bytes(), str(path))
    if expect is not None and not isinstance(obj, expect):
        raise FormatError(f"{path}: holds a {type(obj).__name__}, expected {expect.__name__}")
    return obj


# -- gathers ---------------------------------------------------------------

_GATHER_HEAD = "<4sIIIIId"


def encode_gather(gather: ShotGather, source, receivers) -> bytes:
    source = np.asarray(source, dtype="<f8").ravel()
    receivers = np.asarray(receivers, dtype="<f8")
    ndim = source.size
    if receivers.shape != (gather.n_receivers, ndim):
        raise InvalidParameterError("receiver positions do not match the gather")
    out = struct.pack(_GATHER_HEAD, GATHER_MAGIC, VERSION, gather.shot_index, gather.nt,
                      gather.n_receivers, ndim, gather.dt)
    out += source.tobytes() + receivers.tobytes()
    return out + np.ascontiguousarray(gather.traces, dtype="<f4").tobytes(order="C")


def decode_gather(data: bytes, name: str = "<bytes>"):
    """Return ``(gather, source_position, receiver_positions)``."""
    head = struct.calcsize(_GATHER_HEAD)
    if len(data) < head:
        raise TruncationError(f"{name}: header truncated ({len(data)} bytes)")
    magic, version, shot, nt, nr, ndim, dt = struct.unpack_from(_GATHER_HEAD, data, 0)
    if magic != GATHER_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}, expected {GATHER_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    if ndim not in (2, 3):
        raise FormatError(f"{name}: bad ndim {ndim}")
    npos = (1 + nr) * ndim
    need = head + 8 * npos + 4 * nt * nr
    if len(data) < need:
        raise TruncationError(f"{name}: file has {len(data)} bytes, header promises {need}")
    if len(data) > need:
        raise FormatError(f"{name}: {len(data) - need} trailing bytes after payload")
    pos = np.frombuffer(data, dtype="<f8", count=npos, offset=head).astype(np.float64)
    traces = np.frombuffer(data, dtype="<f4", count=nt * nr, offset=head + 8 * npos)
    gather = ShotGather(shot, traces.reshape(nt, nr).astype(np.float64), dt)
    return gather, pos[:ndim], pos[ndim:].reshape(nr, ndim)


def write_gather(path, gather, source, receivers):
    Path(path).write_bytes(encode_gather(gather, source, receivers))


def read_gather(path):
    return decode_gather(Path(path).read_bytes(), str(path))


# -- flat key = value configs ---------------------------------------------

def parse_config(text: str, name: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{name}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{name}:{lineno}: empty key")
        if key in out:
            raise ConfigurationError(f"{name}:{lineno}: duplicate key '{key}'")
        out[key] = value
    return out


def read_config(path) -> dict:
    return parse_config(Path(path).read_text(), str(path))


def format_config(items: dict) -> str:
    lines = []
    for key, value in items.items():
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = format_values(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def format_values(values) -> str:
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        return ", ".join(str(int(x)) for x in arr.ravel())
    arr = arr.astype(float)
    if arr.ndim == 2:
        return "; ".join(", ".join(repr(float(x)) for x in row) for row in arr)
    return ", ".join(repr(float(x)) for x in arr.ravel())


_MISSING = object()


class Config:
    """Typed access to a parsed flat config; errors name the offending key."""

    def __init__(self, items: dict, name: str = "<config>", base: Path = None):
        self.items = dict(items)
        self.name = name
        self.base = base

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls(read_config(path), str(path), path.parent)

    def __contains__(self, key):
        return key in self.items

    def _raw(self, key, default):
        if key in self.items:
            return self.items[key]
        if default is _MISSING:
            raise ConfigurationError(f"{self.name}: missing key '{key}'")
        return default

    def _convert(self, key, default, convert, what):
        raw = self._raw(key, default)
        if raw is None or raw is default:
            return raw
        try:
            return convert(raw)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{self.name}: key '{key}' needs {what}, got {raw!r}") from None

    def str(self, key, default=_MISSING):
        return self._raw(key, default)

    def float(self, key, default=_MISSING):
        return self._convert(key, default, float, "a number")

    def int(self, key, default=_MISSING):
        return self._convert(key, default, int, "an integer")

    def bool(self, key, default=_MISSING):
        def convert(raw):
            raw = raw.lower()
            if raw in ("1", "true", "yes", "on"):
                return True
            if raw in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return self._convert(key, default, convert, "a boolean")

    def floats(self, key, default=_MISSING):
        return self._convert(key, default, lambda raw: [float(x) for x in raw.replace(",", " ").split()],
                             "a list of numbers")

    def points(self, key, default=_MISSING):
        def convert(raw):
            return [[float(x) for x in chunk.replace(",", " ").split()]
                    for chunk in raw.split(";") if chunk.strip()]
        return self._convert(key, default, convert, "';'-separated points")

    def path(self, key, default=_MISSING):
        raw = self._raw(key, default)
        if raw is None or raw is default:
            return raw
        p = Path(raw)
        if not p.is_absolute() and self.base is not None:
            p = self.base / p
        return p


# -- profiles --------------------------------------------------------------

def write_profile(path, profile: SedimentProfile):
    lines = ["# depth_m velocity_mps"]
    lines += [f"{d!r} {v!r}" for d, v in zip(profile.depths.tolist(), profile.velocities.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path) -> SedimentProfile:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'depth velocity'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric profile sample") from None
    if not rows:
        raise FormatError(f"{path}: empty profile")
    depths, velocities = zip(*rows)
    return SedimentProfile(depths, velocities)


# -- survey directories ----------------------------------------------------

def gather_name(shot: int) -> str:
    return f"shot_{shot:04d}.sfwg"


def write_survey(directory, survey: Survey, w: RickerWavelet, cfg: PropagatorConfig):
    """Gathers plus an ``acquisition.cfg`` sidecar holding the wavelet and propagator settings."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    geom = survey.geometry
    for g in survey.gathers:
        write_gather(directory / gather_name(g.shot_index), g, geom.sources[g.shot_index], geom.receivers)
    grid = geom.geometry
    sidecar = {
        "dims": list(grid.dims), "spacing": grid.spacing, "origin": list(grid.origin),
        "n_shots": geom.n_shots, "peak_frequency": float(w.peak_frequency), "delay": float(w.delay),
        "amplitude": float(w.amplitude), "dt": float(cfg.dt), "nt": cfg.nt,
        "sponge_width": cfg.sponge_width, "sponge_strength": float(cfg.sponge_strength),
        "cfl_factor": float(cfg.cfl_factor), "position_snapping": "nearest-cell",
    }
    (directory / "acquisition.cfg").write_text(format_config(sidecar))


def read_survey(directory):
    """Return ``(survey, wavelet, propagator_config)`` from a survey directory."""
    directory = Path(directory)
    cfg_path = directory / "acquisition.cfg"
    if not cfg_path.exists():
        raise IngestionError(f"{directory}: missing acquisition.cfg")
    c = Config.load(cfg_path)
    grid = GridGeometry([int(d) for d in c.floats("dims")], c.float("spacing"), c.floats("origin", None))
    n_shots = c.int("n_shots")
    gathers, sources, receivers = [], [], None
    for i in range(n_shots):
        gather, src, rec = read_gather(directory / gather_name(i))
        if gather.shot_index != i:
            raise IngestionError(f"{directory / gather_name(i)}: holds shot {gather.shot_index}")
        if receivers is None:
            receivers = rec
        elif not np.array_equal(receivers, rec):
            raise IngestionError(f"{directory / gather_name(i)}: receiver spread differs from shot 0")
        gathers.append(gather)
        sources.append(src)
    survey = Survey(SurveyGeometry(sources, receivers, grid), tuple(gathers))
    w = RickerWavelet(c.float("peak_frequency"), c.float("dt"), c.int("nt"), c.float("delay"),
                      c.float("amplitude", 1.0))
    cfg = PropagatorConfig(c.int("nt"), c.float("dt"), c.int("sponge_width"), c.float("sponge_strength"),
                           c.float("cfl_factor"))
    return survey, w, cfg


# -- iteration history CSV -------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def history_report(history: IterationHistory, path):
    """Write ``k, phi_prime, data_misfit, reg_term, grad_norm, step`` rows and a stop_reason footer."""
    if not history.records:
        raise InvalidParameterError("history is empty")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in history.records:
            writer.writerow([r.k, _fmt(r.phi_prime), _fmt(r.data_misfit), _fmt(r.reg_term),
                             _fmt(r.grad_norm), _fmt(r.step)])
        writer.writerow(["stop_reason", history.stop_reason or ""])


def read_history_csv(path):
    """Return ``(rows, stop_reason)`` where rows are dicts keyed by column name."""
    with open(path, newline="") as fh:
        table = list(csv.reader(fh))
    if not table or tuple(table[0]) != HISTORY_COLUMNS:
        raise FormatError(f"{path}: missing history header")
    if len(table) < 2 or table[-1][0] != "stop_reason":
        raise FormatError(f"{path}: missing stop_reason footer")
    stop = table[-1][1] if len(table[-1]) > 1 else ""
    if stop and stop not in STOP_REASONS:
        raise FormatError(f"{path}: unknown stop_reason {stop!r}")
    rows = []
    for line in table[1:-1]:
        row = {"k": int(line[0])}
        row.update({name: float(v) for name, v in zip(HISTORY_COLUMNS[1:], line[1:])})
        rows.append(row)
    return rows, stop


# -- PGM rendering ---------------------------------------------------------

def slice_grid(values: np.ndarray, axis: int = None, index: int = None) -> np.ndarray:
    """2-D section with depth along rows when z survives the slice."""
    values = np.asarray(values)
    if axis is None:
        if values.ndim != 2:
            raise InvalidParameterError("3-D grids need an axis and index to render")
        return values.T
    if not 0 <= axis < values.ndim:
        raise InvalidParameterError(f"axis {axis} out of range for a {values.ndim}-D grid")
    if not 0 <= index < values.shape[axis]:
        raise InvalidParameterError(f"index {index} out of range 0..{values.shape[axis] - 1}")
    section = np.take(values, index, axis=axis)
    if section.ndim == 1:
        return section[None, :]
    z_kept = axis != values.ndim - 1
    return section.T if z_kept else section


def to_gray(section: np.ndarray):
    """Linear min-max scaling to 0..255; a constant section maps to 128."""
    lo, hi = float(np.min(section)), float(np.max(section))
    if hi == lo:
        return np.full(section.shape, 128, dtype=np.uint8), lo, hi
    scaled = np.rint((section - lo) / (hi - lo) * 255.0)
    return scaled.astype(np.uint8), lo, hi


def write_pgm(path, pixels: np.ndarray):
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=rows * cols).reshape(rows, cols)


def render(obj, path, axis=None, index=None):
    """Write an 8-bit PGM of a section plus ``<path>.txt`` recording the scaling."""
    section = slice_grid(obj.values.astype(np.float64), axis, index)
    pixels, lo, hi = to_gray(section)
    write_pgm(path, pixels)
    note = {"source_kind": type(obj).__name__, "axis": "none" if axis is None else axis,
            "index": "none" if index is None else index, "min": lo, "max": hi,
            "scaling": "linear" if hi > lo else "degenerate-constant-128"}
    Path(str(path) + ".txt").write_text(format_config(note))
    return pixels


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


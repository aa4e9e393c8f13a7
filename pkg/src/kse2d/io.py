"""
Snapshots, time-series CSV files and initial states.

Snapshot layout (all little-endian)::

    header  64 bytes   magic b"KSE2", uint32 version, uint32 n, f64 L, f64 t,
                       uint32 field count, zero padding
    fields  per field  32-byte NUL padded ASCII name, then n*n f64 values in
                       row-major order of the [i1, i2] array
"""

from __future__ import annotations

import csv
import math
import os
import struct
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .grid import Grid
from .model import State

MAGIC = b"KSE2"
VERSION = 1
HEADER = struct.Struct("<4sIIddI32x")
NAME_BYTES = 32
FIELD_NAMES = ("rho", "c", "omega")

assert HEADER.size == 64


class SnapshotError(OSError):
    pass


def write_snapshot(path: str, state: State) -> None:
    g = state.grid
    fields = state.fields()
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, g.n, float(g.L), float(state.t), len(fields)))
        for name in FIELD_NAMES:
            fh.write(name.encode("ascii").ljust(NAME_BYTES, b"\0"))
            fh.write(np.ascontiguousarray(fields[name], dtype="<f8").tobytes())


def read_snapshot(path: str) -> State:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, n, L, t, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    block = NAME_BYTES + 8 * n * n
    if len(raw) != HEADER.size + count * block:
        raise SnapshotError(f"{path}: size {len(raw)} does not match header (n={n}, fields={count})")
    arrays = {}
    off = HEADER.size
    for _ in range(count):
        name = raw[off : off + NAME_BYTES].rstrip(b"\0").decode("ascii")
        off += NAME_BYTES
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n * n, offset=off).reshape(n, n)
        off += 8 * n * n
    missing = [f for f in FIELD_NAMES if f not in arrays]
    if missing:
        raise SnapshotError(f"{path}: missing fields {missing}")
    try:
        grid = Grid(n, L)
    except ValueError as err:
        raise SnapshotError(f"{path}: {err}") from None
    return State(grid, t, arrays["rho"], arrays["c"], arrays["omega"])


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


class CsvWriter:
    """Streams rows to a CSV file, flushing after each one."""

    def __init__(self, path: str, columns: Sequence[str]):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.columns)

    def write(self, row: Mapping[str, object]) -> None:
        self._w.writerow([_cell(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path: str, rows: Iterable[Mapping[str, object]], columns: Sequence[str]) -> None:
    with CsvWriter(path, columns) as w:
        for row in rows:
            w.write(row)


def _parse_cell(v: str) -> float | str:
    try:
        return float(v)
    except ValueError:
        return v


def read_csv(path: str) -> list[dict[str, float | str]]:
    """Rows as dicts; numeric cells become floats, others stay strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def resample_hat(F: np.ndarray, src: Grid, dst: Grid) -> np.ndarray:
    """Coefficients of ``F`` (on ``src``) restricted or zero-padded onto ``dst``.

    Modes at either grid's Nyquist index are dropped so the result stays
    the coefficient array of a real field.
    """
    if not math.isclose(src.L, dst.L):
        raise ValueError("grids differ in period")
    m = min(src.n, dst.n) // 2
    out = np.zeros(dst.spectral_shape, dtype=complex)
    out[:m, :m] = F[:m, :m]
    out[dst.n - m + 1 :, :m] = F[src.n - m + 1 :, :m]
    return out


def resample_state(state: State, grid: Grid) -> State:
    hats = tuple(resample_hat(h, state.grid, grid) for h in state.spectral())
    return State.from_spectral(grid, state.t, hats)


def l2_distance(a: State, b: State) -> float:
    """Summed L2 norms of the field differences, compared on the coarser grid."""
    g = a.grid if a.grid.n <= b.grid.n else b.grid
    a = resample_state(a, g) if a.grid.n != g.n else a
    b = resample_state(b, g) if b.grid.n != g.n else b
    return float(sum(g.lq_norm(x - y, 2) for x, y in zip(a.fields().values(), b.fields().values())))


# -- initial states --------------------------------------------------------------


def periodic_gaussian(grid: Grid, center: tuple[float, float], width: float, images: int = 3) -> np.ndarray:
    """exp(-|x - x0|^2 / (2 width^2)) summed over periodic images."""
    x1, x2 = grid.mesh
    L = grid.L
    out = np.zeros(grid.shape)
    shifts = range(-images, images + 1)
    g1 = [np.exp(-((x1 - center[0] + a * L) ** 2) / (2 * width**2)) for a in shifts]
    g2 = [np.exp(-((x2 - center[1] + b * L) ** 2) / (2 * width**2)) for b in shifts]
    for a in g1:
        for b in g2:
            out += a * b
    return out


def build_initial_state(config: RunConfig) -> State:
    """Initial (rho, c, omega) for ``config.ic.preset``.

    canonical
        rho = m (1 + a cos k x1 cos k x2), c = A (1 + cos k x1) / 2,
        omega = w sin k x1 sin k x2 with k = 2 pi / L
    bump
        periodic Gaussians of the given width: rho = m + a G,
        c = A G, omega = w (G - mean G)
    heat
        rho and c as for canonical, omega = 0; with ``params.couplings =
        false`` every field evolves by the heat equation alone
    random
        smooth random fields with a seeded spectrum decaying like exp(-|k|^2 / 8)
    snapshot
        read from ``ic.snapshot``; the grid must match ``grid.n`` and ``grid.L``
    """
    ic = config.ic
    grid = Grid(config.grid.n, config.grid.L)
    if ic.preset == "snapshot":
        state = read_snapshot(ic.snapshot)
        if state.grid.n != grid.n or not math.isclose(state.grid.L, grid.L):
            raise ValueError(
                f"snapshot grid (n={state.grid.n}, L={state.grid.L}) does not match config "
                f"(n={grid.n}, L={grid.L})"
            )
        return state
    x1, x2 = grid.mesh
    k = 2 * math.pi / grid.L
    if ic.preset == "canonical":
        rho = ic.rho_mean * (1.0 + ic.rho_amp * np.cos(k * x1) * np.cos(k * x2))
        c = ic.c_amp * (1.0 + np.cos(k * x1)) / 2.0
        om = ic.omega_amp * np.sin(k * x1) * np.sin(k * x2)
    elif ic.preset == "heat":
        rho = ic.rho_mean * (1.0 + ic.rho_amp * np.cos(k * x1) * np.cos(k * x2))
        c = ic.c_amp * (1.0 + np.cos(k * x1)) / 2.0
        om = np.zeros(grid.shape)
    elif ic.preset == "bump":
        center = ic.center if ic.center is not None else (grid.L / 2, grid.L / 2)
        G = periodic_gaussian(grid, center, ic.width)
        rho = ic.rho_mean + ic.rho_amp * G
        c = ic.c_amp * G
        om = ic.omega_amp * (G - G.mean())
    elif ic.preset == "random":
        rng = np.random.default_rng(ic.seed)
        rho = ic.rho_mean + ic.rho_amp * _random_smooth(grid, rng, positive=True)
        c = ic.c_amp * _random_smooth(grid, rng, positive=True)
        om = ic.omega_amp * _random_smooth(grid, rng)
    else:
        raise ValueError(f"unknown preset {ic.preset!r}")
    if rho.min() < 0 or c.min() < 0:
        raise ValueError("initial rho and c must be non-negative")
    return State(grid, 0.0, rho, c, om)


def _random_smooth(grid: Grid, rng: np.random.Generator, positive: bool = False) -> np.ndarray:
    """Zero-mean unit-max field (or a [0, 1] field when ``positive``)."""
    shape = grid.spectral_shape
    F = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-grid.ksq * (grid.L / (2 * math.pi)) ** 2 / 8)
    F[0, 0] = 0.0
    F[grid.nyquist] = 0.0
    f = grid.inverse(F)
    f /= np.abs(f).max()
    if positive:
        f = (f - f.min()) / (f.max() - f.min())
    return f


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path

"""Little-endian binary dumps for fields and solver trajectories.

A field file is a fixed header (magic, dims, spacing, side tag) followed by
the samples as interleaved re/im doubles in C order.  A trajectory file
adds a time index to the header and stores u, n, nt per slice in the same
interleaved encoding, so one reader handles both payload kinds.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import FOURIER, PHYSICAL, Field, SpaceTimeGrid
from .zakharov import SpatialGrid, Trajectory, ZakharovState, _require_real

FIELD_MAGIC = b"TCFIELD1"
TRAJ_MAGIC = b"TCTRAJ01"

# magic, side byte, pad, four dims, lam, tau_step
_FIELD_HEADER = struct.Struct("<8sB3x4q2d")
# magic, three dims, lam, slice count
_TRAJ_HEADER = struct.Struct("<8s3qdq")

_SIDE_TAGS = {PHYSICAL: 0, FOURIER: 1}


def _payload(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<c16").tobytes()


def dump_field(field: Field, path) -> None:
    grid = field.grid
    header = _FIELD_HEADER.pack(
        FIELD_MAGIC, _SIDE_TAGS[field.side],
        *grid.nodes, grid.t_nodes, grid.lam, grid.tau_step)
    Path(path).write_bytes(header + _payload(field.values))


def load_field(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size or raw[:8] != FIELD_MAGIC:
        raise ValueError(f"{path}: not a field dump")
    magic, side_tag, nx, ny, nz, nt, lam, tau_step = \
        _FIELD_HEADER.unpack_from(raw)
    sides = {v: k for k, v in _SIDE_TAGS.items()}
    if side_tag not in sides:
        raise ValueError(f"{path}: unknown side tag {side_tag}")
    grid = SpaceTimeGrid((nx, ny, nz), nt, lam=lam, tau_step=tau_step)
    values = _read_block(raw, _FIELD_HEADER.size, grid.shape, path,
                         expect_end=True)
    return Field(grid, values, sides[side_tag])


def _read_block(raw: bytes, offset: int, shape: tuple, path,
                expect_end: bool = False) -> np.ndarray:
    count = int(np.prod(shape))
    end = offset + 16 * count
    if len(raw) < end:
        raise ValueError(f"{path}: truncated payload")
    if expect_end and len(raw) > end:
        raise ValueError(f"{path}: trailing bytes after payload")
    return np.frombuffer(raw, dtype="<c16", count=count,
                         offset=offset).reshape(shape).copy()


def dump_trajectory(traj: Trajectory, path) -> None:
    grid = traj.grid
    m = len(traj.times)
    parts = [_TRAJ_HEADER.pack(TRAJ_MAGIC, *grid.nodes, grid.lam, m),
             np.asarray(traj.times, dtype="<f8").tobytes()]
    for k in range(m):
        parts.append(_payload(traj.u[k]))
        parts.append(_payload(traj.n[k]))
        parts.append(_payload(traj.nt[k]))
    Path(path).write_bytes(b"".join(parts))


def load_trajectory(path) -> Trajectory:
    raw = Path(path).read_bytes()
    if len(raw) < _TRAJ_HEADER.size or raw[:8] != TRAJ_MAGIC:
        raise ValueError(f"{path}: not a trajectory dump")
    magic, nx, ny, nz, lam, m = _TRAJ_HEADER.unpack_from(raw)
    if m < 1:
        raise ValueError(f"{path}: empty time index")
    grid = SpatialGrid((nx, ny, nz), lam=lam)
    offset = _TRAJ_HEADER.size
    if len(raw) < offset + 8 * m:
        raise ValueError(f"{path}: truncated time index")
    times = np.frombuffer(raw, dtype="<f8", count=m, offset=offset).copy()
    offset += 8 * m
    us, ns, nts = [], [], []
    for k in range(m):
        last = k == m - 1
        u = _read_block(raw, offset, grid.nodes, path)
        offset += 16 * grid.size
        n = _read_block(raw, offset, grid.nodes, path)
        offset += 16 * grid.size
        nt = _read_block(raw, offset, grid.nodes, path,
                         expect_end=last)
        offset += 16 * grid.size
        us.append(u)
        ns.append(_require_real("n", n))
        nts.append(_require_real("nt", nt))
    return Trajectory(grid, times, np.stack(us), np.stack(ns),
                      np.stack(nts))


def state_from_trajectory(traj: Trajectory, index: int = 0) -> ZakharovState:
    """Lift one trajectory slice back into a solver state."""
    return ZakharovState(traj.grid, traj.u[index], traj.n[index],
                         traj.nt[index], t=float(traj.times[index]))


def dump_state(state: ZakharovState, path) -> None:
    """Store a single slice as a one-entry trajectory."""
    one = Trajectory(state.grid, np.array([state.t]),
                     state.u[None], state.n[None], state.nt[None])
    dump_trajectory(one, path)

# -*- coding: utf-8 -*-

DESCRIPTION = """periodic box, Fourier transform conventions, discrete norms and spectral resampling"""

import sys, os, time
from pathlib import Path
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np
from scipy import fft as sp_fft

from util import fft_workers, atomic_write_bytes


SNAPSHOT_MAGIC = b"EDGP"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("n", "<u4", (3,)),
        ("length", "<f8", (3,)),
    ]
)


class NonFiniteFieldError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class SnapshotFormatError(ValueError):
    pass


def _as_triple(value, cast) -> tuple:
    if np.ndim(value) == 0:
        return (cast(value),) * 3
    value = tuple(cast(v) for v in value)
    if len(value) != 3:
        raise ValueError(f"expected three per-axis values, got {len(value)}")
    return value


@dataclass(frozen=True)
class Grid3D:
    """Periodic box [-L_i/2, L_i/2) sampled with n_i points per axis.

    Point j on axis i sits at x_j = -L_i/2 + j*h_i. Wavenumbers are stored in
    standard FFT ordering, xi = 2*pi*k/L_i with k = 0..n/2-1, -n/2..-1.
    """

    n: Tuple[int, int, int]
    length: Tuple[float, float, float]

    def __post_init__(self):
        n = _as_triple(self.n, int)
        length = _as_triple(self.length, float)
        for n_i in n:
            if n_i <= 0 or n_i % 2:
                raise ValueError(f"points per axis must be positive and even, got {n}")
        for L_i in length:
            if not np.isfinite(L_i) or L_i <= 0:
                raise ValueError(f"box lengths must be positive and finite, got {length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)

    @classmethod
    def cubic(cls, n: int = 64, length: float = 16.0) -> "Grid3D":
        return cls(n=(n, n, n), length=(length, length, length))

    @classmethod
    def from_dict(cls, d: dict) -> "Grid3D":
        return cls(n=d.get("n", 64), length=d.get("length", 16.0))

    def to_dict(self) -> dict:
        return {"n": list(self.n), "length": list(self.length)}

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.n

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            -L / 2 + np.arange(n) * h for L, n, h in zip(self.length, self.n, self.spacing)
        )

    @cached_property
    def meshes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (n1,1,1), (1,n2,1), (1,1,n3)"""
        x1, x2, x3 = self.axes
        return (x1[:, None, None], x2[None, :, None], x3[None, None, :])

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full-size coordinate arrays"""
        return tuple(np.broadcast_to(m, self.n) for m in self.meshes)

    @cached_property
    def radius(self) -> np.ndarray:
        x1, x2, x3 = self.meshes
        return np.sqrt(x1**2 + x2**2 + x3**2)

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            2 * np.pi * sp_fft.fftfreq(n, d=1.0 / n) / L for L, n in zip(self.length, self.n)
        )

    @cached_property
    def kmeshes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        k1, k2, k3 = self.wavenumbers
        return (k1[:, None, None], k2[None, :, None], k3[None, None, :])

    @cached_property
    def k_squared(self) -> np.ndarray:
        k1, k2, k3 = self.kmeshes
        return k1**2 + k2**2 + k3**2

    @cached_property
    def nyquist(self) -> Tuple[float, float, float]:
        return tuple(np.pi * n / L for L, n in zip(self.length, self.n))

    @cached_property
    def _parity(self) -> np.ndarray:
        # phase e^{-i xi_k x_0} with x_0 = -L/2 is (-1)^k, and (-1)^k == (-1)^index for even n
        signs = [1.0 - 2.0 * (np.arange(n) % 2) for n in self.n]
        return signs[0][:, None, None] * signs[1][None, :, None] * signs[2][None, None, :]

    def boundary_mask(self, layers: int = 1) -> np.ndarray:
        """True on the outermost `layers` index layers of each face"""
        mask = np.zeros(self.n, dtype=bool)
        for axis, n in enumerate(self.n):
            index = [slice(None)] * 3
            edge = np.zeros(n, dtype=bool)
            edge[:layers] = True
            edge[n - layers :] = True
            index[axis] = edge
            mask[tuple(index)] = True
        return mask


@dataclass
class WaveField:
    """Complex amplitude on a Grid3D, in physical or spectral representation"""

    grid: Grid3D
    values: np.ndarray
    spectral: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.n:
            raise GridMismatchError(
                f"values of shape {values.shape} do not match grid {self.grid.n}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("field contains NaN or Inf values")
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid3D) -> "WaveField":
        return cls(grid, np.zeros(grid.n, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid3D, func: Callable) -> "WaveField":
        """func(x1, x2, x3) evaluated on broadcastable coordinate arrays"""
        values = np.broadcast_to(func(*grid.meshes), grid.n)
        return cls(grid, np.array(values, dtype=np.complex128))

    def copy(self) -> "WaveField":
        return WaveField(self.grid, self.values.copy(), self.spectral)

    def with_values(self, values: np.ndarray) -> "WaveField":
        return WaveField(self.grid, values, self.spectral)

    def check_compatible(self, other: "WaveField") -> None:
        if self.grid != other.grid:
            raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")
        if self.spectral != other.spectral:
            raise GridMismatchError("cannot combine spectral and physical fields")

    def __add__(self, other: "WaveField") -> "WaveField":
        self.check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "WaveField") -> "WaveField":
        self.check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar) -> "WaveField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def _require_physical(f: WaveField) -> None:
    if f.spectral:
        raise ValueError("expected a physical-space field")


def fft3(values: np.ndarray, grid: Grid3D) -> np.ndarray:
    """Continuum-normalized transform F(f)(xi) ~ integral f(x) e^{-i x.xi} dx"""
    return grid.cell_volume * grid._parity * sp_fft.fftn(values, workers=fft_workers())


def ifft3(values: np.ndarray, grid: Grid3D) -> np.ndarray:
    """Inverse of fft3, f(x) ~ (2 pi)^-3 integral F(xi) e^{i x.xi} dxi"""
    return sp_fft.ifftn(values * grid._parity, workers=fft_workers()) / grid.cell_volume


def spectral_integral(values: np.ndarray, grid: Grid3D) -> float:
    """(2 pi)^-3 times the rectangle-rule integral over the wavenumber table"""
    return float(np.real(np.sum(values))) / grid.volume


def forward_transform(f: WaveField) -> WaveField:
    _require_physical(f)
    return WaveField(f.grid, fft3(f.values, f.grid), spectral=True)


def inverse_transform(g: WaveField) -> WaveField:
    if not g.spectral:
        raise ValueError("expected a spectral field")
    return WaveField(g.grid, ifft3(g.values, g.grid), spectral=False)


def norm_lp(f: WaveField, p: float) -> float:
    """Discrete L^p norm, (h1 h2 h3 sum |f|^p)^(1/p); p = inf gives max |f|"""
    if p < 1:
        raise ValueError(f"L^p norms need p >= 1, got {p}")
    _require_physical(f)
    absf = np.abs(f.values)
    if np.isinf(p):
        return float(absf.max(initial=0.0))
    return float(f.grid.cell_volume * np.sum(absf**p)) ** (1.0 / p)


def mass(f: WaveField) -> float:
    _require_physical(f)
    return float(f.grid.cell_volume * np.sum(np.abs(f.values) ** 2))


def gradient_norm_sq(f: WaveField) -> float:
    """A(f) = ||grad f||_2^2 in Parseval form"""
    F = f.values if f.spectral else fft3(f.values, f.grid)
    return spectral_integral(f.grid.k_squared * np.abs(F) ** 2, f.grid)


def inner_product(f: WaveField, g: WaveField) -> complex:
    """<f, g> = h1 h2 h3 sum f conj(g)"""
    f.check_compatible(g)
    _require_physical(f)
    return complex(f.grid.cell_volume * np.vdot(g.values, f.values))


def h1_norm(f: WaveField) -> float:
    return float(np.sqrt(mass(f) + gradient_norm_sq(f)))


def laplacian(f: WaveField) -> WaveField:
    _require_physical(f)
    grid = f.grid
    return WaveField(grid, ifft3(-grid.k_squared * fft3(f.values, grid), grid))


def translate(f: WaveField, shift: Sequence[float]) -> WaveField:
    """Exact Fourier shift, returns f(x - shift) on the periodic box"""
    _require_physical(f)
    grid = f.grid
    k1, k2, k3 = grid.kmeshes
    phase = np.exp(-1j * (k1 * shift[0] + k2 * shift[1] + k3 * shift[2]))
    return WaveField(grid, ifft3(phase * fft3(f.values, grid), grid))


def center_of_mass(f: WaveField) -> np.ndarray:
    _require_physical(f)
    density = f.density
    total = density.sum()
    if total == 0:
        return np.zeros(3)
    return np.array([float(np.sum(m * density) / total) for m in f.grid.meshes])


def boundary_mass_fraction(f: WaveField, layers: int = 1) -> float:
    _require_physical(f)
    density = f.density
    total = density.sum()
    if total == 0:
        return 0.0
    return float(density[f.grid.boundary_mask(layers)].sum() / total)


def random_smooth_field(
    grid: Grid3D,
    rng: np.random.Generator,
    envelope: float = 2.0,
    cutoff: Optional[float] = None,
) -> WaveField:
    """Seeded complex test field: band-limited noise times a Gaussian envelope"""
    if cutoff is None:
        cutoff = 0.25 * min(grid.nyquist)
    noise = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
    filtered = sp_fft.ifftn(
        sp_fft.fftn(noise, workers=fft_workers()) * np.exp(-grid.k_squared / (2 * cutoff**2)),
        workers=fft_workers(),
    )
    values = filtered * np.exp(-(grid.radius**2) / (2 * envelope**2))
    values /= np.abs(values).max()
    return WaveField(grid, values)


def _interpolation_matrix(grid: Grid3D, axis: int, points: np.ndarray) -> np.ndarray:
    """M[j, k] so that sum_k M[j, k] fft(f)[k] is the trigonometric interpolant at points[j]"""
    n = grid.n[axis]
    xi = grid.wavenumbers[axis]
    offset = np.asarray(points, dtype=float)[:, None] - grid.axes[axis][0]
    M = np.exp(1j * offset * xi[None, :]) / n
    # Nyquist mode split symmetrically so real data stays real
    M[:, n // 2] = np.cos(offset[:, 0] * xi[n // 2]) / n
    inside = (points >= -grid.length[axis] / 2) & (points < grid.length[axis] / 2)
    M[~inside, :] = 0.0
    return M


def sample_axis(values: np.ndarray, grid: Grid3D, axis: int, points: np.ndarray) -> np.ndarray:
    """Replace coordinate x_axis[j] by points[j]: out[.., j, ..] = f(.., points[j], ..).

    Points outside the box evaluate to zero (fields are assumed to have decayed).
    """
    points = np.asarray(points, dtype=float)
    if points.shape != (grid.n[axis],):
        raise ValueError(f"need {grid.n[axis]} sample points along axis {axis}")
    F = sp_fft.fft(values, axis=axis, workers=fft_workers())
    M = _interpolation_matrix(grid, axis, points)
    out = np.tensordot(F, M, axes=([axis], [1]))
    return np.moveaxis(out, -1, axis)


def shear(values: np.ndarray, grid: Grid3D, axis: int, along: int, factor: float) -> np.ndarray:
    """f(x) -> f(x - factor * x_along * e_axis), a row-wise Fourier shift"""
    xi = grid.wavenumbers[axis]
    n = grid.n[axis]
    shape = [1, 1, 1]
    shape[axis] = n
    kshape = tuple(shape)
    shape = [1, 1, 1]
    shape[along] = grid.n[along]
    rows = grid.axes[along].reshape(shape)
    shifts = factor * rows
    phase = np.exp(-1j * xi.reshape(kshape) * shifts)
    nyq = [slice(None)] * 3
    nyq[axis] = slice(n // 2, n // 2 + 1)
    phase[tuple(nyq)] = np.cos(xi[n // 2] * shifts)
    F = sp_fft.fft(values, axis=axis, workers=fft_workers())
    return sp_fft.ifft(F * phase, axis=axis, workers=fft_workers())


def rotate_in_plane(values: np.ndarray, grid: Grid3D, axes: Tuple[int, int], angle: float) -> np.ndarray:
    """Rotate the field by `angle` in the (axes[0], axes[1]) plane with three shears.

    Needs equal spacing on the two axes; accurate for |angle| <= pi/4 when the
    field is well inside the box.
    """
    a, b = axes
    if grid.n[a] != grid.n[b] or grid.length[a] != grid.length[b]:
        raise GridMismatchError("in-plane rotation needs a square cross-section")
    t = np.tan(angle / 2)
    out = shear(values, grid, a, b, -t)
    out = shear(out, grid, b, a, np.sin(angle))
    return shear(out, grid, a, b, -t)


def quarter_turn(values: np.ndarray, grid: Grid3D, axes: Tuple[int, int], k: int = 1) -> np.ndarray:
    """Exact rotation by k*pi/2 on the index lattice (x_j -> -x_j maps j -> (n - j) mod n)"""
    a, b = axes
    if grid.n[a] != grid.n[b] or grid.length[a] != grid.length[b]:
        raise GridMismatchError("quarter turns need a square cross-section")
    out = values
    for _ in range(k % 4):
        # (x_a, x_b) -> (-x_b, x_a)
        out = np.swapaxes(out, a, b)
        out = reflect_index(out, a)
    return out


def reflect_index(values: np.ndarray, axis: int) -> np.ndarray:
    """f(x) -> f(-x_axis) exactly, using j -> (n - j) mod n"""
    n = values.shape[axis]
    return np.take(values, (-np.arange(n)) % n, axis=axis)


def write_snapshot(path: Union[str, Path], f: WaveField) -> Path:
    """Binary snapshot: header, then interleaved little-endian (re, im) f64 in x-fastest order"""
    _require_physical(f)
    header = np.zeros((), dtype=SNAPSHOT_HEADER)
    header["magic"] = SNAPSHOT_MAGIC
    header["version"] = SNAPSHOT_VERSION
    header["n"] = f.grid.n
    header["length"] = f.grid.length
    data = f.values.ravel(order="F").astype("<c16")
    return atomic_write_bytes(path, header.tobytes() + data.tobytes())


def read_snapshot(path: Union[str, Path]) -> WaveField:
    raw = Path(path).read_bytes()
    if len(raw) < SNAPSHOT_HEADER.itemsize:
        raise SnapshotFormatError(f"{path}: file too short for a snapshot header")
    header = np.frombuffer(raw[: SNAPSHOT_HEADER.itemsize], dtype=SNAPSHOT_HEADER)[0]
    if header["magic"] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {header['magic']!r}")
    if int(header["version"]) != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {int(header['version'])}")
    grid = Grid3D(n=tuple(int(v) for v in header["n"]), length=tuple(float(v) for v in header["length"]))
    expected = int(np.prod(grid.n)) * 16
    payload = raw[SNAPSHOT_HEADER.itemsize :]
    if len(payload) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<c16").reshape(grid.n, order="F")
    return WaveField(grid, values.astype(np.complex128))

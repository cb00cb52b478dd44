"""Seeded Gaussian randomness and its mollified versions.

Every stochastic experiment in the package draws from a counter-based
Philox stream keyed by (seed, stream_id), so a realization depends only on
its own key and not on how many other realizations ran before it.  A
NoiseRealization is the tableau of mode increments shared by all solvers;
mollification happens either per Fourier mode (a multiplier on the mode
index) or by periodic convolution on a grid.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .basis import TrigBasis, evaluation_matrix, wavenumbers
from .errors import DimensionMismatchError

__all__ = [
    "RngStream",
    "NoiseRealization",
    "Mollifier",
    "draw_gaussian_matrix",
    "white_noise_field",
    "mollify_spectral",
    "mollify_convolution",
    "gaussian_c0",
    "gaussian_c0_quadrature",
    "save_noise",
    "load_noise",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """One reproducible random stream, keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass
class NoiseRealization:
    """Tableau of independent N(0, dt) mode increments, [n_time x modes].

    Column j belongs to basis mode chi_j; summing a column reconstructs the
    scalar Brownian path beta_j at the step times.
    """

    increments: np.ndarray
    dt: float

    def __post_init__(self):
        self.increments = np.atleast_2d(np.asarray(self.increments, dtype=float))
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def n_time(self) -> int:
        return self.increments.shape[0]

    @property
    def modes(self) -> int:
        return self.increments.shape[1]

    def truncate(self, modes: int) -> "NoiseRealization":
        """Keep the first ``modes`` columns (same Brownian paths, fewer modes)."""
        if modes > self.modes:
            raise DimensionMismatchError(
                f"cannot truncate {self.modes} modes to {modes}"
            )
        return NoiseRealization(self.increments[:, :modes].copy(), self.dt)

    def coarsen_time(self, factor: int) -> "NoiseRealization":
        """Aggregate blocks of ``factor`` consecutive increments.

        The result is the same Brownian motion sampled with step factor*dt,
        which is what couples runs of different time resolutions to one
        underlying noise path.
        """
        if factor < 1 or self.n_time % factor != 0:
            raise DimensionMismatchError(
                f"{self.n_time} steps do not split into blocks of {factor}"
            )
        blocks = self.increments.reshape(self.n_time // factor, factor, self.modes)
        return NoiseRealization(blocks.sum(axis=1), self.dt * factor)


def draw_gaussian_matrix(
    stream: RngStream, n_time: int, j_modes: int, dt: float
) -> NoiseRealization:
    """i.i.d. N(0, dt) increment tableau, a pure function of the stream."""
    if n_time < 1 or j_modes < 1:
        raise ValueError(f"need n_time >= 1 and j_modes >= 1, got {n_time}, {j_modes}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = stream.generator()
    return NoiseRealization(g.normal(0.0, math.sqrt(dt), size=(n_time, j_modes)), dt)


def white_noise_field(
    realization: NoiseRealization, basis: TrigBasis, grid: np.ndarray | None = None
) -> np.ndarray:
    """Truncated white-noise expansion evaluated at grid nodes per time step.

    Returns [n_time x m] samples of sum_j xi_j(t) chi_j(x) / dt; multiplying
    by dt inside a solver recovers the increment field Delta W.
    """
    if basis.n_modes != realization.modes:
        raise DimensionMismatchError(
            f"basis has {basis.n_modes} modes, realization has {realization.modes}"
        )
    if grid is None:
        eval_matrix = evaluation_matrix(basis.n_modes, basis.grid)
    else:
        eval_matrix = evaluation_matrix(basis.n_modes, np.asarray(grid, dtype=float))
    return (realization.increments @ eval_matrix.T) / realization.dt


@dataclass(frozen=True)
class Mollifier:
    """Even smoothing kernel with scale kappa and phi(0) = 1.

    kind "bump": the compactly supported profile exp(1 - 1/(1 - u^2)) on
    (-1, 1), rescaled so that phi(u) vanishes exactly for |u| >= 1/kappa.
    kind "gaussian": profile exp(-u^2/2), i.e. the heat kernel of width
    kappa once normalized to unit mass.
    """

    kind: str
    kappa: float

    def __post_init__(self):
        if self.kind not in ("bump", "gaussian"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    def profile(self, u) -> np.ndarray:
        """Base profile at scale 1, normalized to profile(0) = 1."""
        u = np.asarray(u, dtype=float)
        if self.kind == "bump":
            out = np.zeros_like(u)
            inside = np.abs(u) < 1.0
            ui = u[inside]
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
            return out
        return np.exp(-0.5 * u * u)

    def __call__(self, u) -> np.ndarray:
        """Scaled profile phi(kappa * u); this is the mode multiplier."""
        return self.profile(self.kappa * np.asarray(u, dtype=float))

    @property
    def profile_support(self) -> float:
        """Half-width of the base profile (inf for the Gaussian)."""
        return 1.0 if self.kind == "bump" else math.inf

    def kernel_width(self) -> float:
        """Effective half-width of the physical-space kernel."""
        return self.kappa if self.kind == "bump" else 4.0 * self.kappa

    def kernel(self, x) -> np.ndarray:
        """Unnormalized physical-space kernel of width kappa."""
        return self.profile(np.asarray(x, dtype=float) / self.kappa)


def mollify_spectral(
    realization: NoiseRealization, phi: Mollifier
) -> NoiseRealization:
    """Multiply mode k by phi(kappa * n_k), n_k the integer wavenumber.

    Mode 0 is untouched because phi(0) = 1; for the bump kernel every mode
    with wavenumber >= 1/kappa is removed outright.
    """
    mult = phi(wavenumbers(realization.modes))
    return NoiseRealization(realization.increments * mult, realization.dt)


def mollify_convolution(
    field: np.ndarray, phi: Mollifier, grid: np.ndarray
) -> np.ndarray:
    """Discrete periodic convolution with the unit-mass kernel of ``phi``.

    ``grid`` must be uniform; the field is extended periodically and the
    kernel is renormalized on the grid so constants pass through unchanged.
    """
    grid = np.asarray(grid, dtype=float)
    field = np.asarray(field, dtype=float)
    m = grid.size
    if m < 2:
        raise ValueError("grid needs at least two points")
    dx = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), dx):
        raise ValueError("mollify_convolution requires a uniform grid")
    length = m * dx
    if 2.0 * phi.kernel_width() > length:
        raise ValueError(
            f"kernel support {2 * phi.kernel_width():g} exceeds domain length {length:g}"
        )
    if field.shape[-1] != m:
        raise DimensionMismatchError(
            f"field has {field.shape[-1]} columns, grid has {m} points"
        )
    # Signed periodic distances from the first node.
    offsets = (np.arange(m) * dx + length / 2.0) % length - length / 2.0
    kernel = phi.kernel(offsets)
    kernel /= kernel.sum() * dx
    out = np.fft.irfft(
        np.fft.rfft(field, axis=-1) * np.fft.rfft(kernel), n=m, axis=-1
    )
    return out * dx


def gaussian_c0(k: float) -> float:
    """Zero-lag covariance of noise mollified by the width-k heat kernel."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    return 0.5 / (k * math.sqrt(math.pi))


def gaussian_c0_quadrature(k: float, half_width: float | None = None) -> float:
    """Cross-check of gaussian_c0 by quadrature of the squared kernel."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if half_width is None:
        half_width = 8.0 * k

    def integrand(u):
        g = math.exp(-(u * u) / (2.0 * k * k)) / math.sqrt(2.0 * math.pi * k * k)
        return g * g

    value, _ = integrate.quad(integrand, -half_width, half_width)
    return value


_BINARY_HEADER = struct.Struct("<dqq")


def save_noise(path, realization: NoiseRealization) -> None:
    """Dump a tableau; '.csv' writes text, anything else flat binary.

    Both formats carry the (dt, modes, n_time) header followed by the
    row-major increments and round-trip bit-for-bit.
    """
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dt", "modes", "n_time"])
            writer.writerow(
                [
                    format(realization.dt, ".17g"),
                    realization.modes,
                    realization.n_time,
                ]
            )
            for row in realization.increments:
                writer.writerow([format(v, ".17g") for v in row])
    else:
        with open(path, "wb") as fh:
            fh.write(
                _BINARY_HEADER.pack(
                    realization.dt, realization.modes, realization.n_time
                )
            )
            fh.write(np.ascontiguousarray(realization.increments).tobytes())


def load_noise(path) -> NoiseRealization:
    """Inverse of save_noise."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["dt", "modes", "n_time"]:
                raise ValueError(f"unrecognized noise header {header!r} in {path}")
            dt_s, modes_s, n_time_s = next(reader)
            dt, modes, n_time = float(dt_s), int(modes_s), int(n_time_s)
            data = np.array([[float(v) for v in row] for row in reader])
    else:
        raw = Path(path).read_bytes()
        dt, modes, n_time = _BINARY_HEADER.unpack_from(raw)
        data = np.frombuffer(raw, dtype=float, offset=_BINARY_HEADER.size).reshape(
            n_time, modes
        )
        data = data.copy()
    if data.shape != (n_time, modes):
        raise ValueError(
            f"noise file {path} announces {n_time}x{modes} but holds {data.shape}"
        )
    return NoiseRealization(data, dt)

"""Real trigonometric basis on the periodic unit interval.

The basis is orthonormal in L2([0,1]) and ordered by wavenumber,

    chi_0 = 1,
    chi_{2n-1}(x) = sqrt(2) cos(2 pi n x),
    chi_{2n}(x)   = sqrt(2) sin(2 pi n x),

so mode j carries integer wavenumber (j+1)//2 and the Laplacian acts
diagonally with eigenvalue -(2 pi n)^2.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError

_SQRT2 = np.sqrt(2.0)


def wavenumbers(n_modes: int) -> np.ndarray:
    """Integer wavenumber of each basis mode: 0, 1, 1, 2, 2, ..."""
    j = np.arange(n_modes)
    return (j + 1) // 2


def laplacian_eigenvalues(n_modes: int) -> np.ndarray:
    """Eigenvalues lambda_j >= 0 of minus the periodic Laplacian."""
    return (2.0 * np.pi * wavenumbers(n_modes)) ** 2


def evaluation_matrix(n_modes: int, x: np.ndarray) -> np.ndarray:
    """Matrix B with B[i, j] = chi_j(x[i])."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n_modes))
    out[:, 0] = 1.0
    for j in range(1, n_modes):
        n = (j + 1) // 2
        angle = 2.0 * np.pi * n * x
        out[:, j] = _SQRT2 * (np.cos(angle) if j % 2 == 1 else np.sin(angle))
    return out


class TrigBasis:
    """First ``n_modes`` modes of the orthonormal real Fourier basis.

    Transforms between coefficient space and point values on the uniform
    periodic grid x_i = i/m.  Projection uses the rectangle rule, which is
    exact for trigonometric polynomials whenever m exceeds the sum of the
    wavenumbers involved; the default grid of 2J points therefore both
    dealiasess quadratic products and makes grid -> coefficient -> grid a
    round trip for band-limited fields.
    """

    def __init__(self, n_modes: int, grid_points: int | None = None):
        if n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {n_modes}")
        self.n_modes = n_modes
        self.grid_points = 2 * n_modes if grid_points is None else grid_points
        if self.grid_points <= 2 * (n_modes // 2):
            raise ValueError(
                f"{self.grid_points} grid points cannot resolve {n_modes} modes"
            )
        self.grid = np.arange(self.grid_points) / self.grid_points
        self.wavenumbers = wavenumbers(n_modes)
        self.eigenvalues = laplacian_eigenvalues(n_modes)
        self._eval = evaluation_matrix(n_modes, self.grid)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Point values on the grid; accepts stacked coefficients [..., J]."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n_modes:
            raise DimensionMismatchError(
                f"expected {self.n_modes} coefficients, got {coeffs.shape[-1]}"
            )
        return coeffs @ self._eval.T

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        """L2 projection of grid values onto the basis, [..., m] -> [..., J]."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.grid_points:
            raise DimensionMismatchError(
                f"expected {self.grid_points} grid values, got {values.shape[-1]}"
            )
        return values @ (self._eval / self.grid_points)

    def evaluate(self, coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Evaluate the expansion at arbitrary points."""
        return np.asarray(coeffs, dtype=float) @ evaluation_matrix(self.n_modes, x).T

    def squared_sum_on_grid(self) -> np.ndarray:
        """sum_j chi_j(x_i)^2, the local variance rate of the truncated noise."""
        return np.sum(self._eval**2, axis=1)

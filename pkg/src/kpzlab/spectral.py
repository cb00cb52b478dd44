"""Spectral-Galerkin time steppers for semilinear SPDEs on [0, 1].

All schemes march dX = [A X + F(X)] dt + G(X) dW with a diagonal operator
A on the periodic trigonometric basis.  States are coefficient vectors;
nonlinear and multiplicative terms are evaluated pseudo-spectrally on a
dealiased grid of 2J points and projected back.  Every function accepts
stacked states [..., J], so a Monte Carlo ensemble steps as one array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla

from .basis import TrigBasis
from .errors import (
    DimensionMismatchError,
    UnsupportedOperatorError,
)
from .noise import NoiseRealization, RngStream, draw_gaussian_matrix

__all__ = [
    "SpectralOperator",
    "SpectralField",
    "MultiplicativeDiffusion",
    "PointwiseDiffusion",
    "SemilinearProblem",
    "heat_problem",
    "step_euler_galerkin",
    "step_lord_rougemont",
    "step_milstein",
    "FdEulerMaruyama",
    "integrate",
    "Trajectory",
    "mc_error_norm",
    "refinement_study",
    "RefinementRow",
]


@dataclass(frozen=True)
class SpectralOperator:
    """Diagonal dissipative operator: eigenvalues of -A plus a viscosity."""

    eigenvalues: np.ndarray
    nu: float

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", ev)
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if ev[0] != 0.0:
            raise ValueError("the constant mode must have eigenvalue 0")
        if np.any(np.diff((ev[1::2] if ev.size > 1 else ev)) < 0):
            raise ValueError("eigenvalues must be nondecreasing in wavenumber")


@dataclass
class SpectralField:
    """Coefficient vector of a field on the first J basis modes."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    @property
    def basis_size(self) -> int:
        return self.coeffs.shape[-1]


class MultiplicativeDiffusion:
    """G(u) = lam * u applied pointwise; G'(u)G(u) = lam^2 * u."""

    def __init__(self, lam: float):
        self.lam = lam

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.lam * u

    def milstein_product(self, u: np.ndarray) -> np.ndarray:
        return (self.lam**2) * u


class PointwiseDiffusion:
    """G acting through a scalar function g(u); g'(u) g(u) optional.

    Without the derivative the Milstein correction is unavailable and
    step_milstein refuses the operator.
    """

    def __init__(self, g: Callable, gprime_times_g: Callable | None = None):
        self._g = g
        self._gg = gprime_times_g

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self._g(u)

    def milstein_product(self, u: np.ndarray) -> np.ndarray:
        if self._gg is None:
            raise UnsupportedOperatorError(
                "Milstein needs G'(u)G(u); provide gprime_times_g"
            )
        return self._gg(u)


@dataclass
class SemilinearProblem:
    """Problem data for dX = [A X + F(X)] dt + G(X) dW.

    drift maps (t, grid values) -> grid values; diffusion is applied
    pointwise on grid values.  Either may be None (absent term).
    """

    operator: SpectralOperator
    drift: Callable | None = None
    diffusion: MultiplicativeDiffusion | PointwiseDiffusion | None = None

    @property
    def lam(self) -> float:
        if isinstance(self.diffusion, MultiplicativeDiffusion):
            return self.diffusion.lam
        return 0.0 if self.diffusion is None else float("nan")


def heat_problem(basis: TrigBasis, nu: float = 1.0, lam: float = 1.0) -> SemilinearProblem:
    """The stochastic heat equation with multiplicative noise: F = 0, G = lam X."""
    op = SpectralOperator(basis.eigenvalues, nu)
    return SemilinearProblem(op, drift=None, diffusion=MultiplicativeDiffusion(lam))


def _check_sizes(basis: TrigBasis, y: np.ndarray, dw: np.ndarray) -> None:
    if y.shape[-1] != basis.n_modes or dw.shape[-1] != basis.n_modes:
        raise DimensionMismatchError(
            f"state/noise must carry {basis.n_modes} modes, "
            f"got {y.shape[-1]} and {dw.shape[-1]}"
        )


def _explicit_terms(
    problem: SemilinearProblem,
    basis: TrigBasis,
    y: np.ndarray,
    dw: np.ndarray,
    dt: float,
    t: float,
    milstein: bool,
) -> np.ndarray:
    """y + F dt + (G(y) dW)_J (+ Milstein correction), in coefficient space."""
    out = y
    needs_grid = problem.drift is not None or problem.diffusion is not None
    if not needs_grid:
        return out
    u = basis.to_grid(y)
    if problem.drift is not None:
        out = out + dt * basis.to_coeffs(problem.drift(t, u))
    if problem.diffusion is not None:
        w = basis.to_grid(dw)
        gw = problem.diffusion.apply(u) * w
        if milstein:
            # Iterated-integral term, pointwise in x; the closed form and its
            # unit mode weights are pinned by scripts/pin_milstein_correction.py.
            q = basis.squared_sum_on_grid()
            gw = gw + problem.diffusion.milstein_product(u) * 0.5 * (w * w - dt * q)
        out = out + basis.to_coeffs(gw)
    return out


def step_euler_galerkin(
    problem: SemilinearProblem,
    basis: TrigBasis,
    y: np.ndarray,
    dw: np.ndarray,
    dt: float,
    t: float = 0.0,
) -> np.ndarray:
    """Semi-implicit Euler-Galerkin update with a diagonal implicit solve."""
    y = np.asarray(y, dtype=float)
    dw = np.asarray(dw, dtype=float)
    _check_sizes(basis, y, dw)
    rhs = _explicit_terms(problem, basis, y, dw, dt, t, milstein=False)
    return rhs / (1.0 + dt * problem.operator.nu * problem.operator.eigenvalues)


def step_lord_rougemont(
    problem: SemilinearProblem,
    basis: TrigBasis,
    y: np.ndarray,
    dw: np.ndarray,
    dt: float,
    t: float = 0.0,
) -> np.ndarray:
    """Exponential-Euler update: semigroup applied to the explicit terms."""
    y = np.asarray(y, dtype=float)
    dw = np.asarray(dw, dtype=float)
    _check_sizes(basis, y, dw)
    rhs = _explicit_terms(problem, basis, y, dw, dt, t, milstein=False)
    return np.exp(-dt * problem.operator.nu * problem.operator.eigenvalues) * rhs


def step_milstein(
    problem: SemilinearProblem,
    basis: TrigBasis,
    y: np.ndarray,
    dw: np.ndarray,
    dt: float,
    t: float = 0.0,
) -> np.ndarray:
    """Exponential-Euler update plus the Milstein iterated-integral term."""
    y = np.asarray(y, dtype=float)
    dw = np.asarray(dw, dtype=float)
    _check_sizes(basis, y, dw)
    rhs = _explicit_terms(problem, basis, y, dw, dt, t, milstein=True)
    return np.exp(-dt * problem.operator.nu * problem.operator.eigenvalues) * rhs


_STEPPERS = {
    "euler_galerkin": step_euler_galerkin,
    "lord_rougemont": step_lord_rougemont,
    "milstein": step_milstein,
}


class FdEulerMaruyama:
    """Semi-implicit Euler-Maruyama on a uniform finite-difference grid.

    The centered second difference enters with the sign that makes it
    positive definite, so (I + dt nu A_D)^{-1} damps.  Periodic grids use
    the m nodes i/m; the Dirichlet variant keeps the m-1 interior nodes of
    [0, 1] with zero boundary values.
    """

    def __init__(self, m: int, nu: float, dt: float, bc: str = "periodic"):
        if bc not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown boundary condition {bc!r}")
        if m < 3:
            raise ValueError("need at least 3 grid points")
        self.m = m
        self.nu = nu
        self.dt = dt
        self.bc = bc
        self.dx = 1.0 / m
        if bc == "periodic":
            self.grid = np.arange(m) / m
            n = m
        else:
            self.grid = np.arange(1, m) / m
            n = m - 1
        a_d = np.zeros((n, n))
        idx = np.arange(n)
        a_d[idx, idx] = 2.0
        a_d[idx[:-1], idx[:-1] + 1] = -1.0
        a_d[idx[1:], idx[1:] - 1] = -1.0
        if bc == "periodic":
            a_d[0, -1] = -1.0
            a_d[-1, 0] = -1.0
        a_d /= self.dx**2
        self._lu = sla.lu_factor(np.eye(n) + dt * nu * a_d)

    def step(
        self,
        problem: SemilinearProblem,
        y: np.ndarray,
        dw: np.ndarray,
        t: float = 0.0,
    ) -> np.ndarray:
        """One update of nodal values y with nodal noise increments dw."""
        y = np.asarray(y, dtype=float)
        rhs = y.copy()
        if problem.drift is not None:
            rhs += self.dt * problem.drift(t, y)
        if problem.diffusion is not None:
            rhs += problem.diffusion.apply(y) * np.asarray(dw, dtype=float)
        return sla.lu_solve(self._lu, rhs.T).T


@dataclass
class Trajectory:
    """States at every step of one integration, coefficients stacked in time."""

    times: np.ndarray
    coeffs: np.ndarray  # [n_steps + 1, ..., J]

    def final(self) -> np.ndarray:
        return self.coeffs[-1]


def integrate(
    problem: SemilinearProblem,
    basis: TrigBasis,
    scheme: str,
    initial: np.ndarray | SpectralField,
    noise: NoiseRealization,
) -> Trajectory:
    """March the full tableau; deterministic given the noise realization.

    ``initial`` may be stacked [R, J] to drive R realizations at once, in
    which case ``noise.increments`` must be [n_time, R, J] or broadcastable.
    """
    if isinstance(initial, SpectralField):
        initial = initial.coeffs
    y = np.asarray(initial, dtype=float)
    if y.shape[-1] != noise.modes and noise.increments.ndim == 2:
        raise DimensionMismatchError(
            f"initial state has {y.shape[-1]} modes, noise has {noise.modes}"
        )
    stepper = _STEPPERS[scheme]
    dt = noise.dt
    states = np.empty((noise.n_time + 1,) + y.shape)
    states[0] = y
    for n in range(noise.n_time):
        y = stepper(problem, basis, y, noise.increments[n], dt, t=n * dt)
        states[n + 1] = y
    times = dt * np.arange(noise.n_time + 1)
    return Trajectory(times, states)


def mc_error_norm(field_a: np.ndarray, field_b: np.ndarray) -> float:
    """sqrt of the realization-mean of int_0^1 |a - b|^2 dx.

    Inputs are [realizations x grid] samples on matching uniform periodic
    grids; the integral uses the rectangle rule, which is the trapezoid
    rule for periodic data.
    """
    a = np.atleast_2d(np.asarray(field_a, dtype=float))
    b = np.atleast_2d(np.asarray(field_b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mismatched ensembles {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty realization set")
    sq = np.mean((a - b) ** 2, axis=1)  # = int |a-b|^2 dx on x_i = i/m
    return float(np.sqrt(np.mean(sq)))


@dataclass
class RefinementRow:
    j_coarse: int
    j_fine: int
    dt: float
    error: float


def refinement_study(
    problem_factory: Callable[[TrigBasis], SemilinearProblem],
    scheme: str,
    j_list: Sequence[int],
    realizations: int,
    seed: int,
    final_time: float = 1.0,
    initial: Callable[[TrigBasis], np.ndarray] | None = None,
    steps_per_pair: Callable[[int], int] | None = None,
) -> list[RefinementRow]:
    """Consecutive-resolution Monte Carlo errors under one shared noise.

    For each pair (J, J') from ``j_list`` the fine tableau is drawn once per
    realization and the coarse run consumes its first J columns, so both
    resolutions see the same underlying noise.  The default step count per
    pair is J'^2 (dt = T / J'^2).
    """
    j_list = list(j_list)
    if any(b <= a for a, b in zip(j_list, j_list[1:])):
        raise ValueError(f"j_list must be increasing, got {j_list}")
    if steps_per_pair is None:
        steps_per_pair = lambda j_fine: j_fine * j_fine  # noqa: E731

    rows = []
    for j_coarse, j_fine in zip(j_list, j_list[1:]):
        n_steps = steps_per_pair(j_fine)
        dt = final_time / n_steps
        basis_f = TrigBasis(j_fine)
        basis_c = TrigBasis(j_coarse)
        problem_f = problem_factory(basis_f)
        problem_c = problem_factory(basis_c)
        eval_f = basis_f.to_grid(np.eye(j_fine))  # mode -> fine-grid samples
        y0_f = (
            np.zeros(j_fine)
            if initial is None
            else np.asarray(initial(basis_f), dtype=float)
        )
        if initial is None:
            y0_f[0] = 1.0
        y0_c = y0_f[:j_coarse]

        # One stacked tableau drives all realizations: increments [n, R, J].
        tableau = np.stack(
            [
                draw_gaussian_matrix(RngStream(seed, r), n_steps, j_fine, dt).increments
                for r in range(realizations)
            ],
            axis=1,
        )
        yf = np.broadcast_to(y0_f, (realizations, j_fine)).copy()
        yc = np.broadcast_to(y0_c, (realizations, j_coarse)).copy()
        stepper = _STEPPERS[scheme]
        for n in range(n_steps):
            dw = tableau[n]
            yf = stepper(problem_f, basis_f, yf, dw, dt, t=n * dt)
            yc = stepper(problem_c, basis_c, yc, dw[:, :j_coarse], dt, t=n * dt)
        finals_f = yf @ eval_f
        finals_c = yc @ eval_f[:j_coarse]
        rows.append(
            RefinementRow(j_coarse, j_fine, dt, mc_error_norm(finals_f, finals_c))
        )
    return rows

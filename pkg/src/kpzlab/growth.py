"""Lattice deposition models and kinetic-roughening statistics.

Three growth rules on a periodic 1-D lattice: ballistic deposition (BD,
particles stick to the first contact), random deposition (RD, columns grow
independently) and random deposition with surface relaxation (RD-relax,
particles diffuse to the lowest of the three local columns).  Time is
measured in monolayers, t = deposited / L.

Single-deposit functions define the rules; the ensemble runners replay the
identical rules in numba kernels fed with pre-drawn site sequences so runs
stay reproducible per (seed, run) stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import CollapseError, FitError
from .noise import RngStream

__all__ = [
    "Lattice",
    "deposit_bd",
    "deposit_rd",
    "deposit_rd_relax",
    "RoughnessSeries",
    "roughness_stats",
    "simulate",
    "ensemble_roughness",
    "ScalingFit",
    "fit_growth_exponent",
    "fit_exponents",
    "family_vicsek_collapse",
    "CollapseResult",
]


@dataclass
class Lattice:
    """Integer column heights on a periodic substrate of L sites."""

    heights: np.ndarray
    deposited: int = 0

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.int64)

    @classmethod
    def flat(cls, length: int) -> "Lattice":
        return cls(np.zeros(length, dtype=np.int64))

    @property
    def length(self) -> int:
        return self.heights.size

    @property
    def monolayers(self) -> float:
        return self.deposited / self.length


def deposit_bd(lattice: Lattice, i: int) -> Lattice:
    """Ballistic deposition: stick at the first contact falling down column i."""
    h = lattice.heights
    left = h[(i - 1) % lattice.length]
    right = h[(i + 1) % lattice.length]
    h[i] = max(left, h[i] + 1, right)
    lattice.deposited += 1
    return lattice


def deposit_rd(lattice: Lattice, i: int) -> Lattice:
    """Random deposition: the column simply grows by one."""
    lattice.heights[i] += 1
    lattice.deposited += 1
    return lattice


def deposit_rd_relax(lattice: Lattice, i: int, rng=None) -> Lattice:
    """Random deposition with relaxation to the lowest neighboring column.

    The particle stays at i when no neighbor is strictly lower; a tie
    between two strictly lower neighbors is broken uniformly at random.
    """
    h = lattice.heights
    li, ri = (i - 1) % lattice.length, (i + 1) % lattice.length
    lowest = min(h[li], h[i], h[ri])
    if h[i] == lowest:
        target = i
    elif h[li] == lowest and h[ri] == lowest:
        if rng is None:
            rng = np.random.default_rng()
        target = li if rng.random() < 0.5 else ri
    elif h[li] == lowest:
        target = li
    else:
        target = ri
    h[target] += 1
    lattice.deposited += 1
    return lattice


@dataclass
class RoughnessSeries:
    """Mean height and roughness of an interface sampled over time."""

    times: np.ndarray        # monolayers
    mean_height: np.ndarray
    w: np.ndarray
    runs: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mean_height = np.asarray(self.mean_height, dtype=float)
        self.w = np.asarray(self.w, dtype=float)


def roughness_stats(snapshots: Sequence[np.ndarray], times: Sequence[float]) -> RoughnessSeries:
    """Mean height and RMS roughness (population 1/L normalization)."""
    if len(snapshots) == 0:
        raise ValueError("need at least one sampled interface")
    means, ws = [], []
    for h in snapshots:
        h = np.asarray(h, dtype=float)
        mean = h.mean()
        means.append(mean)
        ws.append(math.sqrt(np.mean((h - mean) ** 2)))
    return RoughnessSeries(np.asarray(times, float), np.array(means), np.array(ws))


@njit(cache=True)
def _bd_kernel(heights, sites, sample_counts, out_mean, out_w2):
    length = heights.size
    s = 0
    for d in range(sites.size):
        i = sites[d]
        left = heights[i - 1] if i > 0 else heights[length - 1]
        right = heights[i + 1] if i < length - 1 else heights[0]
        new = heights[i] + 1
        if left > new:
            new = left
        if right > new:
            new = right
        heights[i] = new
        while s < sample_counts.size and d + 1 == sample_counts[s]:
            acc = 0.0
            for k in range(length):
                acc += heights[k]
            mean = acc / length
            var = 0.0
            for k in range(length):
                diff = heights[k] - mean
                var += diff * diff
            out_mean[s] = mean
            out_w2[s] = var / length
            s += 1


@njit(cache=True)
def _rd_kernel(heights, sites, sample_counts, out_mean, out_w2):
    length = heights.size
    s = 0
    for d in range(sites.size):
        heights[sites[d]] += 1
        while s < sample_counts.size and d + 1 == sample_counts[s]:
            acc = 0.0
            for k in range(length):
                acc += heights[k]
            mean = acc / length
            var = 0.0
            for k in range(length):
                diff = heights[k] - mean
                var += diff * diff
            out_mean[s] = mean
            out_w2[s] = var / length
            s += 1


@njit(cache=True)
def _rd_relax_kernel(heights, sites, coins, sample_counts, out_mean, out_w2):
    length = heights.size
    s = 0
    for d in range(sites.size):
        i = sites[d]
        li = i - 1 if i > 0 else length - 1
        ri = i + 1 if i < length - 1 else 0
        hc, hl, hr = heights[i], heights[li], heights[ri]
        lowest = hc
        if hl < lowest:
            lowest = hl
        if hr < lowest:
            lowest = hr
        if hc == lowest:
            target = i
        elif hl == lowest and hr == lowest:
            target = li if coins[d] else ri
        elif hl == lowest:
            target = li
        else:
            target = ri
        heights[target] += 1
        while s < sample_counts.size and d + 1 == sample_counts[s]:
            acc = 0.0
            for k in range(length):
                acc += heights[k]
            mean = acc / length
            var = 0.0
            for k in range(length):
                diff = heights[k] - mean
                var += diff * diff
            out_mean[s] = mean
            out_w2[s] = var / length
            s += 1


_KERNELS = {"bd": _bd_kernel, "rd": _rd_kernel, "rd_relax": _rd_relax_kernel}


def sample_grid(t_max: float, length: int, points_per_decade: int = 12) -> np.ndarray:
    """Geometric monolayer grid from a quarter monolayer up to t_max."""
    t_min = max(0.25, 1.0 / length)
    n = max(4, int(math.ceil(points_per_decade * math.log10(t_max / t_min))) + 1)
    times = np.geomspace(t_min, t_max, n)
    counts = np.unique(np.maximum(1, np.round(times * length).astype(np.int64)))
    return counts


def simulate(
    model: str,
    length: int,
    t_max: float,
    stream: RngStream,
    points_per_decade: int = 12,
) -> RoughnessSeries:
    """One seeded growth run sampled on a geometric monolayer grid."""
    if model not in _KERNELS:
        raise ValueError(f"unknown growth model {model!r}")
    counts = sample_grid(t_max, length, points_per_decade)
    deposits = int(counts[-1])
    g = stream.generator()
    sites = g.integers(0, length, size=deposits, dtype=np.int64)
    heights = np.zeros(length, dtype=np.int64)
    out_mean = np.empty(counts.size)
    out_w2 = np.empty(counts.size)
    if model == "rd_relax":
        coins = g.integers(0, 2, size=deposits, dtype=np.int64).astype(np.bool_)
        _rd_relax_kernel(heights, sites, coins, counts, out_mean, out_w2)
    else:
        _KERNELS[model](heights, sites, counts, out_mean, out_w2)
    return RoughnessSeries(counts / length, out_mean, np.sqrt(out_w2))


def ensemble_roughness(
    model: str,
    length: int,
    runs: int,
    t_max: float,
    seed: int,
    points_per_decade: int = 12,
) -> RoughnessSeries:
    """Ensemble-averaged roughness curve over seeded independent runs."""
    if runs < 1:
        raise ValueError("need at least one run")
    acc_w = None
    acc_mean = None
    times = None
    for r in range(runs):
        series = simulate(model, length, t_max, RngStream(seed, r), points_per_decade)
        if acc_w is None:
            times = series.times
            acc_w = np.zeros_like(series.w)
            acc_mean = np.zeros_like(series.mean_height)
        acc_w += series.w
        acc_mean += series.mean_height
    return RoughnessSeries(times, acc_mean / runs, acc_w / runs, runs=runs)


def _loglog_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares slope/intercept of log y vs log x with the slope stderr."""
    if x.size < 2:
        raise FitError(f"need at least two points for a log-log fit, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log-log fit requires positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    dof = max(1, x.size - 2)
    denom = np.sum((lx - lx.mean()) ** 2)
    stderr = math.sqrt(np.sum(resid**2) / dof / denom) if denom > 0 else math.inf
    return float(slope), float(intercept), float(stderr), float(np.sqrt(np.mean(resid**2)))


@dataclass
class ScalingFit:
    """Fitted growth (beta), roughness (alpha) and dynamic (z) exponents."""

    alpha: float
    beta: float
    z: float
    alpha_err: float
    beta_err: float
    z_err: float
    t_cross: dict
    beta_windows: dict
    alpha_window_start: dict
    w_saturated: dict
    residuals: dict = field(default_factory=dict)

    @property
    def closure_gap(self) -> float:
        """|z - alpha/beta|, the scaling-law consistency residual."""
        return abs(self.z - self.alpha / self.beta)

    @property
    def closure_tolerance(self) -> float:
        """Combined standard error of z - alpha/beta."""
        return math.sqrt(
            self.z_err**2
            + (self.alpha_err / self.beta) ** 2
            + (self.alpha * self.beta_err / self.beta**2) ** 2
        )


def fit_growth_exponent(
    series: RoughnessSeries, t_min: float = 1.0, t_max: float | None = None
):
    """Growth exponent beta from the log-log slope of w(t) in a window.

    Returns (beta, stderr, intercept).  Used directly for models that never
    saturate (random deposition).
    """
    window = series.times >= t_min
    if t_max is not None:
        window &= series.times <= t_max
    if window.sum() < 3:
        raise FitError(
            f"growth window [{t_min:.3g}, {t_max}] holds {int(window.sum())} samples"
        )
    slope, intercept, err, _ = _loglog_fit(series.times[window], series.w[window])
    return slope, err, intercept


def fit_exponents(ensembles: dict[int, RoughnessSeries]) -> ScalingFit:
    """Exponents from an ensemble of roughness curves over lattice sizes.

    Pre-crossover curves coincide across L, so one growth line fitted on
    the largest lattice (window t in [1, t_x/4]) serves every size; alpha
    comes from the saturated roughness versus L (window t >= 4 t_x), and
    the crossover time per L is the intersection of the growth line with
    that size's saturation level, iterated once.  z is the log-log slope
    of those crossover times.
    """
    sizes = sorted(ensembles)
    if len(sizes) < 2:
        raise FitError("need at least two lattice sizes to fit alpha and z")

    # Initial crossover guess: where w first reaches 75% of its endpoint.
    t_cross = {}
    for length in sizes:
        s = ensembles[length]
        w_end = s.w[-max(1, s.w.size // 10):].mean()
        reached = s.times[s.w >= 0.75 * w_end]
        if reached.size == 0:
            raise FitError(f"L={length}: curve never approaches saturation")
        t_cross[length] = float(reached[0])

    biggest = sizes[-1]
    beta = beta_err = intercept = beta_rms = math.nan
    w_sat = {}
    for _ in range(2):  # refine windows once, as designed
        s_big = ensembles[biggest]
        growth = (s_big.times >= 1.0) & (s_big.times <= t_cross[biggest] / 4.0)
        if growth.sum() < 3:
            raise FitError(
                f"L={biggest}: growth window [1, {t_cross[biggest] / 4:.3g}] "
                f"holds {int(growth.sum())} samples"
            )
        beta, intercept, beta_err, beta_rms = _loglog_fit(
            s_big.times[growth], s_big.w[growth]
        )
        for length in sizes:
            s = ensembles[length]
            saturated = s.times >= 4.0 * t_cross[length]
            if saturated.sum() < 2:
                raise FitError(
                    f"L={length}: no saturated samples beyond t = "
                    f"{4 * t_cross[length]:.3g}"
                )
            w_sat[length] = float(np.exp(np.mean(np.log(s.w[saturated]))))
            # Intersection of the shared growth line with this plateau.
            t_cross[length] = float(
                np.exp((math.log(w_sat[length]) - intercept) / beta)
            )

    alpha, _, alpha_err, alpha_rms = _loglog_fit(
        np.array(sizes, float), np.array([w_sat[s] for s in sizes])
    )
    z, _, z_err, z_rms = _loglog_fit(
        np.array(sizes, float), np.array([t_cross[s] for s in sizes])
    )
    return ScalingFit(
        alpha=alpha,
        beta=beta,
        z=z,
        alpha_err=alpha_err,
        beta_err=beta_err,
        z_err=z_err,
        t_cross=t_cross,
        beta_windows={biggest: (1.0, t_cross[biggest] / 4.0)},
        alpha_window_start={s: 4.0 * t_cross[s] for s in sizes},
        w_saturated=w_sat,
        residuals={"beta_rms": beta_rms, "alpha_rms": alpha_rms, "z_rms": z_rms},
    )


@dataclass
class CollapseResult:
    u_grid: np.ndarray
    curves: np.ndarray   # [n_sizes, len(u_grid)] rescaled roughness
    spread: float        # RMS spread of log w/L^alpha across curves


def family_vicsek_collapse(
    ensembles: dict[int, RoughnessSeries], alpha: float, z: float, grid_size: int = 60
) -> CollapseResult:
    """Rescale curves to (t / L^z, w / L^alpha) and score their collapse.

    The score is the RMS over a shared log-u grid of the standard deviation
    between curves; identical rescaled curves score zero.
    """
    sizes = sorted(ensembles)
    u_all, y_all = [], []
    for length in sizes:
        s = ensembles[length]
        u_all.append(s.times / length**z)
        y_all.append(s.w / length**alpha)
    lo = max(u.min() for u in u_all)
    hi = min(u.max() for u in u_all)
    if not hi > lo:
        raise CollapseError(
            f"rescaled curves share no common range: max(min u) = {lo:.3g}, "
            f"min(max u) = {hi:.3g}"
        )
    grid = np.geomspace(lo, hi, grid_size)
    curves = np.vstack(
        [
            np.exp(np.interp(np.log(grid), np.log(u), np.log(y)))
            for u, y in zip(u_all, y_all)
        ]
    )
    spread = float(np.sqrt(np.mean(np.std(np.log(curves), axis=0) ** 2)))
    return CollapseResult(grid, curves, spread)

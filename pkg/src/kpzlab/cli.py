"""Experiment runner: seeded suites, CSV outputs, manifests, figures.

One subcommand per experiment family.  A YAML config fully determines a
run; the emitted manifest.json echoes the effective config, lists every
per-realization stream and the SHA-256 of every output file, and can be
passed back to --config to replay the run bit-for-bit (data files).

Exit codes: 0 success, 2 config error, 3 solver non-convergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import growth, mhfe, renorm, report
from .basis import TrigBasis
from .errors import ConfigError, KpzlabError, NonConvergenceError
from .noise import (
    Mollifier,
    RngStream,
    draw_gaussian_matrix,
    load_noise,
    mollify_spectral,
    save_noise,
    white_noise_field,
)
from .spectral import heat_problem, integrate, refinement_study

EXPERIMENTS = (
    "heat-spectral",
    "kpz-mhfe",
    "growth",
    "renorm-compare",
    "renorm-ladder",
    "convergence-study",
)

_EXIT_OK, _EXIT_CONFIG, _EXIT_NONCONV, _EXIT_IO = 0, 2, 3, 4


def _version() -> str:
    try:
        return metadata.version("kpzlab")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def load_config(path) -> tuple[str | None, dict]:
    """Read a YAML config or a JSON manifest; return (experiment, config)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        doc = json.loads(text)
        if not isinstance(doc, dict) or "config" not in doc:
            raise ConfigError(f"{path} is not a run manifest (missing 'config')")
        return doc.get("experiment"), dict(doc["config"])
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(doc).__name__}")
    return doc.pop("experiment", None), doc


class Config:
    """Field access with validation errors that name the offending field."""

    def __init__(self, data: dict, known: set[str]):
        self.data = dict(data)
        unknown = set(self.data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")

    def get(self, field, default=None, kind=None, positive=False, minimum=None):
        value = self.data.get(field, default)
        if value is None:
            raise ConfigError(f"missing required config field '{field}'")
        if kind is int and isinstance(value, bool):
            raise ConfigError(f"field '{field}' must be an integer")
        if kind in (int, float):
            try:
                value = kind(value)
            except (TypeError, ValueError):
                raise ConfigError(f"field '{field}' must be {kind.__name__}, got {value!r}")
        if positive and not value > 0:
            raise ConfigError(f"field '{field}' must be positive, got {value}")
        if minimum is not None and value < minimum:
            raise ConfigError(f"field '{field}' must be >= {minimum}, got {value}")
        self.data[field] = value
        return value

    def effective(self) -> dict:
        return dict(self.data)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format(v, ".17g") if isinstance(v, float) else v for v in row]
            )
    return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Experiment implementations; each returns (effective_config, written_paths)
# ---------------------------------------------------------------------------


def _run_heat_spectral(cfg: Config, out: Path, figures: bool, workers: int):
    nu = cfg.get("nu", 1.0, float, positive=True)
    lam = cfg.get("lambda", 1.0, float)
    seed = cfg.get("seed", 0, int)
    final_time = cfg.get("final_time", 1.0, float, positive=True)
    realizations = cfg.get("realizations", 50, int, minimum=1)
    schemes = cfg.get("schemes", ["milstein", "lord_rougemont"])
    if isinstance(schemes, str):
        schemes = [schemes]
    for s in schemes:
        if s not in ("milstein", "lord_rougemont", "euler_galerkin"):
            raise ConfigError(f"unknown scheme '{s}' in field 'schemes'")
    j_list = [int(j) for j in cfg.get("j_list", [2, 4, 8, 16, 32, 64])]
    export = cfg.get("export_trajectories", 0, int, minimum=0)

    written = []
    errors_by_scheme = {}
    for scheme in schemes:
        rows = refinement_study(
            lambda b: heat_problem(b, nu=nu, lam=lam),
            scheme,
            j_list,
            realizations,
            seed,
            final_time=final_time,
        )
        errors_by_scheme[scheme] = [r.error for r in rows]
        written.append(
            _write_csv(
                out / f"refinement_{scheme}.csv",
                ["j_coarse", "j_fine", "dt", "error"],
                [(r.j_coarse, r.j_fine, r.dt, r.error) for r in rows],
            )
        )
    plots = [
        report.error_vs_resolution_plot(
            [r for r in j_list[1:]], errors_by_scheme, name="scheme_errors"
        )
    ]
    written += report.emit(plots, out, figures)

    if export:
        j = j_list[-1]
        basis = TrigBasis(j)
        n_steps = j * j
        dt = final_time / n_steps
        for r in range(min(export, realizations)):
            noise = draw_gaussian_matrix(RngStream(seed, r), n_steps, j, dt)
            traj = integrate(
                heat_problem(basis, nu=nu, lam=lam), basis, schemes[0],
                np.concatenate([[1.0], np.zeros(j - 1)]), noise,
            )
            grid_vals = basis.to_grid(traj.coeffs)
            written.append(
                _write_csv(
                    out / f"trajectory_r{r:03d}.csv",
                    ["t"] + [f"x{i}" for i in range(grid_vals.shape[1])],
                    np.column_stack([traj.times, grid_vals]).tolist(),
                )
            )
    return cfg.effective(), written


def _stromatolite_pieces(cfg, m, chi, tol, max_iters, final_time, dt):
    setup = mhfe.stromatolite_setup(
        m,
        final_time=final_time,
        chi=chi,
        dt=dt,
        tol=tol,
        max_iters=max_iters,
        v=cfg.get("v", 1.0, float),
        nu=cfg.get("nu", 1.0, float, positive=True),
        lam=cfg.get("lambda", 1.0, float),
    )
    return setup


def _run_kpz_mhfe(cfg: Config, out: Path, figures: bool, workers: int,
                  replay: Path | None):
    m = cfg.get("m", None, int, minimum=2)
    nu = cfg.get("nu", 1.0, float, positive=True)
    lam = cfg.get("lambda", 1.0, float)
    chi = cfg.get("chi", 1.0, float, positive=True)
    tol = cfg.get("tol", 1e-10, float, positive=True)
    max_iters = cfg.get("max_iters", 2000, int, minimum=1)
    final_time = cfg.get("final_time", 1.0, float, positive=True)
    boundary_kind = cfg.get("boundary", "stromatolite")
    forcing_spec = cfg.get("forcing", {"kind": "stromatolite"})
    initial_kind = cfg.get("initial", "stromatolite")
    dt_policy = cfg.get("dt_policy", "dx/16")
    seed = cfg.get("seed", 0, int)
    domain = cfg.get("domain", [-1.0, 1.0])
    if not (isinstance(domain, (list, tuple)) and len(domain) == 2):
        raise ConfigError("field 'domain' must be [a, b]")
    a, b = float(domain[0]), float(domain[1])
    if not b > a:
        raise ConfigError(f"field 'domain' must satisfy a < b, got {domain}")

    mesh = mhfe.Mesh1D(a, b, m)
    if dt_policy == "dx/16":
        dt = mesh.dx / 16.0
    elif dt_policy == "dx^3":
        dt = mesh.dx**3
    elif isinstance(dt_policy, (int, float)):
        dt = float(dt_policy)
    else:
        raise ConfigError(f"field 'dt_policy' must be 'dx/16', 'dx^3' or a number")
    n_steps = max(1, round(final_time / dt))
    dt = final_time / n_steps

    setup = None
    if boundary_kind == "stromatolite" or initial_kind == "stromatolite" or (
        isinstance(forcing_spec, dict) and forcing_spec.get("kind") == "stromatolite"
    ):
        setup = _stromatolite_pieces(cfg, m, chi, tol, max_iters, final_time, dt)
        mesh = setup.mesh

    params = mhfe.KpzParameters(
        nu=nu, lam=lam, dt=dt, chi1=chi, chi2=chi, tol=tol, max_iters=max_iters
    )
    if boundary_kind == "periodic":
        boundary = mhfe.PeriodicBoundary()
    elif boundary_kind == "stromatolite":
        boundary = setup.boundary
    else:
        raise ConfigError(f"field 'boundary' must be 'periodic' or 'stromatolite'")

    if initial_kind == "stromatolite":
        h0 = lambda x: setup.exact(0.0, x)  # noqa: E731
    elif initial_kind == "flat":
        h0 = lambda x: np.zeros(len(x))  # noqa: E731
    elif initial_kind == "parabola":
        h0 = lambda x: np.asarray(x) * (1.0 - np.asarray(x))  # noqa: E731
    else:
        raise ConfigError(
            "field 'initial' must be 'stromatolite', 'flat' or 'parabola'"
        )

    if not isinstance(forcing_spec, dict) or "kind" not in forcing_spec:
        raise ConfigError("field 'forcing' must be a mapping with a 'kind'")
    fkind = forcing_spec["kind"]
    if fkind == "zero":
        forcing = 0.0
    elif fkind == "constant":
        if "value" not in forcing_spec:
            raise ConfigError("field 'forcing.value' is required for constant forcing")
        forcing = float(forcing_spec["value"])
    elif fkind == "stromatolite":
        forcing = setup.forcing
    elif fkind == "noise-replay":
        path = replay or forcing_spec.get("path")
        if path is None:
            raise ConfigError(
                "field 'forcing.path' (or --replay-noise) is required for replay"
            )
        tableau = load_noise(path)
        if abs(tableau.dt - dt) > 1e-12 * dt:
            raise ConfigError(
                f"replay tableau step {tableau.dt:g} does not match run dt {dt:g}"
            )
        if tableau.n_time < n_steps:
            raise ConfigError(
                f"replay tableau holds {tableau.n_time} steps, run needs {n_steps}"
            )
        basis = TrigBasis(tableau.modes)
        moll = forcing_spec.get("mollifier")
        if moll is not None:
            phi = Mollifier(moll.get("kind", "bump"), float(moll.get("kappa", 0)))
            tableau = mollify_spectral(tableau, phi)
        field = white_noise_field(tableau, basis, mesh.nodes)
        forcing = field[:n_steps]
    else:
        raise ConfigError(
            "field 'forcing.kind' must be 'zero', 'constant', 'stromatolite' "
            "or 'noise-replay'"
        )

    result = mhfe.time_march(mesh, params, h0, boundary, forcing, final_time)

    written = []
    stride = cfg.get("output_stride", max(1, n_steps // 200), int, minimum=1)
    kept = list(range(0, n_steps + 1, stride))
    if kept[-1] != n_steps:
        kept.append(n_steps)
    written.append(
        _write_csv(
            out / "heights.csv",
            ["t"] + [format(x, ".17g") for x in mesh.centers],
            [[result.times[i]] + list(result.heights[i]) for i in kept],
        )
    )
    profiles = {"numeric": result.final()}
    if setup is not None and boundary_kind == "stromatolite":
        profiles["exact"] = setup.exact(final_time, mesh.centers)
    plots = [
        report.profile_plot(
            mesh.centers, profiles,
            f"KPZ height profile at T = {final_time:g}", "final_profile",
        )
    ]
    written += report.emit(plots, out, figures)
    return cfg.effective(), written


def _run_growth(cfg: Config, out: Path, figures: bool, workers: int):
    model = cfg.get("model", "bd")
    if model not in ("bd", "rd", "rd_relax"):
        raise ConfigError(f"field 'model' must be bd, rd or rd_relax, got '{model}'")
    sizes = [int(s) for s in cfg.get("sizes", [64, 128, 256, 512])]
    for s in sizes:
        if s < 2:
            raise ConfigError(f"field 'sizes' entries must be >= 2, got {s}")
    runs = cfg.get("runs", 100, int, minimum=1)
    seed = cfg.get("seed", 0, int)
    t_max = cfg.get("t_max", None)
    fit = cfg.get("fit", True)
    written = []
    ensembles = {}
    for length in sizes:
        horizon = float(t_max) if t_max else 3.0 * length**1.5
        series = growth.ensemble_roughness(model, length, runs, horizon, seed)
        ensembles[length] = series
        written.append(
            _write_csv(
                out / f"roughness_L{length}.csv",
                ["t_monolayers", "mean_height", "w"],
                np.column_stack([series.times, series.mean_height, series.w]).tolist(),
            )
        )
    plots = [report.roughness_plot(ensembles)]
    if fit and len(sizes) >= 2 and model != "rd":
        sf = growth.fit_exponents(ensembles)
        written.append(
            _write_csv(
                out / "fit_report.csv",
                ["quantity", "value", "stderr"],
                [
                    ("alpha", sf.alpha, sf.alpha_err),
                    ("beta", sf.beta, sf.beta_err),
                    ("z", sf.z, sf.z_err),
                    ("closure_gap", sf.closure_gap, sf.closure_tolerance),
                ]
                + [(f"t_cross_L{L}", sf.t_cross[L], 0.0) for L in sizes]
                + [(f"w_sat_L{L}", sf.w_saturated[L], 0.0) for L in sizes],
            )
        )
        collapse = growth.family_vicsek_collapse(ensembles, sf.alpha, sf.z)
        written.append(
            _write_csv(
                out / "collapse.csv",
                ["u"] + [f"y_L{L}" for L in sizes],
                np.column_stack([collapse.u_grid, collapse.curves.T]).tolist(),
            )
        )
        rows = np.column_stack([collapse.u_grid, collapse.curves.T])
        plots.append(
            report.PlotData(
                "collapse",
                ["u"] + [f"L{L}" for L in sizes],
                rows,
                f"Family-Vicsek collapse (alpha={sf.alpha:.3f}, z={sf.z:.3f}, "
                f"spread={collapse.spread:.4f})",
                "t / L^z",
                "w / L^alpha",
                scale="loglog",
            )
        )
    written += report.emit(plots, out, figures)
    return cfg.effective(), written


def _run_renorm_compare(cfg: Config, out: Path, figures: bool, workers: int):
    kappas = [float(k) for k in cfg.get("kappas", [1.0, 0.5, 0.25, 0.125, 0.0625])]
    for k in kappas:
        if k <= 0:
            raise ConfigError(f"field 'kappas' entries must be positive, got {k}")
    base = cfg.get("base_cells", 8, int, minimum=2)
    realizations = cfg.get("realizations", 20, int, minimum=1)
    kind = cfg.get("mollifier", "bump")
    if kind not in ("bump", "gaussian"):
        raise ConfigError(f"field 'mollifier' must be 'bump' or 'gaussian'")
    nu = cfg.get("nu", 1.0, float, positive=True)
    lam = cfg.get("lambda", 2.0, float)
    seed = cfg.get("seed", 0, int)
    scheme = cfg.get("scheme", "milstein")

    rungs, profiles = renorm.shift_ladder(
        kappas, base, realizations, seed, kind=kind, nu=nu, lam=lam,
        scheme=scheme, return_profiles=True, workers=workers,
    )
    table = []
    for rung in rungs:
        consts = renorm.renorm_constants(Mollifier(kind, rung.kappa))
        table.append(
            (
                rung.kappa, consts.c1, consts.c2, consts.c3, consts.c_total,
                rung.c_hat, rung.residual,
            )
        )
    written = [
        _write_csv(
            out / "comparison_report.csv",
            ["kappa", "C1", "C2", "C3", "C_total", "C_hat_empirical",
             "residual_error"],
            table,
        )
    ]
    plots = [report.shift_constants_plot(rungs), report.residual_plot(rungs)]
    for rung in rungs:
        kpz_T, hc_T, t_final = profiles[rung.kappa]
        centers = (np.arange(rung.n_cells) + 0.5) / rung.n_cells
        written.append(
            _write_csv(
                out / f"profiles_kappa_{rung.kappa:g}.csv",
                ["x", "h_kpz_mean", "h_hc_mean", "h_kpz_r0", "h_hc_r0"],
                np.column_stack(
                    [centers, kpz_T.mean(axis=0), hc_T.mean(axis=0),
                     kpz_T[0], hc_T[0]]
                ).tolist(),
            )
        )
        plots.append(
            report.profile_plot(
                centers,
                {"kpz_mollified": kpz_T.mean(axis=0), "hopf_cole": hc_T.mean(axis=0)},
                f"Mean final profiles, kappa = {rung.kappa:g}",
                f"profiles_kappa_{rung.kappa:g}",
            )
        )
    written += report.emit(plots, out, figures)
    return cfg.effective(), written


def _run_renorm_ladder(cfg: Config, out: Path, figures: bool, workers: int):
    rungs = cfg.get("rungs", [[8, 0.25], [16, 0.125], [32, 0.0625], [64, 0.03125]])
    try:
        rungs = [(int(n), float(k)) for n, k in rungs]
    except (TypeError, ValueError):
        raise ConfigError("field 'rungs' must be a list of [N, kappa] pairs")
    for n, k in rungs:
        if n < 2 or k <= 0:
            raise ConfigError(f"field 'rungs' has inadmissible entry [{n}, {k}]")
    realizations = cfg.get("realizations", 100, int, minimum=1)
    kind = cfg.get("mollifier", "bump")
    seed = cfg.get("seed", 0, int)
    nu = cfg.get("nu", 1.0, float, positive=True)
    lam = cfg.get("lambda", 2.0, float)
    errors = renorm.kappa_refinement_errors(
        rungs, realizations, seed, kind=kind, nu=nu, lam=lam, workers=workers
    )
    written = [
        _write_csv(
            out / "kappa_refinement.csv",
            ["n_cells", "kappa", "error"],
            [(n, k, e) for (n, k), e in zip(rungs, errors)],
        )
    ]
    written += report.emit([report.kappa_refinement_plot(rungs[:-1], errors)], out,
                           figures)
    return cfg.effective(), written


def _run_convergence_study(cfg: Config, out: Path, figures: bool, workers: int):
    m_list = [int(m) for m in cfg.get("m_list", [128, 256, 512, 1024])]
    for m in m_list:
        if m < 2:
            raise ConfigError(f"field 'm_list' entries must be >= 2, got {m}")
    chi = cfg.get("chi", 0.1, float, positive=True)
    final_time = cfg.get("final_time", 1.0, float, positive=True)
    tol = cfg.get("tol", 1e-10, float, positive=True)
    cfg.get("nu", 1.0, float, positive=True)
    cfg.get("lambda", 1.0, float)
    cfg.get("v", 1.0, float)
    rows, order = mhfe.convergence_study(
        m_list, chi=chi, final_time=final_time, tol=tol,
        nu=cfg.data["nu"], lam=cfg.data["lambda"], v=cfg.data["v"],
    )
    written = [
        _write_csv(
            out / "convergence.csv",
            ["m", "dx", "E", "fitted_order"],
            [(r.m, r.dx, r.error, order) for r in rows],
        )
    ]
    written += report.emit([report.convergence_plot(rows)], out, figures)
    return cfg.effective(), written


_KNOWN_FIELDS = {
    "heat-spectral": {
        "nu", "lambda", "seed", "final_time", "realizations", "schemes",
        "j_list", "export_trajectories", "out",
    },
    "kpz-mhfe": {
        "m", "nu", "lambda", "chi", "tol", "max_iters", "final_time",
        "boundary", "forcing", "initial", "dt_policy", "seed", "domain",
        "output_stride", "v", "out",
    },
    "growth": {"model", "sizes", "runs", "seed", "t_max", "fit", "out"},
    "renorm-compare": {
        "kappas", "base_cells", "realizations", "mollifier", "nu", "lambda",
        "seed", "scheme", "out",
    },
    "renorm-ladder": {
        "rungs", "realizations", "mollifier", "seed", "nu", "lambda", "out",
    },
    "convergence-study": {
        "m_list", "chi", "final_time", "tol", "nu", "lambda", "v", "out",
    },
}

_RUNNERS = {
    "heat-spectral": _run_heat_spectral,
    "growth": _run_growth,
    "renorm-compare": _run_renorm_compare,
    "renorm-ladder": _run_renorm_ladder,
    "convergence-study": _run_convergence_study,
}


def run(
    experiment: str,
    config: dict,
    out_dir,
    workers: int = 1,
    figures: bool = True,
    replay: Path | None = None,
) -> dict:
    """Execute one experiment and write outputs plus manifest.json."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment kind '{experiment}'; choose from "
            + ", ".join(EXPERIMENTS)
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = Config(config, _KNOWN_FIELDS[experiment])
    started = time.time()
    if experiment == "kpz-mhfe":
        effective, written = _run_kpz_mhfe(cfg, out, figures, workers, replay)
    else:
        effective, written = _RUNNERS[experiment](cfg, out, figures, workers)
    wall = time.time() - started

    seed = effective.get("seed", 0)
    realizations = effective.get("realizations", effective.get("runs", 1))
    manifest = {
        "experiment": experiment,
        "config": effective,
        "version": _version(),
        "wall_clock_s": round(wall, 3),
        "realization_streams": [
            {"seed": seed, "stream_id": r} for r in range(int(realizations))
        ],
        "outputs": {
            str(Path(p).relative_to(out)): _sha256(Path(p)) for p in written
        },
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kpzlab",
        description="Run KPZ growth, SPDE and renormalization experiments.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for kind in EXPERIMENTS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=False, help="YAML config or manifest.json")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=1, help="realization workers")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--replay-noise", default=None, help="noise tableau to replay (csv/bin)"
        )
        p.add_argument(
            "--no-figures", action="store_true", help="emit plot data without PNGs"
        )
    args = parser.parse_args(argv)

    try:
        config: dict = {}
        if args.config:
            manifest_kind, config = load_config(args.config)
            if manifest_kind is not None and manifest_kind != args.experiment:
                raise ConfigError(
                    f"config belongs to '{manifest_kind}', invoked as "
                    f"'{args.experiment}'"
                )
        if args.seed is not None:
            config["seed"] = args.seed
        out_dir = args.out or config.pop("out", None) or "runs/" + args.experiment
        config.pop("out", None)
        manifest = run(
            args.experiment,
            config,
            out_dir,
            workers=max(1, args.workers),
            figures=not args.no_figures,
            replay=Path(args.replay_noise) if args.replay_noise else None,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return _EXIT_NONCONV
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return _EXIT_IO
    except KpzlabError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return _EXIT_NONCONV
    print(f"wrote {len(manifest['outputs'])} files to {out_dir}")
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

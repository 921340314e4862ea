"""Command-line interface.

Every stochastic command takes a seed and is bit-reproducible: identical
(config, seed) pairs give identical output files.  Delimited outputs carry
a header row plus comment lines recording the seed and a hash of the
effective configuration.  Angles are radians everywhere.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import (
    ghz_state,
    optimal_pair_coefficients,
    optimal_state_vector,
    qpea_state_vector,
)
from .fock import FockError
from .metrics import (
    KNOWN_OPTIMAL_ANGLES,
    DeviationOverflowError,
    MetricsError,
    analytic_pdf,
    calibrate_estimator,
    fidelity,
    hl_bound,
    holevo_from_runs,
    phase_dependent_deviation,
    purity,
    qpea_bound,
    snl_optimize,
    snl_variance,
)
from .noise import NoiseConfig, NoiseModelError, hom_visibility, noisy_probe_state
from .protocol import (
    OutcomeDistribution,
    ProtocolConfig,
    ProtocolError,
    run_ensemble,
)
from .statefile import StateFileError, load_density_matrix, save_density_matrix

N_RESOURCES = 7

CONFIG_ERROR = 2
NUMERIC_ERROR = 3


class CliConfigError(ValueError):
    """Bad flag/config-file combination."""


def _config_hash(args: argparse.Namespace) -> str:
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in ("func", "out", "plot") and not k.startswith("_")}
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_csv(path: str | Path | None, header: list[str],
               rows: list[list], args: argparse.Namespace,
               extra_comments: list[str] = ()) -> None:
    lines = [f"# config_hash={_config_hash(args)} seed={getattr(args, 'seed', 'n/a')}"]
    lines += [f"# {c}" for c in extra_comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="ascii")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _plot_path(args: argparse.Namespace, default_stem: str) -> Path | None:
    if not getattr(args, "plot", False):
        return None
    if isinstance(args.plot, str):
        return Path(args.plot)
    if getattr(args, "out", None):
        return Path(args.out).with_suffix(".png")
    return Path(f"{default_stem}.png")


def _noise_from_args(args) -> NoiseConfig | None:
    xi = getattr(args, "xi", 1.0)
    zeta = getattr(args, "zeta", 1.0)
    eps1 = getattr(args, "eps1", 0.0)
    eps2 = getattr(args, "eps2", 0.0)
    if xi == 1.0 and zeta == 1.0 and eps1 == 0.0 and eps2 == 0.0:
        return None
    return NoiseConfig(xi=xi, zeta=zeta, eps1=eps1, eps2=eps2)


def _probe_state(args) -> tuple[np.ndarray, float | None]:
    """Density matrix selected by --state, with success probability if built."""
    name = getattr(args, "state", "optimal") or "optimal"
    if name == "optimal":
        noise = _noise_from_args(args)
        if noise is None:
            psi = optimal_state_vector()
            return np.outer(psi, psi.conj()), 1.0 / 18.0
        return noisy_probe_state(noise)
    if name == "qpea":
        psi = qpea_state_vector()
        return np.outer(psi, psi.conj()), None
    rho, report = load_density_matrix(name)
    for msg in report.messages:
        print(f"note: {msg}", file=sys.stderr)
    return rho, None


def _protocol_config(args, rho: np.ndarray) -> ProtocolConfig:
    estimator = getattr(args, "estimator", "binary")
    if estimator == "calibrated":
        base = ProtocolConfig(input_state=rho, rng_seed=args.seed)
        table = calibrate_estimator(OutcomeDistribution(base),
                                    getattr(args, "phi_grid", 4096))
        return ProtocolConfig(input_state=rho, estimator=table,
                              rng_seed=args.seed)
    return ProtocolConfig(input_state=rho, rng_seed=args.seed)


def _snl_reference() -> float:
    return snl_variance(np.array(KNOWN_OPTIMAL_ANGLES[N_RESOURCES]))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate_state(args) -> int:
    noise = _noise_from_args(args)
    if noise is None:
        psi = optimal_state_vector()
        rho, prob = np.outer(psi, psi.conj()), 1.0 / 18.0
    else:
        rho, prob = noisy_probe_state(noise)
    psi = optimal_state_vector()
    target = np.outer(psi, psi.conj())
    fid = fidelity(rho, target)
    print(f"fidelity_vs_optimal {fid:.12g}")
    print(f"purity {purity(rho):.12g}")
    print(f"success_probability {prob:.12g}")
    alpha = optimal_pair_coefficients()
    for j in range(4):
        g = ghz_state(j)
        proj = float(np.real(g.conj() @ rho @ g))
        print(f"ghz_projection_{j} {proj:.12g} (target {alpha[j] ** 2:.12g})")
    if args.out:
        save_density_matrix(args.out, rho,
                            comment=f"config_hash={_config_hash(args)}")
        print(f"wrote {args.out}")
    return 0


def cmd_simulate_hpea(args) -> int:
    rho, _ = _probe_state(args)
    config = _protocol_config(args, rho)
    runs = run_ensemble(config, args.n_ens,
                        phi_true=args.phi if args.phi is not None else None)
    stats = holevo_from_runs(runs)
    comments = [
        f"n_ens={args.n_ens} estimator={args.estimator}",
        f"mu={stats.mu:.12g} stderr_mu={stats.stderr_mu:.12g}",
        f"holevo_deviation={stats.deviation:.12g} "
        f"stderr={stats.stderr_deviation:.12g}",
        f"hl={hl_bound(N_RESOURCES):.12g} snl={_snl_reference():.12g} "
        f"qpea={qpea_bound(N_RESOURCES):.12g}",
    ]
    rows = [[r.phi_true, "".join(map(str, r.bits)), r.phi_est] for r in runs]
    _write_csv(args.out, ["phi_true", "bits", "phi_est"], rows, args, comments)
    print(f"holevo_deviation {stats.deviation:.9g} "
          f"(stderr {stats.stderr_deviation:.3g}, mu {stats.mu:.9g})")
    return 0


def _sweep(args, param_name: str, values, config_of) -> int:
    snl = _snl_reference()
    hl = hl_bound(N_RESOURCES)
    rows = []
    for v in values:
        rho, prob = noisy_probe_state(config_of(v))
        config = _protocol_config(args, rho)
        runs = run_ensemble(config, args.n_ens)
        stats = holevo_from_runs(runs)
        rows.append([v, stats.deviation, stats.stderr_deviation,
                     stats.mu, prob])
        print(f"{param_name}={v:.6g} deviation={stats.deviation:.6g} "
              f"stderr={stats.stderr_deviation:.3g}")
    comments = [f"n_ens={args.n_ens} zeta={args.zeta}",
                f"hl={hl:.12g} snl={snl:.12g}"]
    _write_csv(args.out, [param_name, "holevo_deviation", "stderr", "mu",
                          "success_probability"], rows, args, comments)
    path = _plot_path(args, f"sweep_{param_name}")
    if path:
        from .plots import plot_sweep
        arr = np.array([r[:3] for r in rows], dtype=float)
        plot_sweep(param_name, arr[:, 0], arr[:, 1], arr[:, 2], path,
                   snl=snl, hl=hl)
        print(f"wrote {path}")
    return 0


def cmd_sweep_mismatch(args) -> int:
    if args.xi_points < 2:
        raise CliConfigError("need at least two sweep points")
    values = np.linspace(args.xi_min, args.xi_max, args.xi_points)
    return _sweep(args, "xi", values,
                  lambda v: NoiseConfig(xi=float(v), zeta=args.zeta))


def cmd_sweep_spdc(args) -> int:
    if args.points < 2:
        raise CliConfigError("need at least two sweep points")
    values = np.linspace(args.eps_min, args.eps_max, args.points)
    if args.vary == "eps1":
        config_of = lambda v: NoiseConfig(zeta=args.zeta, eps1=float(v),
                                          eps2=args.fixed)
    else:
        config_of = lambda v: NoiseConfig(zeta=args.zeta, eps1=args.fixed,
                                          eps2=float(v))
    return _sweep(args, args.vary, values, config_of)


def cmd_snl_optimize(args) -> int:
    angles, v = snl_optimize(args.n, restarts=args.restarts, seed=args.seed)
    print(f"v_snl {v:.9g}")
    print("angles " + " ".join(f"{a:.9g}" for a in angles))
    if args.out:
        rows = [[i, a] for i, a in enumerate(angles)]
        _write_csv(args.out, ["index", "angle_rad"], rows, args,
                   [f"v_snl={v:.12g} n={args.n} restarts={args.restarts}"])
    return 0


def cmd_pdf(args) -> int:
    phis = np.arange(args.phi_grid) * 2.0 * math.pi / args.phi_grid
    if args.analytic:
        grid = phis
        qpea = np.full(8, 1.0 / math.sqrt(8.0))
        from .circuits import optimal_amplitudes
        hpea = optimal_amplitudes(N_RESOURCES)
        dens = [analytic_pdf(c, 0.0, grid) for c in (qpea, hpea)]
        rows = [[grid[i], dens[0][i], dens[1][i]] for i in range(grid.size)]
        _write_csv(args.out, ["phi_est", "density_qpea", "density_hpea"],
                   rows, args)
        path = _plot_path(args, "pdf_analytic")
        if path:
            from .plots import plot_pdf_curves
            plot_pdf_curves(grid, dens, ["uniform coefficients", "optimal probe"],
                            path)
            print(f"wrote {path}")
        return 0
    rho, _ = _probe_state(args)
    config = _protocol_config(args, rho)
    dist = OutcomeDistribution(config)
    tab = dist.tabulate(phis)
    header = ["phi"] + [f"p_{format(y, '03b')}" for y in range(tab.shape[1])]
    rows = [[phis[i]] + list(tab[i]) for i in range(phis.size)]
    _write_csv(args.out, header, rows, args)
    path = _plot_path(args, "pdf_outcomes")
    if path:
        from .plots import plot_outcome_curves
        plot_outcome_curves(phis, tab, dist.estimates(), path)
        print(f"wrote {path}")
    return 0


def cmd_hom(args) -> int:
    if args.grid:
        vals = np.linspace(0.0, 1.0, args.grid)
        pairs = [(x1, x2) for x1 in vals for x2 in vals]
    else:
        pairs = [(args.xi1, args.xi2)]
    rows = []
    for x1, x2 in pairs:
        p, nu = hom_visibility(x1, x2)
        rows.append([x1, x2, p, nu])
    _write_csv(args.out, ["xi1", "xi2", "p_coin", "visibility"], rows, args)
    if not args.grid:
        print(f"p_coin {rows[0][2]:.12g}")
        print(f"visibility {rows[0][3]:.12g}")
    path = _plot_path(args, "hom")
    if path:
        from .plots import plot_hom
        arr = np.array(rows, dtype=float)
        order = np.argsort(arr[:, 0] * arr[:, 1])
        plot_hom(arr[order, 0] * arr[order, 1], arr[order, 2], arr[order, 3],
                 path)
        print(f"wrote {path}")
    return 0


def cmd_calibrate(args) -> int:
    rho, _ = _probe_state(args)
    config = ProtocolConfig(input_state=rho, rng_seed=args.seed)
    table = calibrate_estimator(OutcomeDistribution(config), args.phi_grid)
    rows = [[format(y, "03b"), phi] for y, phi in sorted(table.items())]
    _write_csv(args.out, ["bits", "phi_est"], rows, args)
    for bits, phi in rows:
        print(f"{bits} {phi:.9g}")
    return 0


def cmd_analyze_state(args) -> int:
    rho, report = load_density_matrix(args.state)
    for msg in report.messages:
        print(f"note: {msg}", file=sys.stderr)
    psi = optimal_state_vector()
    print(f"fidelity_vs_optimal {fidelity(rho, np.outer(psi, psi.conj())):.12g}")
    print(f"purity {purity(rho):.12g}")
    alpha = optimal_pair_coefficients()
    for j in range(4):
        g = ghz_state(j)
        print(f"ghz_projection_{j} {float(np.real(g.conj() @ rho @ g)):.12g} "
              f"(target {alpha[j] ** 2:.12g})")
    config = _protocol_config(args, rho)
    dist = OutcomeDistribution(config)
    phis = np.arange(args.phi_grid) * 2.0 * math.pi / args.phi_grid
    rows = [[p, phase_dependent_deviation(dist, p)] for p in phis]
    from .metrics import holevo_deviation_exact
    dev = holevo_deviation_exact(dist, max(args.phi_grid, 720))
    print(f"holevo_deviation_exact {dev:.9g}")
    _write_csv(args.out, ["phi", "phase_dependent_deviation"], rows, args,
               [f"holevo_deviation_exact={dev:.12g}"])
    path = _plot_path(args, "analyze_state")
    if path:
        from .plots import plot_phase_deviation
        arr = np.array(rows, dtype=float)
        plot_phase_deviation(arr[:, 0], arr[:, 1], path, mean_deviation=dev,
                             snl=_snl_reference(), hl=hl_bound(N_RESOURCES))
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, stochastic: bool = False,
                state: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0,
                   help="RNG seed (stochastic commands echo it in output)")
    p.add_argument("--out", type=str, default=None, help="output file path")
    p.add_argument("--plot", nargs="?", const=True, default=False,
                   metavar="PNG", help="render a figure next to the output")
    p.add_argument("--config", type=str, default=None,
                   help="JSON file with defaults for any long flag")
    if stochastic:
        p.add_argument("--n-ens", dest="n_ens", type=int, default=10000,
                       help="ensemble size")
        p.add_argument("--estimator", choices=("binary", "calibrated"),
                       default="binary")
    if state:
        p.add_argument("--state", type=str, default="optimal",
                       help="'optimal', 'qpea', or a density-matrix file")
        p.add_argument("--phi-grid", dest="phi_grid", type=int, default=4096,
                       help="phase grid points for calibration/curves")


def _add_noise(p: argparse.ArgumentParser) -> None:
    p.add_argument("--xi", type=float, default=1.0,
                   help="mode overlap reflectivity per mismatch site")
    p.add_argument("--zeta", type=float, default=1.0,
                   help="detection-path efficiency")
    p.add_argument("--eps1", type=float, default=0.0,
                   help="heralded-source overall efficiency")
    p.add_argument("--eps2", type=float, default=0.0,
                   help="pair-source overall efficiency")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpea",
        description="Heisenberg-limited interferometric phase estimation "
                    "with triphoton probes: state generation, imperfection "
                    "models and precision metrics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-state", help="build the probe state")
    _add_common(p)
    _add_noise(p)
    p.set_defaults(func=cmd_generate_state)

    p = sub.add_parser("simulate-hpea", help="run the adaptive protocol")
    _add_common(p, stochastic=True, state=True)
    _add_noise(p)
    p.add_argument("--phi", type=float, default=None,
                   help="fixed true phase; default draws per run")
    p.set_defaults(func=cmd_simulate_hpea)

    p = sub.add_parser("sweep-mismatch", help="deviation vs mode overlap")
    _add_common(p, stochastic=True)
    p.add_argument("--zeta", type=float, default=0.13)
    p.add_argument("--xi-min", dest="xi_min", type=float, default=0.90)
    p.add_argument("--xi-max", dest="xi_max", type=float, default=1.00)
    p.add_argument("--xi-points", dest="xi_points", type=int, default=11)
    p.set_defaults(func=cmd_sweep_mismatch)

    p = sub.add_parser("sweep-spdc", help="deviation vs source efficiency")
    _add_common(p, stochastic=True)
    p.add_argument("--vary", choices=("eps1", "eps2"), default="eps1")
    p.add_argument("--fixed", type=float, default=0.05,
                   help="value of the non-varied efficiency")
    p.add_argument("--zeta", type=float, default=0.13)
    p.add_argument("--eps-min", dest="eps_min", type=float, default=0.05)
    p.add_argument("--eps-max", dest="eps_max", type=float, default=0.10)
    p.add_argument("--points", type=int, default=6)
    p.set_defaults(func=cmd_sweep_spdc)

    p = sub.add_parser("snl-optimize", help="optimise fixed measurement angles")
    _add_common(p)
    p.add_argument("--n", type=int, default=7, help="photon count")
    p.add_argument("--restarts", type=int, default=64)
    p.set_defaults(func=cmd_snl_optimize)

    p = sub.add_parser("pdf", help="outcome or estimate distributions")
    _add_common(p, state=True)
    _add_noise(p)
    p.add_argument("--analytic", action="store_true",
                   help="write the analytic estimate densities instead")
    p.set_defaults(func=cmd_pdf, estimator="binary")

    p = sub.add_parser("hom", help="two-photon interference diagnostic")
    _add_common(p)
    p.add_argument("--xi1", type=float, default=1.0)
    p.add_argument("--xi2", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=0,
                   help="tabulate an NxN overlap grid instead")
    p.set_defaults(func=cmd_hom)

    p = sub.add_parser("calibrate", help="per-outcome optimal estimates")
    _add_common(p, state=True)
    _add_noise(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze-state", help="metrics of a stored state")
    _add_common(p, state=True)
    p.add_argument("--estimator", choices=("binary", "calibrated"),
                   default="calibrated")
    p.set_defaults(func=cmd_analyze_state)

    for sp in sub.choices.values():
        sp.set_defaults(
            _arg_defaults={a.dest: a.default for a in sp._actions
                           if hasattr(a, "dest")},
            _arg_options={a.dest: tuple(a.option_strings)
                          for a in sp._actions if a.option_strings})
    return parser


def _apply_config_file(args: argparse.Namespace, argv: list[str]
                       ) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliConfigError(f"cannot read config file: {exc}") from exc
    if not isinstance(overrides, dict):
        raise CliConfigError("config file must hold a JSON object")
    defaults = args._arg_defaults
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise CliConfigError(f"unknown config keys {sorted(unknown)}")
    # Command line wins: fill only flags absent from argv.
    given = set()
    for dest, options in args._arg_options.items():
        for opt in options:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                given.add(dest)
    for key, val in overrides.items():
        if key not in given:
            setattr(args, key, val)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, list(argv))
        _validate_ranges(args)
        return args.func(args)
    except (CliConfigError, NoiseModelError, StateFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (MetricsError, DeviationOverflowError, ProtocolError,
            FockError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


def _validate_ranges(args) -> None:
    for name, lo, hi in (("xi", 0.0, 1.0), ("zeta", 0.0, 1.0),
                         ("eps1", 0.0, 0.2), ("eps2", 0.0, 0.2),
                         ("xi1", 0.0, 1.0), ("xi2", 0.0, 1.0)):
        v = getattr(args, name, None)
        if v is not None and not (lo <= v <= hi):
            raise CliConfigError(f"--{name} must lie in [{lo}, {hi}]")
    for name in ("n_ens", "phi_grid", "restarts", "points", "xi_points"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise CliConfigError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "seed", 0) is None:
        raise CliConfigError("--seed is required for stochastic commands")


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

One subcommand per pipeline stage: chain-coeffs and gs expose the setup
layers, scatter runs a single wavepacket, sweep / compare / emit drive
grids through the runner, and analytic / inelastic print closed-form
predictions without touching the simulator.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 run
finished but a numerical validity check failed (or a sweep lost too many
cells), 4 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

import numpy as np

from . import __version__
from .analytics import (FAMILIES, PROCESSES, InelasticParams,
                        delta_r_frustrated, delta_r_unfrustrated,
                        elastic_probabilities, total_inelastic)
from .bath import (SpectralDensity, chain_coefficients_analytic,
                   chain_coefficients_stieltjes)
from .errors import (ConfigError, FrustroError, ParameterError,
                     ResolutionError, SweepError)
from .runner import (FIGURES, ExperimentConfig, SweepResult,
                     compare_frustrated_unfrustrated, emit_figure_data,
                     run_sweep)
from .scattering import ScatterConfig, ground_state, record_csv, run_scattering, save_record

# record flags that gate the scatter exit status; everything else in the
# flags dict is diagnostic only
_VALIDITY_FLAGS = ("boundary_ok", "fock_ok", "gamma_in_range")


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, required=True,
                   help="coupling strength per line")
    p.add_argument("--omega-c", type=float, default=10.0,
                   help="band edge in units of the splitting")
    p.add_argument("--variant", choices=["frustrated", "parallel"],
                   default="frustrated")


def _add_numerics_args(p: argparse.ArgumentParser):
    p.add_argument("--length", type=int, default=150)
    p.add_argument("--boson-dim", type=int, default=4)
    p.add_argument("--chi", type=int, default=30)
    p.add_argument("--dt", type=float, default=0.01)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frustro",
        description="single-photon transport through a two-bath spin impurity")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chain-coeffs",
                       help="write the discretized chain couplings as CSV")
    _add_model_args(p)
    p.add_argument("--length", type=int, default=150)
    p.add_argument("--backend", choices=["stieltjes", "analytic"],
                   default="stieltjes")
    p.add_argument("--out", default="-",
                   help="output CSV path, - for stdout")

    p = sub.add_parser("gs", help="converge the interacting ground state")
    _add_model_args(p)
    _add_numerics_args(p)

    p = sub.add_parser("scatter", help="run one wavepacket scattering job")
    _add_model_args(p)
    _add_numerics_args(p)
    p.add_argument("--omega-bar", type=float, required=True,
                   help="packet center frequency in units of the splitting")
    p.add_argument("--sigma-omega", type=float, default=0.2,
                   help="packet frequency width")
    p.add_argument("--species", choices=["x", "y"], default="x")
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--t-inf", type=float, default=None)
    p.add_argument("--capture-tol", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="record JSON path")
    p.add_argument("--csv", default=None, help="also write a per-k CSV table")

    p = sub.add_parser("sweep", help="run a configured grid of jobs")
    p.add_argument("--config", required=True, help="experiment JSON path")

    p = sub.add_parser("analytic",
                       help="print closed-form elastic coefficient curves")
    p.add_argument("--family", choices=list(FAMILIES), default="full")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--omega-c", type=float, default=10.0)
    p.add_argument("--omega-min", type=float, default=0.05)
    p.add_argument("--omega-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=120)
    p.add_argument("--out", default="-")

    p = sub.add_parser("inelastic",
                       help="print integrated inelastic decay channels")
    p.add_argument("--process", choices=list(PROCESSES), required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--omega-c", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--renormalized", action="store_true")

    p = sub.add_parser("compare",
                       help="run matched frustrated and parallel grids")
    p.add_argument("--config", required=True, help="experiment JSON path")

    p = sub.add_parser("emit",
                       help="regenerate plot-ready CSV data from a sweep")
    p.add_argument("--figure", choices=sorted(FIGURES), required=True)
    p.add_argument("--sweep", required=True, help="sweep manifest JSON path")
    p.add_argument("--out", default=None)
    return parser


def _write_or_print(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
        print(out)


def _cmd_chain_coeffs(args) -> int:
    density = SpectralDensity(args.alpha, args.omega_c)
    build = (chain_coefficients_stieltjes if args.backend == "stieltjes"
             else chain_coefficients_analytic)
    coeffs = build(density, args.length)
    lines = [f"# alpha={args.alpha:g} omega_c={args.omega_c:g} "
             f"kappa={coeffs.kappa:.12g} backend={coeffs.backend}",
             "n,nu,beta"]
    beta = list(coeffs.beta) + [float("nan")]
    for n in range(coeffs.length):
        b = "" if n == coeffs.length - 1 else format(beta[n], ".12g")
        lines.append(f"{n},{coeffs.nu[n]:.12g},{b}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def _scatter_config(args, omega_bar=None, sigma_omega=None) -> ScatterConfig:
    return ScatterConfig(
        alpha=args.alpha,
        k0=(omega_bar if omega_bar is not None else 0.5 * args.omega_c)
        / args.omega_c,
        sigma_k=(sigma_omega or 0.2) / args.omega_c,
        variant=args.variant,
        omega_c=args.omega_c,
        length=args.length,
        boson_dim=args.boson_dim,
        chi=args.chi,
        dt=args.dt,
    )


def _cmd_gs(args) -> int:
    gs = ground_state(_scatter_config(args))
    print(f"energy {gs.energy:.10f}")
    print(f"sweeps {gs.sweeps}")
    print(f"converged {gs.converged}")
    print(f"discarded {gs.discarded:.3e}")
    return 0 if gs.converged else 3


def _cmd_scatter(args) -> int:
    config = ScatterConfig(
        alpha=args.alpha,
        k0=args.omega_bar / args.omega_c,
        sigma_k=args.sigma_omega / args.omega_c,
        species=args.species,
        variant=args.variant,
        omega_c=args.omega_c,
        length=args.length,
        boson_dim=args.boson_dim,
        chi=args.chi,
        dt=args.dt,
        x0=args.x0,
        t_inf=args.t_inf,
        capture_tol=args.capture_tol,
    )
    rec = run_scattering(config)
    save_record(args.out, rec)
    if args.csv:
        record_csv(args.csv, rec)
    print(f"record {args.out}")
    print(f"p_transmit {rec.p_transmit:.6f}")
    print(f"p_reflect {rec.p_reflect:.6f}")
    print(f"p_cross {rec.p_cross:.6f}")
    print(f"gamma_total {rec.gamma_total:.6f}")
    bad = [name for name in _VALIDITY_FLAGS if not rec.flags.get(name, True)]
    if bad:
        print(f"validity flags raised: {' '.join(bad)}", file=sys.stderr)
        return 3
    return 0


def _load_experiment(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_json(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")


def _cmd_sweep(args) -> int:
    result = run_sweep(_load_experiment(args.config))
    print(result.manifest_path())
    if result.n_failed:
        print(f"{result.n_failed} of {len(result.cells)} cells failed",
              file=sys.stderr)
    return 0


def _cmd_analytic(args) -> int:
    omegas = np.linspace(args.omega_min, args.omega_max, args.points)
    probs = elastic_probabilities(args.family, omegas, args.alpha,
                                  omega_c=args.omega_c)
    resonance = (delta_r_unfrustrated(args.alpha, args.omega_c)
                 if args.family == "unfrustrated"
                 else delta_r_frustrated(args.alpha, args.omega_c))
    lines = [f"# family={args.family} alpha={args.alpha:g} "
             f"omega_c={args.omega_c:g} resonance={resonance:.6f}",
             "omega,t2,r2,tyx2,gamma"]
    for i, w in enumerate(omegas):
        lines.append(",".join(format(float(v), ".12g") for v in
                              (w, probs["t_xx"][i], probs["r_xx"][i],
                               probs["t_yx"][i], probs["gamma"][i])))
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_inelastic(args) -> int:
    params = InelasticParams(alpha=args.alpha, omega_c=args.omega_c,
                             eta=args.eta, renormalized=args.renormalized)
    total = total_inelastic(args.process, args.omega, params)
    print(f"{args.process} {total:.8e}")
    return 0


def _cmd_compare(args) -> int:
    rows, path = compare_frustrated_unfrustrated(_load_experiment(args.config))
    print(path)
    print(f"{len(rows)} grid points")
    return 0


def _cmd_emit(args) -> int:
    sweep = SweepResult.load(args.sweep)
    paths = emit_figure_data(sweep, args.figure, out_dir=args.out)
    for p in paths:
        print(p)
    return 0


_COMMANDS = {
    "chain-coeffs": _cmd_chain_coeffs,
    "gs": _cmd_gs,
    "scatter": _cmd_scatter,
    "sweep": _cmd_sweep,
    "analytic": _cmd_analytic,
    "inelastic": _cmd_inelastic,
    "compare": _cmd_compare,
    "emit": _cmd_emit,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the message; keep its conventions
        return 0 if exc.code in (0, None) else 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SweepError, FrustroError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 4


if __name__ == "__main__":
    sys.exit(main())

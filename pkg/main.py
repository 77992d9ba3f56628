# main.py

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import config
import energy
import invariants
import quantization
import transport
from cache_manager import QuadratureCache
from errors import ConvergenceError, EmptyEnvelopeError, InputError, ToricError
from logger_config import setup_logging
from measures import parse_g
from polytope import (LatticePolytope, dh_measure_moments, lattice_points, load_polytope,
                      named_polytope, polytope_from_dict, read_json, volume, volume_exact)
from potential import ToricPotential, ma_measure, mass_of_superlevel, reference_potential, support_function

COMMANDS = ("polytope-info", "futaki", "soliton-field", "soliton", "transport",
            "balanced", "bergman", "spectral", "energy-probe")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; paths are checked before dispatch."""

    command: str
    input: str = "builtin:p1"
    out: str = config.OUTPUT_DIR
    k: Optional[int] = None
    k_max: Optional[int] = None
    tol: Optional[float] = None
    steps: Optional[int] = None
    seed: int = 0
    xi: Optional[str] = None
    g: str = "const"
    atoms: int = 10
    use_cache: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(command=args.command, input=args.input, out=args.out, k=args.k, k_max=args.k_max,
                   tol=args.tol, steps=args.steps, seed=args.seed, xi=args.xi, g=args.g, atoms=args.atoms,
                   use_cache=args.use_cache or bool(config.get_setting("use_cache")))

    def validate(self):
        if self.command not in COMMANDS:
            raise InputError("unknown command %r" % self.command)
        if not self.input.startswith("builtin:") and not os.path.exists(self.input):
            raise InputError("input file %s does not exist" % self.input)
        for name in ("k", "k_max", "steps"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise InputError("--%s must be a positive integer" % name.replace("_", "-"))
        if self.tol is not None and self.tol <= 0:
            raise InputError("--tol must be positive")
        os.makedirs(self.out, exist_ok=True)


# --- Input and output helpers ---

def load_inputs(run_config: RunConfig) -> Tuple[LatticePolytope, Dict]:
    """The polytope plus any extra JSON payload (potential, atoms, masses)."""
    if run_config.input.startswith("builtin:"):
        return named_polytope(run_config.input.split(":", 1)[1]), {}
    data = read_json(run_config.input)
    if not isinstance(data, dict):
        raise InputError("%s: expected a JSON object" % run_config.input)
    if "halfspaces" in data:
        return polytope_from_dict(data), {}
    if "polytope" not in data:
        raise InputError("%s: expected a polytope or a {\"polytope\": ...} document" % run_config.input)
    polytope_data = data["polytope"]
    if isinstance(polytope_data, str):
        polytope = load_polytope(polytope_data)
    else:
        polytope = polytope_from_dict(polytope_data)
    return polytope, data


def direction(run_config: RunConfig, polytope: LatticePolytope) -> Optional[np.ndarray]:
    if run_config.xi is None:
        return None
    return invariants.parse_direction(run_config.xi, polytope.dim).components


def write_summary(run_config: RunConfig, payload: Dict) -> str:
    path = os.path.join(run_config.out, "summary.json")
    document = {"command": run_config.command, "config": asdict(run_config), "result": payload}
    with open(path, 'w') as f:
        json.dump(document, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    logging.info("Wrote %s", path)
    return path


def write_csv(run_config: RunConfig, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    path = os.path.join(run_config.out, name)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_value(value) for value in row])
    logging.info("Wrote %s", path)
    return path


def write_json(run_config: RunConfig, name: str, payload: Dict) -> str:
    path = os.path.join(run_config.out, name)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return str(value)


def _coordinate_names(dim: int, prefix: str) -> List[str]:
    return ["%s%d" % (prefix, i + 1) for i in range(dim)]


# --- Commands ---

def cmd_polytope_info(run_config: RunConfig) -> Dict:
    polytope, _ = load_inputs(run_config)
    k_max = run_config.k_max or 6
    counts = [(k, len(lattice_points(polytope, k))) for k in range(1, k_max + 1)]
    moments = dh_measure_moments(polytope, 2)
    write_csv(run_config, "lattice_counts.csv", ["k", "N_k"], counts)
    write_csv(run_config, "moments.csv", _coordinate_names(polytope.dim, "beta") + ["moment"],
              [beta + (value,) for beta, value in sorted(moments.items())])
    return {
        "name": polytope.name,
        "dim": polytope.dim,
        "vertices": polytope.vertices.tolist(),
        "volume": volume(polytope),
        "volume_exact": str(volume_exact(polytope)),
        "barycenter": polytope.barycenter.tolist(),
        "reflexive": polytope.is_reflexive,
        "origin_interior": polytope.origin_interior,
        "lattice_counts": dict((str(k), n) for k, n in counts),
    }


def cmd_futaki(run_config: RunConfig) -> Dict:
    polytope, _ = load_inputs(run_config)
    xi = direction(run_config, polytope)
    xi = xi if xi is not None else np.zeros(polytope.dim)
    k_max = run_config.k_max or max(8, polytope.dim + 2)
    reports = {}
    for i in range(polytope.dim):
        eta = np.eye(polytope.dim)[i]
        report = invariants.futaki_limit_check(polytope, xi, eta, k_max)
        reports["e%d" % (i + 1)] = report.to_dict()
        write_csv(run_config, "futaki_e%d.csv" % (i + 1), ["k", "quantized", "normalized", "error"], report.rows())
    return {"xi": xi.tolist(), "directions": reports}


def cmd_soliton_field(run_config: RunConfig) -> Dict:
    polytope, _ = load_inputs(run_config)
    field_ = invariants.soliton_field(polytope)
    k_max = run_config.k_max or 8
    rows = []
    for k in range(1, k_max + 1):
        quantized = invariants.quantized_soliton_field(polytope, k)
        rows.append((k,) + tuple(quantized.components) + (quantized.residual,))
    write_csv(run_config, "quantized_fields.csv", ["k"] + _coordinate_names(polytope.dim, "xi") + ["grad_norm"], rows)
    return {"soliton_field": field_.to_dict(), "barycenter": polytope.barycenter.tolist()}


def cmd_soliton(run_config: RunConfig) -> Dict:
    """ξ*, quantized solitons over the k-ladder, and the Picard transport cross-check."""
    polytope, _ = load_inputs(run_config)
    polytope.require_fano()
    field_ = invariants.soliton_field(polytope)
    override = xi = direction(run_config, polytope)
    if xi is not None:
        for i in range(polytope.dim):
            futaki = invariants.futaki_continuum(polytope, xi, np.eye(polytope.dim)[i])
            if abs(futaki) > 1e-8:
                raise ConvergenceError("ξ override %s is not the soliton field: Fut_V(e_%d) = %.3e"
                                       % (xi.tolist(), i + 1, futaki), [], abs(futaki))
    else:
        xi = field_.components
    ladder = [run_config.k] if run_config.k else list(config.get_setting("soliton_k_ladder"))
    rows, final, monotone = [], None, []
    for k in ladder:
        soliton = quantization.quantized_soliton(polytope, override, k, steps=run_config.steps,
                                                tol=run_config.tol)
        residual = quantization.soliton_residual(soliton.potential, xi, polytope)
        rows.append((k, len(soliton.weights.basis), len(soliton.run.trace), soliton.run.residual, residual))
        monotone.append(soliton.run.ding_monotone)
        final = soliton
    write_csv(run_config, "residual_vs_k.csv", ["k", "N_k", "steps", "iteration_residual", "soliton_residual"], rows)
    write_csv(run_config, "weights.csv", _coordinate_names(polytope.dim, "alpha") + ["c_alpha"], final.weights.rows())
    write_json(run_config, "potential.json", final.potential.to_dict())

    picard = transport.soliton_picard(polytope, xi)
    window = config.get_setting("soliton_window")
    axis = np.linspace(-window, window, 41)
    grid = np.stack(np.meshgrid(*([axis] * polytope.dim), indexing='ij'), axis=-1).reshape(-1, polytope.dim)
    gap = picard.potential.values(grid) - final.potential.values(grid)
    write_csv(run_config, "picard_trace.csv", ["iter", "change", "ding", "transport_steps"],
              ((t["iter"], t["change"], t["ding"], t["transport_steps"]) for t in picard.trace))
    return {
        "soliton_field": field_.to_dict(),
        "xi": np.asarray(xi).tolist(),
        "ladder": ladder,
        "residuals": [row[-1] for row in rows],
        "ding_monotone": monotone,
        "iteration_field": "override" if override is not None else "level_k",
        "picard_converged": picard.converged,
        "picard_gap_mod_constants": float((gap.max() - gap.min()) / 2.0),
    }


def _transport_problem(run_config: RunConfig, polytope: LatticePolytope, data: Dict) -> transport.TransportProblem:
    g = parse_g(data.get("g", run_config.g), polytope.dim).normalized(polytope)
    if "atoms" in data:
        points = np.asarray(data["atoms"], dtype=float)
        masses = np.asarray(data.get("masses", np.full(len(points), 1.0 / len(points))), dtype=float)
    else:
        rng = np.random.default_rng(run_config.seed)
        points = rng.uniform(-2.0, 2.0, size=(run_config.atoms, polytope.dim))
        masses = rng.dirichlet(np.ones(run_config.atoms))
    masses = masses / masses.sum()
    return transport.TransportProblem(points, masses, g, polytope, tol=run_config.tol, max_iter=run_config.steps)


def cmd_transport(run_config: RunConfig) -> Dict:
    polytope, data = load_inputs(run_config)
    problem = _transport_problem(run_config, polytope, data)
    solution = transport.solve(problem)
    write_csv(run_config, "cells.csv",
              ["i"] + _coordinate_names(polytope.dim, "x") + ["intercept", "target_mass", "cell_mass"],
              ((i,) + tuple(problem.points[i]) + (c, problem.masses[i], mass)
               for i, c, mass, _ in solution.rows()))
    write_csv(run_config, "newton_trace.csv", ["iter", "residual", "step"],
              ((t.get("iter"), t.get("residual"), t.get("step")) for t in solution.trace))
    write_json(run_config, "potential.json", solution.potential.to_dict())
    return {
        "atoms": problem.size,
        "g": problem.g.describe(),
        "iterations": solution.iterations,
        "residual": solution.residual,
        "dual_value": solution.dual_value,
    }


def cmd_balanced(run_config: RunConfig) -> Dict:
    polytope, _ = load_inputs(run_config)
    k = run_config.k or 4
    g = parse_g(run_config.g, polytope.dim)
    start = quantization.HermitianWeights.uniform(polytope, k)
    run = quantization.donaldson_iterate(start, "volume", g, steps=run_config.steps, tol=run_config.tol)
    write_csv(run_config, "weights.csv", _coordinate_names(polytope.dim, "alpha") + ["c_alpha"], run.weights.rows())
    write_csv(run_config, "trace.csv", ["step", "residual", "D_V", "E_g"], run.rows())
    write_json(run_config, "potential.json", run.potential.to_dict())
    summary = {"k": k, "N_k": start.size, "converged": run.converged, "steps": len(run.trace),
               "residual": run.residual, "ding_monotone": run.ding_monotone}
    if not run.converged:
        write_summary(run_config, summary)
        raise ConvergenceError("balanced iteration did not converge in %d steps" % len(run.trace),
                               run.trace, run.residual)
    return summary


def _test_functions(dim: int):
    return [
        ("x1", lambda points: np.atleast_2d(points)[:, 0]),
        ("bump", lambda points: np.exp(-np.sum(np.atleast_2d(points) ** 2, axis=1))),
        ("tanh", lambda points: np.tanh(np.sum(np.atleast_2d(points), axis=1))),
    ]


def cmd_bergman(run_config: RunConfig) -> Dict:
    polytope, data = load_inputs(run_config)
    phi = ToricPotential.from_dict(data["potential"]) if "potential" in data else reference_potential(polytope)
    g = parse_g(run_config.g, polytope.dim)
    k_max = run_config.k_max or 16
    ks = [run_config.k] if run_config.k else [k for k in (4, 8, 16, 32) if k <= k_max]
    tests = _test_functions(polytope.dim)
    limit = ma_measure(phi, g, polytope)
    exact = [limit.pair(u) for _, u in tests]
    cache = QuadratureCache() if run_config.use_cache else None
    rows = []
    for k in ks:
        bergman = quantization.bergman_g(phi, polytope, k, "volume", g)
        measure = bergman.measure()
        errors = [abs(measure.pair(u) - value) for (_, u), value in zip(tests, exact)]
        rows.append((k, bergman.n_points, bergman.trace(), bergman.expected_trace) + tuple(errors))
        weights = quantization.hilb(phi, polytope, k, "volume", g, cache=cache)
        write_csv(run_config, "hilb_k%d.csv" % k, _coordinate_names(polytope.dim, "alpha") + ["c_alpha"],
                  weights.rows())
    write_csv(run_config, "bergman.csv", ["k", "N_k", "trace", "expected_trace"] + [name for name, _ in tests], rows)
    return {"potential": phi.to_dict(), "ks": ks, "limits": dict((name, value) for (name, _), value in zip(tests, exact))}


def cmd_spectral(run_config: RunConfig) -> Dict:
    polytope, _ = load_inputs(run_config)
    xi = direction(run_config, polytope)
    k_max = run_config.k_max or 40
    limit = dh_measure_moments(polytope, 2)
    lam = np.zeros(polytope.dim)
    rows = []
    for k in range(1, k_max + 1):
        nu = quantization.spectral_measure(polytope, k)
        moments = nu.moments(2)
        first = max(abs(moments[beta] - limit[beta]) for beta in limit if sum(beta) == 1)
        second = max(abs(moments[beta] - limit[beta]) for beta in limit if sum(beta) == 2)
        row = [k, nu.size, first, second, nu.superlevel_fraction(lam)]
        if xi is not None:
            pushed = quantization.spectral_measure(polytope, k, xi)
            row.append(pushed.pair(lambda points: points[:, 0]))
        rows.append(row)
    header = ["k", "N_k", "first_moment_error", "second_moment_error", "superlevel_fraction"]
    if xi is not None:
        header.append("pushforward_mean")
    write_csv(run_config, "spectral.csv", header, rows)
    try:
        superlevel_mass = mass_of_superlevel(support_function(polytope), lam, polytope)
    except EmptyEnvelopeError:
        superlevel_mass = 0.0
    return {"dh_moments": dict((",".join(map(str, beta)), value) for beta, value in sorted(limit.items())),
            "superlevel_mass": superlevel_mass}


def cmd_energy_probe(run_config: RunConfig) -> Dict:
    """Second differences of E_g and D_V along an affine segment and of E^{(k)}, D_V^{(k)} along a quantized geodesic."""
    polytope, data = load_inputs(run_config)
    rng = np.random.default_rng(run_config.seed)
    xi = direction(run_config, polytope)
    if xi is None:
        xi = invariants.soliton_field(polytope).components if polytope.origin_interior else np.zeros(polytope.dim)
    g = parse_g(run_config.g, polytope.dim).normalized(polytope)
    samples = run_config.steps or 9
    phi0 = reference_potential(polytope)
    if "potential" in data:
        phi1 = ToricPotential.from_dict(data["potential"])
    else:
        slopes = np.vstack([polytope.vertices, lattice_points(polytope, 1)]).astype(float)
        phi1 = ToricPotential(slopes, rng.uniform(-1.0, 1.0, len(slopes)), 1.0, name="random")
    segment = energy.GeodesicSegment(phi0, phi1)
    e_probe = energy.convexity_probe(segment, lambda phi: energy.energy_g(phi, phi0, g, polytope), samples)
    reports = {"energy": e_probe.to_dict()}
    if polytope.origin_interior:
        d_probe = energy.convexity_probe(segment, lambda phi: energy.ding_modified(phi, xi, polytope, phi0).value,
                                         samples)
        reports["ding"] = d_probe.to_dict()
    write_csv(run_config, "probe.csv", ["t", "E_g"] + (["D_V"] if "ding" in reports else []),
              zip(e_probe.ts, e_probe.values, *([reports["ding"]["values"]] if "ding" in reports else [])))

    k = run_config.k or 4
    size = len(lattice_points(polytope, k))
    h0 = quantization.HermitianWeights(polytope, k, rng.normal(size=size))
    h1 = quantization.HermitianWeights(polytope, k, rng.normal(size=size))
    quantized_segment = energy.GeodesicSegment(h0, h1, "quantized")
    eq_probe = energy.convexity_probe(quantized_segment,
                                      lambda h: quantization.energy_quantized(h, h0, g), samples, tol=1e-13)
    reports["energy_quantized"] = eq_probe.to_dict()
    if polytope.origin_interior:
        dq_probe = energy.convexity_probe(quantized_segment,
                                          lambda h: quantization.ding_quantized(h, xi, h0).value, samples, tol=1e-9)
        reports["ding_quantized"] = dq_probe.to_dict()
    return {"xi": np.asarray(xi).tolist(), "k": k,
            "classifications": dict((name, report["classification"]) for name, report in reports.items()),
            "probes": reports}


DISPATCH = {
    "polytope-info": cmd_polytope_info,
    "futaki": cmd_futaki,
    "soliton-field": cmd_soliton_field,
    "soliton": cmd_soliton,
    "transport": cmd_transport,
    "balanced": cmd_balanced,
    "bergman": cmd_bergman,
    "spectral": cmd_spectral,
    "energy-probe": cmd_energy_probe,
}


def run_command(run_config: RunConfig) -> Dict:
    title = run_config.command.upper().replace("-", " ")
    logging.info("========== STARTING %s ==========", title)
    run_config.validate()
    payload = DISPATCH[run_config.command](run_config)
    write_summary(run_config, payload)
    logging.info("=========== %s FINISHED ===========", title)
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Toric g-Monge-Ampere toolkit: transport, solitons, balanced metrics.")
    parser.add_argument("command", choices=COMMANDS, help="Operation to run.")
    parser.add_argument("--input", default="builtin:p1",
                        help="Polytope or problem JSON, or builtin:<name> (p1, interval, unit_interval, "
                             "test_interval, simplex, square, p2, bl1p2, p1xp1).")
    parser.add_argument("--out", default=config.OUTPUT_DIR, help="Directory for summary.json and CSV tables.")
    parser.add_argument("--k", type=int, help="Quantization level.")
    parser.add_argument("--k-max", type=int, dest="k_max", help="Largest level in k-ladders and tables.")
    parser.add_argument("--tol", type=float, help="Solver tolerance (defaults from settings.json).")
    parser.add_argument("--steps", type=int, help="Iteration cap, or samples for energy-probe.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for generated test data.")
    parser.add_argument("--xi", type=str,
                        help="Torus direction as comma-separated reals, e.g. \"0.5,-1\". "
                             "soliton iterates with it instead of the level-k field.")
    parser.add_argument("--g", type=str, default="const", help="Weight g: const, exp:xi1,..., or step:lam1,...")
    parser.add_argument("--atoms", type=int, default=10, help="Number of random atoms for transport.")
    parser.add_argument("--use-cache", action="store_true", help="Cache Hilb quadrature results in sqlite.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log DEBUG lines per iterate.")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the script; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    run_config = RunConfig.from_args(args)
    try:
        run_command(run_config)
    except ToricError as e:
        logging.error("%s failed: %s", run_config.command, e)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

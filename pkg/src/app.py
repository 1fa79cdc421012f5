"""
MitLindblad Main Application
Command-line front end that ties the simulator components together
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .ancilla_noise import build_corrected_plan
from .history import RunHistory
from .lindblad import evolve
from .mitigation import Variant, joint_lindbladian, noisy_lindbladian
from .noise import NoiseModel
from .operators import Operator, plus_state, sigma_x, sigma_z, tensor_power, embed_local, zeros
from .sampling import MeasurementSpec, empirical_overhead, required_shots, sample_estimate
from .scenarios import load_scenario_config, run_scenario, scenario_name, write_csv, write_result
from .settings import ConfigError, Settings, get_settings
from .stochastic import ConvergenceReport, StochasticRun, convergence_report
from .verification import run_protocol_suite


COMMANDS = ("run-scenario", "build-plan", "verify-protocol", "sample", "overhead", "unravel")

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def load_noise(path: str) -> NoiseModel:
    """
    Read a noise description file.

    Raises:
        ConfigError: unreadable or malformed file
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    try:
        return NoiseModel.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid noise description in {path}: {e}") from e


def _qubit_count(noise: NoiseModel) -> int:
    if any(d != 2 for d in noise.system_layout):
        raise ConfigError("This command needs a qubit-only system layout")
    return len(noise.system_layout)


def _probe_problem(noise: NoiseModel):
    """|+...+> under H = 0 with X...X measured; the ideal value is 1"""
    n = _qubit_count(noise)
    rho0 = tensor_power(plus_state(), n).with_layout(noise.system_layout)
    observable = tensor_power(sigma_x(), n).with_layout(noise.system_layout)
    return zeros(noise.system_layout), rho0, observable


class MitLindbladApp:
    """Runs one subcommand at a time and records it in the run history"""

    def __init__(self, settings: Optional[Settings] = None):
        """
        Initialize the application.

        Args:
            settings: Settings instance (uses default if None)
        """
        self.settings = settings or get_settings()
        self.integrator = self.settings.integrator_config()

    def _history(self, out_dir: Path) -> RunHistory:
        return RunHistory(str(out_dir / "history.json"), max_size=self.settings.history_size)

    def _record(self, command: str, out_dir: Path, started: float, outputs: Sequence[Path],
                seed: Optional[int] = None, scenario: Optional[str] = None) -> None:
        for path in outputs:
            print(f"✓ Wrote {path}")
        self._history(out_dir).add(
            command,
            scenario=scenario,
            seed=seed,
            duration=time.perf_counter() - started,
            outputs=[str(p) for p in outputs],
        )

    def _write_json(self, path: Path, data: dict) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
        return path

    def run_scenario(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        config = load_scenario_config(args.config)
        if args.shots is not None:
            if args.shots < 1:
                raise ConfigError("--shots must be at least 1")
            config.shots = args.shots
        name = scenario_name(config)
        out_dir = Path(args.out)
        print(f"Running {name} (seed={args.seed}, exact={args.exact})...")

        result = run_scenario(
            config,
            integrator=self.integrator,
            seed=args.seed,
            exact=args.exact,
            threads=self.settings.threads,
            batch_size=self.settings.shot_batch_size,
        )
        outputs = write_result(result, out_dir, self.settings.float_digits)
        if args.plot or self.settings.plot:
            from .plotting import plot_result
            outputs += plot_result(result, out_dir)
        self._record("run-scenario", out_dir, started, outputs, args.seed, name)
        return EXIT_OK

    def build_plan(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        noise = load_noise(args.noise)
        plan = build_corrected_plan(noise, args.variant)
        data = plan.to_dict()
        data["noise"] = noise.to_dict()
        if args.out:
            out_dir = Path(args.out)
            path = self._write_json(out_dir / "plan.json", data)
            self._record("build-plan", out_dir, started, [path])
        else:
            print(json.dumps(data, indent=2))
        return EXIT_OK

    def verify_protocol(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        print(f"Verifying {args.trials} random {args.qubits}-qubit instances...")
        report = run_protocol_suite(args.qubits, args.trials, args.seed, cfg=self.integrator,
                                    threads=self.settings.threads)
        print(f"  max deviation from unitary evolution: {report.max_deviation:.3e}")
        print(f"  max deviation between plan variants:  {report.max_equivalence:.3e}")
        passed = report.passed(args.tolerance)
        print(f"{'✓' if passed else '✗'} Exact cancellation "
              f"{'holds' if passed else 'violated'} at tolerance {args.tolerance:g}")
        if args.out:
            out_dir = Path(args.out)
            path = self._write_json(out_dir / "verification.json", report.to_dict())
            self._record("verify-protocol", out_dir, started, [path], args.seed)
        return EXIT_OK if passed else EXIT_RUNTIME

    def sample(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        noise = load_noise(args.noise)
        hamiltonian, rho0, observable = _probe_problem(noise)
        plan = build_corrected_plan(noise)
        w = evolve(joint_lindbladian(hamiltonian, plan), plan.joint_initial_state(rho0), args.time,
                   self.integrator)
        spec = MeasurementSpec(plan.joint_observable(observable))
        shots = args.shots or 100_000
        estimate = sample_estimate(w, spec, shots, plan.prefactor(args.time), args.seed,
                                   batch_size=self.settings.shot_batch_size, threads=self.settings.threads)
        data = estimate.to_dict()
        data["exact"] = plan.prefactor(args.time) * spec.exact_mean(w)
        data["hoeffding_shots"] = required_shots(args.epsilon, args.delta, plan.a + plan.delta,
                                                 args.time, spec.outcome_range)
        print(f"  estimate {estimate.mean:.6f} ± {estimate.stderr:.2e} (exact {data['exact']:.6f})")
        if args.out:
            out_dir = Path(args.out)
            path = self._write_json(out_dir / "sample.json", data)
            self._record("sample", out_dir, started, [path], args.seed)
        else:
            print(json.dumps(data, indent=2))
        return EXIT_OK

    def overhead(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        noise = load_noise(args.noise)
        hamiltonian, rho0, observable = _probe_problem(noise)
        plan = build_corrected_plan(noise)
        t = args.time
        w = evolve(joint_lindbladian(hamiltonian, plan), plan.joint_initial_state(rho0), t, self.integrator)
        noisy = evolve(noisy_lindbladian(hamiltonian, noise), rho0, t, self.integrator)
        spec_mit = MeasurementSpec(plan.joint_observable(observable))
        spec_noisy = MeasurementSpec(observable)
        shots = args.shots or 100_000
        base = 0 if args.seed is None else args.seed

        rows = []
        for rep in range(args.repetitions):
            ratio = empirical_overhead(w, spec_mit, noisy, spec_noisy, shots, base + 2 * rep,
                                       plan.prefactor(t))
            rows.append([rep, ratio])
        ratios = np.array([r[1] for r in rows])
        predicted = math.exp(4.0 * (plan.a + plan.delta) * t)
        print(f"  mean overhead {ratios.mean():.4f} (predicted e^(4at) = {predicted:.4f})")
        if args.out:
            out_dir = Path(args.out)
            path = write_csv(out_dir / "overhead.csv", ["repetition", "overhead"], rows,
                             self.settings.float_digits)
            self._record("overhead", out_dir, started, [path], args.seed)
        return EXIT_OK

    def unravel(self, args: argparse.Namespace) -> int:
        started = time.perf_counter()
        n = args.qubits
        layout = (2,) * n
        couplings = [embed_local(sigma_z(), site, layout) for site in range(n)]
        template = StochasticRun(couplings, [args.gamma] * n, seed=args.seed)
        hamiltonian = zeros(layout)
        rho0 = tensor_power(plus_state(), n).with_layout(layout)
        report = convergence_report(hamiltonian, template, rho0, args.time, args.dt, args.trajectories,
                                    repeats=args.repeats, cfg=self.integrator, threads=self.settings.threads)
        if report.mc_slope is not None:
            print(f"  Monte Carlo error slope {report.mc_slope:.3f} (expected -0.5)")
        out_dir = Path(args.out)
        path = write_csv(out_dir / "unravel.csv", ConvergenceReport.HEADER,
                         [row.as_list() for row in report.rows], self.settings.float_digits)
        self._record("unravel", out_dir, started, [path], args.seed)
        return EXIT_OK

    def dispatch(self, args: argparse.Namespace) -> int:
        handlers = {
            "run-scenario": self.run_scenario,
            "build-plan": self.build_plan,
            "verify-protocol": self.verify_protocol,
            "sample": self.sample,
            "overhead": self.overhead,
            "unravel": self.unravel,
        }
        return handlers[args.command](args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mitlindblad",
        description="Continuous-time error mitigation with engineered ancilla dissipation",
    )
    parser.add_argument("--settings", help="Settings file (default: settings.json in the project dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-scenario", help="Run a benchmark scenario and write CSV")
    p.add_argument("--config", required=True, help="Scenario JSON file")
    p.add_argument("--out", default="out", help="Output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int, help="Override the configured shot count")
    p.add_argument("--exact", action="store_true", help="Exact traces, no sampling")
    p.add_argument("--plot", action="store_true", help="Also write SVG plots")

    p = sub.add_parser("build-plan", help="Serialize the mitigation plan for a noise model")
    p.add_argument("--noise", required=True, help="Noise JSON file")
    p.add_argument("--variant", choices=Variant.ALL, default=Variant.SINGLE_QUBIT)
    p.add_argument("--out", help="Write plan.json here instead of printing")

    p = sub.add_parser("verify-protocol", help="Random-instance exact-cancellation suite")
    p.add_argument("--qubits", type=int, default=2)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--out", help="Write verification.json here")

    p = sub.add_parser("sample", help="Shot-sampled mitigated estimate of X...X on |+...+>")
    p.add_argument("--noise", required=True, help="Noise JSON file")
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out", help="Write sample.json here instead of printing")

    p = sub.add_parser("overhead", help="Empirical sampling overhead against e^(4at)")
    p.add_argument("--noise", required=True, help="Noise JSON file")
    p.add_argument("--time", type=float, default=2.0)
    p.add_argument("--shots", type=int)
    p.add_argument("--repetitions", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="Write overhead.csv here")

    p = sub.add_parser("unravel", help="Stochastic-Hamiltonian convergence study for dephasing")
    p.add_argument("--qubits", type=int, default=1)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--dt", type=float, nargs="+", default=[1e-2, 1e-3])
    p.add_argument("--trajectories", type=int, nargs="+", default=[250, 1000, 4000])
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="Output directory")
    return parser


def _error_record(error: BaseException, command: Optional[str]) -> None:
    record = {"error": type(error).__name__, "message": str(error), "command": command}
    print(json.dumps(record), file=sys.stderr)


def _command_of(argv: Sequence[str]) -> Optional[str]:
    """First positional token, skipping --settings and its value"""
    skip = False
    for token in argv:
        if skip:
            skip = False
            continue
        if token == "--settings":
            skip = True
            continue
        if not token.startswith("-"):
            return token
    return None


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point for the command line.

    Returns:
        Exit code: 0 success, 2 usage or configuration error, 1 runtime failure
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    command = _command_of(argv)
    if command is not None and command not in COMMANDS:
        _error_record(ConfigError(f"Unknown subcommand {command!r}; expected one of {', '.join(COMMANDS)}"),
                      command)
        return EXIT_USAGE

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code in (0, None):
            return EXIT_OK
        _error_record(ValueError("Invalid command-line arguments"), command)
        return EXIT_USAGE

    try:
        settings = Settings(args.settings) if args.settings else get_settings()
        return MitLindbladApp(settings).dispatch(args)
    except ConfigError as e:
        print(f"✗ {e}")
        _error_record(e, args.command)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("\nExiting...")
        return EXIT_RUNTIME
    except Exception as e:
        print(f"✗ {args.command} failed: {e}")
        _error_record(e, args.command)
        return EXIT_RUNTIME

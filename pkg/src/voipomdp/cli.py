import argparse
import asyncio
import logging
import os
import signal
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from .errors import ModelValidationError, PlanningError
from .metrics import (
    MetricResult,
    check_compatible,
    gain_from_results,
    make_default,
    make_perm,
    mdp_belief_value,
    net_step_voi,
    step_voi,
    vopi_from_result,
)
from .model import Belief, PomdpModel
from .modelfile import load_bounds, model_root_belief, read_model_file, read_pomdp_text, save_bounds, write_model_file
from .records import (
    SWEEP_HEADER,
    ConvergenceCsv,
    ConvergenceStream,
    write_csv,
    write_metric_report,
    write_rollout_csv,
    write_trace_csv,
)
from .simulation import BASELINES, ConditionPolicy, GreedyPolicy, RolloutPolicy, baseline_policy, rollout, trace_realization
from .solvers import SOLVERS, SolveResult, SolverConfig, solve
from .three_component import ConditionBasedPolicy, build_three_component, condition_policy_actions
from .utils import logger

METRICS = ("voi", "vopi", "voshm", "rvoci", "step-voi")
DEFAULT_GRID = "0.50:1.00:0.05"


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its model files."""

    solver: str = "gap"
    epsilon: float = 0.01
    max_iterations: int = 1000
    max_seconds: float | None = None
    seed: int = 0
    belief_set_size: int = 500
    episodes: int = 10_000
    horizon: int | None = None
    confidence: float = 0.95
    threads: int = 1
    out: Path = Path(".")

    def validate(self):
        """
        Raises:
            ModelValidationError: On any out-of-range setting.
        """
        if self.solver not in SOLVERS:
            raise ModelValidationError(f"unknown solver '{self.solver}', expected one of {sorted(SOLVERS)}")
        if self.episodes < 2:
            raise ModelValidationError("at least 2 episodes are required")
        if self.horizon is not None and self.horizon < 1:
            raise ModelValidationError("horizon must be at least 1")
        if not 0.0 < self.confidence < 1.0:
            raise ModelValidationError(f"confidence {self.confidence} outside (0, 1)")
        if self.threads < 1:
            raise ModelValidationError("threads must be at least 1")
        self.solver_config()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            max_wall_seconds=self.max_seconds,
            belief_set_size=self.belief_set_size,
            exploration_seed=self.seed,
        )

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        config = cls(
            solver=args.solver,
            epsilon=args.epsilon,
            max_iterations=args.max_iterations,
            max_seconds=args.max_seconds,
            seed=args.seed,
            belief_set_size=args.belief_set_size,
            episodes=args.episodes,
            horizon=args.horizon,
            confidence=args.confidence,
            threads=args.threads,
            out=Path(args.out),
        )
        config.validate()
        return config


def parse_grid(text: str) -> List[float]:
    """'start:stop:step' (inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError as e:
            raise ModelValidationError(f"malformed grid '{text}'") from e
        if step <= 0.0:
            raise ModelValidationError("grid step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ModelValidationError(f"malformed grid '{text}'") from e


def parse_root(text: str | None, model: PomdpModel) -> Belief:
    if not text:
        return model_root_belief(model)
    try:
        return Belief(np.array([float(x) for x in text.split(",")]))
    except ValueError as e:
        raise ModelValidationError(f"malformed root belief '{text}'") from e


def _observation_action(model: PomdpModel, text: str | None) -> int:
    if text is None:
        return model.n_observation_actions - 1
    if text in model.observation_actions:
        return model.observation_actions.index(text)
    if text.isdigit() and int(text) < model.n_observation_actions:
        return int(text)
    raise ModelValidationError(f"unknown observation action '{text}'")


class PlannerCLI:
    """
    Command-line front end: solves, metrics, sweeps, simulations and format
    conversion. Solves run on a thread pool; Ctrl-C stops them at the next
    iteration with their best bounds so far.
    """

    def __init__(self):
        self.args: Optional[argparse.Namespace] = None
        self.config: Optional[RunConfig] = None
        self.shutdown_event = asyncio.Event()
        self.executor: Optional[ThreadPoolExecutor] = None

    def get_parser(self) -> argparse.ArgumentParser:
        """
        Returns the argument parser for voipomdp.
        """
        parser = argparse.ArgumentParser(
            description="voipomdp: inspection and maintenance planning with value-of-information metrics."
        )
        parser.add_argument(
            "-v",
            "--verbose",
            action="store_true",
            help="Enable verbose logging.",
        )
        parser.add_argument(
            "--log-file",
            default=os.getenv("VOIPOMDP_LOG_FILE", "voipomdp.log"),
            help="Path to the log file. Defaults to 'voipomdp.log' (VOIPOMDP_LOG_FILE).",
        )

        common = argparse.ArgumentParser(add_help=False)
        common.add_argument(
            "--solver",
            choices=sorted(SOLVERS),
            default=os.getenv("VOIPOMDP_SOLVER", "gap"),
            help="Point-based solver (VOIPOMDP_SOLVER).",
        )
        common.add_argument(
            "--epsilon",
            type=float,
            default=os.getenv("VOIPOMDP_EPSILON", "0.01"),
            help="Target gap at the root belief (VOIPOMDP_EPSILON).",
        )
        common.add_argument("--max-iterations", type=int, default=os.getenv("VOIPOMDP_MAX_ITERATIONS", "1000"))
        common.add_argument(
            "--max-seconds",
            type=float,
            default=os.getenv("VOIPOMDP_MAX_SECONDS"),
            help="Wall-clock budget per solve (VOIPOMDP_MAX_SECONDS).",
        )
        common.add_argument("--belief-set-size", type=int, default=os.getenv("VOIPOMDP_BELIEF_SET_SIZE", "500"))
        common.add_argument("--seed", type=int, default=os.getenv("VOIPOMDP_SEED", "0"), help="Master seed (VOIPOMDP_SEED).")
        common.add_argument("--episodes", type=int, default=os.getenv("VOIPOMDP_EPISODES", "10000"))
        common.add_argument(
            "--horizon",
            type=int,
            default=os.getenv("VOIPOMDP_HORIZON"),
            help="Rollout horizon; derived from the discount when omitted (VOIPOMDP_HORIZON).",
        )
        common.add_argument("--confidence", type=float, default=os.getenv("VOIPOMDP_CONFIDENCE", "0.95"))
        common.add_argument(
            "--threads",
            type=int,
            default=os.getenv("VOIPOMDP_THREADS", str(os.cpu_count() or 1)),
            help="Worker threads (VOIPOMDP_THREADS, default: machine parallelism).",
        )
        common.add_argument("--out", default=os.getenv("VOIPOMDP_OUT", "."), help="Output directory.")
        common.add_argument("--root", help="Root belief as comma-separated probabilities.")

        commands = parser.add_subparsers(dest="command", required=True)

        solve_parser = commands.add_parser("solve", parents=[common], help="Solve a model and archive its bounds.")
        solve_parser.add_argument("--model", required=True)
        solve_parser.add_argument("--resume", help="Bounds archive to continue from.")

        metrics_parser = commands.add_parser("metrics", parents=[common], help="Value-of-information metrics.")
        metrics_parser.add_argument("--model", required=True)
        metrics_parser.add_argument("--model2", help="Permanent-monitoring setting for voshm.")
        metrics_parser.add_argument("--metric", choices=METRICS, required=True)
        metrics_parser.add_argument(
            "--observation-action",
            help="Observation action made permanent by rvoci (name or index, default: the last one).",
        )

        sweep_parser = commands.add_parser("sweep", parents=[common], help="Accuracy sweep of the three-component system.")
        sweep_parser.add_argument("--grid", default=os.getenv("VOIPOMDP_GRID", DEFAULT_GRID))

        simulate_parser = commands.add_parser("simulate", parents=[common], help="Monte Carlo rollouts of a policy.")
        simulate_parser.add_argument("--model", required=True)
        simulate_parser.add_argument(
            "--policy",
            required=True,
            help=f"Bounds archive, 'condition:<levels>' (e.g. condition:3) or one of {', '.join(BASELINES)}.",
        )
        simulate_parser.add_argument("--trace", action="store_true", help="Also write one policy realization.")

        convert_parser = commands.add_parser("convert", help="Convert a plain-text POMDP file to a model file.")
        convert_parser.add_argument("source")
        convert_parser.add_argument("target")
        convert_parser.add_argument("--shift-rewards", action="store_true")
        return parser

    def setup_logging(self):
        """
        Configures logging based on the provided arguments.
        """
        logging.basicConfig(
            level=logging.DEBUG if self.args.verbose else logging.INFO,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            filename=self.args.log_file,
            filemode="a",
        )

    def _setup_signal_handlers(self):
        """
        Ctrl-C and SIGTERM ask running solves to stop with their best bounds.
        """
        loop = asyncio.get_running_loop()
        try:
            loop.add_signal_handler(signal.SIGINT, self.shutdown_event.set)
            loop.add_signal_handler(signal.SIGTERM, self.shutdown_event.set)
        except (NotImplementedError, AttributeError, RuntimeError):
            pass

    def _cleanup_signal_handlers(self):
        loop = asyncio.get_running_loop()
        try:
            loop.remove_signal_handler(signal.SIGINT)
            loop.remove_signal_handler(signal.SIGTERM)
        except Exception:
            pass

    async def _in_executor(self, function: Callable, *args) -> Any:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self.executor, function, *args)

    async def solve_model(
        self,
        model: PomdpModel,
        root: Belief,
        bounds=None,
        stream: ConvergenceStream | None = None,
    ) -> SolveResult:
        """Runs one solve on the pool, streaming its records when asked."""

        def run_solve() -> SolveResult:
            return solve(
                model,
                self.config.solver_config(),
                self.config.solver,
                root=root,
                bounds=bounds,
                on_record=stream,
                should_stop=self.shutdown_event.is_set,
            )

        try:
            result = await self._in_executor(run_solve)
        except BaseException:
            if stream is not None:
                await stream.abort()
            raise
        if stream is not None:
            await stream.finish(result)
        return result

    async def cmd_solve(self) -> int:
        model = read_model_file(self.args.model)
        root = parse_root(self.args.root, model)
        bounds = load_bounds(self.args.resume, model) if self.args.resume else None
        stem = Path(self.args.model).stem
        convergence = ConvergenceCsv(self.config.out / f"{stem}-convergence.csv")
        stream = ConvergenceStream(convergence.write)
        try:
            result = await self.solve_model(model, root, bounds, stream)
        except BaseException:
            convergence.discard()
            raise
        convergence.commit()
        save_bounds(self.config.out / f"{stem}-bounds.npz", result.bounds, model, result.config_digest)
        print(f"{model.name or stem}: lower={result.lower:.9g} upper={result.upper:.9g} gap={result.gap:.9g}")
        return 3 if result.budget_exhausted else 0

    async def _solve_pair(self, first: PomdpModel, second: PomdpModel, root: Belief):
        return await asyncio.gather(self.solve_model(first, root), self.solve_model(second, root))

    async def cmd_metrics(self) -> int:
        model = read_model_file(self.args.model)
        root = parse_root(self.args.root, model)
        metric = self.args.metric
        results: List[SolveResult] = []
        if metric == "voi":
            default = make_default(model).model
            check_compatible(default, model)
            first, second = await self._solve_pair(default, model, root)
            report = [gain_from_results("voi", (f"{model.name}:default", first), (model.name, second))]
            results = [first, second]
        elif metric == "vopi":
            default_result = await self.solve_model(make_default(model).model, root)
            report = [vopi_from_result(model, default_result)]
            results = [default_result]
        elif metric in ("voshm", "rvoci"):
            if metric == "voshm":
                if not self.args.model2:
                    raise ModelValidationError("voshm needs --model2 with the permanent-monitoring setting")
                permanent = read_model_file(self.args.model2)
            else:
                permanent = make_perm(model, _observation_action(model, self.args.observation_action)).model
            check_compatible(model, permanent)
            first, second = await self._solve_pair(model, permanent, root)
            report = [gain_from_results(metric, (model.name, first), (permanent.name, second))]
            results = [first, second]
        else:
            result = await self.solve_model(model, root)
            report = self._step_metrics(model, result, root)
            results = [result]
        write_metric_report(self.config.out / f"{Path(self.args.model).stem}-{metric}.yaml", report)
        for entry in report:
            print(f"{entry.name}: {entry.value:.9g} +/- {entry.uncertainty:.9g}")
        return 3 if any(r.budget_exhausted for r in results) else 0

    def _step_metrics(self, model: PomdpModel, result: SolveResult, root: Belief) -> List[MetricResult]:
        report = []
        for a_m, a_o in model.action_pairs:
            if model.is_trivial(a_o):
                continue
            label = model.action_label(a_m, a_o)
            report.append(MetricResult(f"step-voi[{label}]", step_voi(model, result.bounds, root, a_m, a_o), result.gap))
            report.append(
                MetricResult(f"net-step-voi[{label}]", net_step_voi(model, result.bounds, root, a_m, a_o), result.gap)
            )
        return report

    async def cmd_sweep(self) -> int:
        rows, exhausted = [], False
        for p in parse_grid(self.args.grid):
            optional = build_three_component(p, setting=1)
            permanent = build_three_component(p, setting=2)
            blind = make_default(optional).model
            root = optional.root_belief()
            first, second, third = await asyncio.gather(
                self.solve_model(optional, root),
                self.solve_model(permanent, root),
                self.solve_model(blind, root),
            )
            exhausted |= any(r.budget_exhausted for r in (first, second, third))
            v1, v2, v_blind = first.lower, second.lower, third.lower
            v_mdp = mdp_belief_value(optional, root)
            rows.append([p, v1, v2, v_blind, v_mdp, v1 - v_blind, v2 - v_blind, v2 - v1])
            logger.info(f"sweep p={p:g}: V1={v1:.6g} V2={v2:.6g} blind={v_blind:.6g} mdp={v_mdp:.6g}")
            if self.shutdown_event.is_set():
                break
        write_csv(self.config.out / "sweep.csv", SWEEP_HEADER, rows)
        return 3 if exhausted else 0

    def _policy(self, model: PomdpModel) -> RolloutPolicy:
        source = self.args.policy
        if source in BASELINES:
            return baseline_policy(model, source)
        if source.startswith("condition:"):
            levels = {int(level) for level in source.split(":", 1)[1].split(",") if level}
            rule = ConditionBasedPolicy(tuple(level + 1 in levels for level in range(3)))
            return ConditionPolicy(condition_policy_actions(model, rule))
        if Path(source).is_file():
            return GreedyPolicy(load_bounds(source, model))
        raise ModelValidationError(f"unknown policy source '{source}'")

    async def cmd_simulate(self) -> int:
        model = read_model_file(self.args.model)
        root = parse_root(self.args.root, model)
        policy = self._policy(model)
        # The coordinating call blocks on its chunks, so it runs off the chunk pool
        result = await asyncio.to_thread(
            rollout,
            model,
            policy,
            root,
            self.config.episodes,
            self.config.horizon,
            self.config.seed,
            self.config.confidence,
            executor=self.executor,
        )
        stem = Path(self.args.model).stem
        write_rollout_csv(self.config.out / f"{stem}-rollout.csv", [(self.args.policy, result)])
        if self.args.trace:
            trace = await self._in_executor(
                trace_realization, model, policy, root, self.config.seed, self.config.horizon
            )
            write_trace_csv(self.config.out / f"{stem}-trace.csv", model, trace)
        low, high = result.ci()
        print(f"{self.args.policy}: mean={result.mean:.9g} ci=[{low:.9g}, {high:.9g}] n={result.episodes}")
        return 0

    def cmd_convert(self) -> int:
        source = Path(self.args.source)
        model = read_pomdp_text(source.read_text(), name=source.stem, shift_rewards=self.args.shift_rewards)
        write_model_file(model, self.args.target)
        return 0

    async def main(self, argv: Sequence[str] | None = None) -> int:
        """
        Primary execution logic; returns the process exit code.
        """
        load_dotenv()
        parser = self.get_parser()
        self.args = parser.parse_args(argv)

        self.setup_logging()

        if self.args.command == "convert":
            return self.cmd_convert()

        self.config = RunConfig.from_args(self.args)
        self.executor = ThreadPoolExecutor(max_workers=self.config.threads)
        self._setup_signal_handlers()
        try:
            handler = {
                "solve": self.cmd_solve,
                "metrics": self.cmd_metrics,
                "sweep": self.cmd_sweep,
                "simulate": self.cmd_simulate,
            }[self.args.command]
            return await handler()
        finally:
            self._cleanup_signal_handlers()
            self.executor.shutdown(wait=False, cancel_futures=True)


def run():
    """
    Synchronous entrypoint; maps failures to exit codes.
    """
    cli = PlannerCLI()
    try:
        code = asyncio.run(cli.main())
    except KeyboardInterrupt:
        code = 130
    except PlanningError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}")
        code = e.exit_code
    except ValueError as e:
        print(f"Error: {e}")
        code = 2
    sys.exit(code)

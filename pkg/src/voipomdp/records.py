"""
Result files: CSV tables with nine significant digits, a YAML metric report
and a stream that batches convergence records into a sink. Every file is
written to a temporary sibling first and renamed into place, so a failed command never
leaves a partial output behind.
"""

import asyncio
import csv
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Awaitable, Callable, Iterable, Iterator, List, Sequence

import yaml

from .metrics import MetricResult
from .model import PomdpModel
from .simulation import PolicyTrace, RolloutResult
from .solvers import ConvergenceRecord, SolveResult
from .utils import logger

CONVERGENCE_HEADER = ("iteration", "wall_seconds", "lower", "upper", "gap", "n_alpha", "n_beliefs")
ROLLOUT_HEADER = ("label", "episodes", "horizon", "mean", "std_error", "confidence", "ci_lower", "ci_upper")
TRACE_HEADER = (
    "t",
    "state",
    "maintenance",
    "observation_action",
    "action",
    "default_observation",
    "action_observation",
    "reward",
    "belief_max",
    "belief_argmax",
)
SWEEP_HEADER = ("p", "v1", "v2", "v_blind", "v_mdp", "voi1", "voi2", "voshm")


def fmt(value: Any) -> str:
    """Nine significant digits for floats, plain text for everything else."""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


@contextmanager
def atomic_writer(path: str | Path, mode: str = "w", **kwargs) -> Iterator[IO]:
    """
    Opens a temporary file next to `path` and renames it over `path` when the
    block exits cleanly; on error the temporary file is removed.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    descriptor, temporary = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(descriptor, mode, **kwargs) as handle:
            yield handle
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    with atomic_writer(path, newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows([fmt(value) for value in row] for row in rows)
    logger.info(f"wrote {path}")


def convergence_row(record: ConvergenceRecord) -> List[Any]:
    return [
        record.iteration,
        float(record.wall_seconds),
        float(record.lower),
        float(record.upper),
        float(record.upper - record.lower),
        record.n_alpha,
        record.n_beliefs,
    ]


def write_convergence_csv(path: str | Path, records: Sequence[ConvergenceRecord]):
    write_csv(path, CONVERGENCE_HEADER, (convergence_row(r) for r in records))


def write_rollout_csv(path: str | Path, results: Sequence[tuple[str, RolloutResult]]):
    rows = []
    for label, result in results:
        low, high = result.ci()
        rows.append(
            [label, result.episodes, result.horizon, result.mean, result.std_error, result.confidence, low, high]
        )
    write_csv(path, ROLLOUT_HEADER, rows)


def write_trace_csv(path: str | Path, model: PomdpModel, trace: PolicyTrace):
    rows = []
    for record in trace.records:
        a_m, a_o = record.maintenance_action, record.observation_action
        rows.append(
            [
                record.t,
                model.states[record.state],
                model.maintenance_actions[a_m],
                model.observation_actions[a_o],
                model.action_label(a_m, a_o),
                model.default_observations[record.observation.default_index],
                model.action_observations[a_o][record.observation.action_index],
                float(record.reward),
                float(record.belief.probs.max()),
                model.states[int(record.belief.probs.argmax())],
            ]
        )
    write_csv(path, TRACE_HEADER, rows)


def write_metric_report(path: str | Path, metrics: Sequence[MetricResult]):
    """YAML document with one entry per metric and the value reports behind it."""
    document = {
        "metrics": [
            {
                "name": metric.name,
                "value": float(fmt(float(metric.value))),
                "uncertainty": float(fmt(float(metric.uncertainty))),
                "settings": [
                    {
                        "setting": report.setting,
                        "value": float(fmt(float(report.value))),
                        "gap": float(fmt(float(report.gap))),
                        "config": report.config_digest,
                    }
                    for report in metric.reports
                ],
            }
            for metric in metrics
        ]
    }
    with atomic_writer(path) as handle:
        yaml.safe_dump(document, handle, sort_keys=False)
    logger.info(f"wrote {path}")


class ConvergenceCsv:
    """
    Convergence file filled in batches. Rows go to a temporary file that only
    replaces the target on `commit`.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        descriptor, self._temporary = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent)
        self._handle = os.fdopen(descriptor, "w", newline="")
        self._writer = csv.writer(self._handle)
        self._writer.writerow(CONVERGENCE_HEADER)
        self.rows = 0

    async def write(self, records: List[ConvergenceRecord]):
        self._writer.writerows([fmt(value) for value in convergence_row(r)] for r in records)
        self._handle.flush()
        self.rows += len(records)

    def commit(self):
        self._handle.close()
        os.replace(self._temporary, self.path)
        logger.info(f"wrote {self.path} ({self.rows} records)")

    def discard(self):
        self._handle.close()
        Path(self._temporary).unlink(missing_ok=True)


class ConvergenceStream:
    """
    Carries per-iteration convergence records from a solver thread to a sink.

    The solver calls the stream like a function from its worker thread. Each
    record crosses into the event loop through a queue, is checked for
    iteration order and is buffered; full batches of `batch_size` go to the
    sink at once. `finish` is awaited after the solver returns and writes
    whatever is left, so the sink always ends with the last iteration.
    """

    def __init__(
        self,
        sink: Callable[[List[ConvergenceRecord]], Awaitable[None]],
        batch_size: int = 50,
    ):
        """
        Args:
            sink: Coroutine receiving each batch, e.g. `ConvergenceCsv.write`.
            batch_size: Records written together while the solver runs.

        Must be created inside a running event loop.
        """
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self._sink = sink
        self._batch_size = batch_size
        self._loop = asyncio.get_running_loop()
        self._queue: asyncio.Queue[ConvergenceRecord | None] = asyncio.Queue()
        self._buffer: List[ConvergenceRecord] = []
        self._last_iteration = -1
        self.received = 0
        self.written = 0
        self.dropped = 0
        self.best: ConvergenceRecord | None = None
        self._consumer = asyncio.create_task(self._consume())

    def __call__(self, record: ConvergenceRecord):
        """Solver callback; safe to call from any thread."""
        self._loop.call_soon_threadsafe(self._queue.put_nowait, record)

    async def _consume(self):
        while (record := await self._queue.get()) is not None:
            self._accept(record)
            if len(self._buffer) >= self._batch_size:
                await self._write()
        await self._write()

    def _accept(self, record: ConvergenceRecord):
        if record.iteration <= self._last_iteration:
            logger.warning(f"dropping convergence record {record.iteration} after {self._last_iteration}")
            self.dropped += 1
            return
        self._last_iteration = record.iteration
        self.received += 1
        self._buffer.append(record)
        if self.best is None or record.upper - record.lower < self.best.upper - self.best.lower:
            self.best = record

    async def _write(self):
        if not self._buffer:
            return
        batch, self._buffer = self._buffer, []
        try:
            await self._sink(batch)
            self.written += len(batch)
        except Exception as e:
            logger.error(f"convergence write failed, {len(batch)} records lost: {e}")

    async def finish(self, result: SolveResult | None = None) -> int:
        """
        Drains the queue once the solver has returned and writes the rest.

        Returns:
            The number of records the sink accepted.
        """
        self._queue.put_nowait(None)
        await self._consumer
        if result is not None:
            logger.info(
                f"{result.solver}: {self.written} convergence records, "
                f"{result.iterations} iterations, final gap {result.gap:.6g}"
            )
        return self.written

    async def abort(self):
        """Stops consuming without writing the buffered records."""
        self._consumer.cancel()
        try:
            await self._consumer
        except asyncio.CancelledError:
            pass
        self._buffer.clear()

"""
experiment_runner.py
====================
Runs a configured experiment and writes its artifacts:

- `delta_trace.csv`: one row per iteration of replica 0 (every `thinning`-th),
  columns t, delta, mstar_1, mstar_2, resamples. delta is δ_t before the
  iteration, so delta_{t+1} = delta_t - (cos θ mstar_1 + sin θ mstar_2).
  Floats use their shortest round-trip representation.
- `report.json`: the `RunReport`, including diagnostics when configured.
- `delta_histogram.svg`, `running_rate.svg`: plots read back from the CSV.
- `diagnostics.json`: written by the diagnostics-only command.
"""
import csv
import json
import logging
import os

import matplotlib
import numpy as np
from pydantic import BaseModel, Field

from .analysis import (ChainRunConfig, ChainTrace, DiagnosticsTable, RunReport, diagnose_conditions,
                       simulate_chains, summarize_chains)
from .commons import STREAM_KEY_DIAGNOSTICS, make_rng
from .experiment_config import ExperimentConfig, DiagnosticsSection, build_step_distribution

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

TRACE_FILE = "delta_trace.csv"
REPORT_FILE = "report.json"
DIAGNOSTICS_FILE = "diagnostics.json"
HISTOGRAM_FILE = "delta_histogram.svg"
RATE_FILE = "running_rate.svg"
TRACE_COLUMNS = ("t", "delta", "mstar_1", "mstar_2", "resamples")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_SIMULATION_ERROR = 2
EXIT_CONDITION_FLAG = 3


class ExperimentResult(BaseModel):
    """Outcome of `run_experiment` or `run_diagnostics`.

    Attributes:
        exit_status (int): 0 on success, 3 when a condition flag was raised.
        output_dir (str): Directory holding the artifacts.
        artifacts (list[str]): Paths of the written files.
        flags (list[str]): Raised condition flags.
        report (RunReport | None): The chain report (`run` only).
        diagnostics (DiagnosticsTable | None): The diagnostics table, when computed.
    """
    exit_status: int = EXIT_OK
    output_dir: str
    artifacts: list[str] = Field(default_factory=list)
    flags: list[str] = Field(default_factory=list)
    report: RunReport | None = None
    diagnostics: DiagnosticsTable | None = None


def _prepare_output_dir(config: ExperimentConfig, out_dir: str | None) -> str:
    directory = out_dir or config.output.directory
    if not directory:
        raise ValueError("The output directory must not be empty.")
    os.makedirs(directory, exist_ok=True)
    if not os.path.isdir(directory):
        raise ValueError(f"The output path '{directory}' is not a directory.")
    return directory


def _run_config(config: ExperimentConfig, seed: int | None, workers: int | None) -> ChainRunConfig:
    update = {}
    if seed is not None:
        update["seed"] = seed
    if workers is not None:
        update["workers"] = workers
    return ChainRunConfig.model_validate({**config.run.model_dump(), **update})


def write_trace_csv(path: str, trace: ChainTrace, thinning: int = 1) -> None:
    """Writes the δ trace of one replica.

    Raises:
        OSError: On write failure (logged first).
    """
    try:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for t in range(0, trace.delta.size, thinning):
                writer.writerow((t, repr(float(trace.delta[t])), repr(float(trace.mstar[t, 0])),
                                 repr(float(trace.mstar[t, 1])), int(trace.resamples[t])))
        logger.info(f"Wrote trace of replica {trace.replica} to {path}.")
    except OSError as e:
        logger.error(f"Error writing trace to {path}: {e}", exc_info=True)
        raise


def write_json(path: str, model: BaseModel) -> None:
    """Serialises a pydantic model to an indented UTF-8 JSON file.

    Raises:
        OSError: On write failure (logged first).
    """
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(model.model_dump(mode='json'), f, indent=4, ensure_ascii=False)
        logger.info(f"Wrote {path}.")
    except OSError as e:
        logger.error(f"Error writing {path}: {e}", exc_info=True)
        raise


def read_trace_csv(path: str) -> np.ndarray:
    """Reads a trace written by `write_trace_csv` as an array with one row per line."""
    return np.atleast_2d(np.loadtxt(path, delimiter=',', skiprows=1, dtype=np.float64))


def write_plots(trace_path: str, output_dir: str, sigma: float) -> list[str]:
    """Renders the δ histogram and the running divergence-rate estimate from the CSV.

    Returns:
        list[str]: Paths of the written plots; a plot that failed to render is left out.
    """
    rows = read_trace_csv(trace_path)
    t = rows[:, 0]
    delta = rows[:, 1]
    running_rate = sigma * np.cumsum(rows[:, 2]) / np.arange(1, rows.shape[0] + 1)
    paths = []
    try:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(delta, bins=100, density=True)
        ax.set_xlabel("normalised distance δ")
        ax.set_ylabel("density")
        path = os.path.join(output_dir, HISTOGRAM_FILE)
        fig.savefig(path, format="svg")
        plt.close(fig)
        paths.append(path)

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(t, running_rate, linewidth=0.8)
        ax.set_xscale("log")
        ax.set_xlabel("iteration t")
        ax.set_ylabel("σ · mean of [M⋆]_1 up to t")
        path = os.path.join(output_dir, RATE_FILE)
        fig.savefig(path, format="svg")
        plt.close(fig)
        paths.append(path)
    except (OSError, ValueError) as e:
        logger.warning(f"Plotting failed: {e}", exc_info=True)
    return paths


def _diagnose(config: ExperimentConfig, section: DiagnosticsSection, seed: int) -> DiagnosticsTable:
    problem = config.problem
    dist = build_step_distribution(problem, config.distribution)
    return diagnose_conditions(problem, dist, section.delta_grid, section.samples_per_delta,
                               make_rng(seed, STREAM_KEY_DIAGNOSTICS))


def run_experiment(config: ExperimentConfig,
                   seed: int | None = None,
                   out_dir: str | None = None,
                   plots: bool | None = None,
                   workers: int | None = None) -> ExperimentResult:
    """Runs the chain experiment of `config` and writes its artifacts.

    Args:
        config (ExperimentConfig): Validated configuration.
        seed (int | None): Overrides `run.seed`.
        out_dir (str | None): Overrides `output.directory`.
        plots (bool | None): Overrides `output.plots`.
        workers (int | None): Overrides `run.workers`.

    Returns:
        ExperimentResult: Exit status 3 when a diagnostics flag was raised, else 0.

    Raises:
        ResampleCapError: Propagated from the simulation.
        OSError: When an artifact cannot be written.
    """
    output_dir = _prepare_output_dir(config, out_dir)
    run_config = _run_config(config, seed, workers)
    problem = config.problem
    dist = build_step_distribution(problem, config.distribution)

    traces = simulate_chains(problem, dist, run_config)
    report = summarize_chains(problem, dist, run_config, traces)
    result = ExperimentResult(output_dir=output_dir)

    if config.diagnostics is not None:
        table = _diagnose(config, config.diagnostics, run_config.seed)
        report = report.model_copy(update={"condition_diagnostics": table})
        result.diagnostics = table
        result.flags = list(table.flags)

    if config.output.trace:
        trace_path = os.path.join(output_dir, TRACE_FILE)
        write_trace_csv(trace_path, traces[0], run_config.thinning)
        result.artifacts.append(trace_path)
        if config.output.plots if plots is None else plots:
            result.artifacts.extend(write_plots(trace_path, output_dir, problem.sigma))
    report_path = os.path.join(output_dir, REPORT_FILE)
    write_json(report_path, report)
    result.artifacts.append(report_path)

    result.report = report
    if result.flags:
        logger.warning(f"Run finished with condition flags: {', '.join(result.flags)}")
        result.exit_status = EXIT_CONDITION_FLAG
    return result


def run_diagnostics(config: ExperimentConfig, seed: int | None = None, out_dir: str | None = None) -> ExperimentResult:
    """Computes only the conditions table and writes `diagnostics.json`."""
    output_dir = _prepare_output_dir(config, out_dir)
    run_config = _run_config(config, seed, None)
    table = _diagnose(config, config.diagnostics or DiagnosticsSection(), run_config.seed)
    path = os.path.join(output_dir, DIAGNOSTICS_FILE)
    write_json(path, table)
    return ExperimentResult(exit_status=EXIT_CONDITION_FLAG if table.flags else EXIT_OK, output_dir=output_dir,
                            artifacts=[path], flags=list(table.flags), diagnostics=table)

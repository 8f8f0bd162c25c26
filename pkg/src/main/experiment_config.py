"""
experiment_config.py
====================
Parsing and validation of experiment configuration files.

An experiment is described by an INI document::

    [problem]
    n = 2
    lambda = 5
    theta = 0.7853981633974483
    sigma = 1.0

    [distribution]
    kind = copula
    generator = gumbel
    generator_parameter = 2.0
    marginal1 = norm
    marginal2 = norm

    [run]
    steps = 1000000
    seed = 7

Every section is validated by a pydantic model that forbids unknown keys. All
problems found in the document are reported together in one `ConfigError`.
"""
import configparser
import logging
import os
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analysis import ChainRunConfig
from .archimedean import archimedean_copula
from .commons import ConfigError, read_str
from .dist import (StepDistribution, copula_marginal_distribution, gaussian_step_distribution,
                   isotropic_student_t_distribution)
from .generators import make_generator
from .marginals import make_marginal
from .problem import Problem

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "ES_LINCON_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"


def _split_floats(value):
    if isinstance(value, str):
        return [float(token) for token in value.replace(",", " ").split()]
    return value


def parse_matrix(text: str) -> np.ndarray:
    """Parses rows separated by ';' with whitespace separated entries, e.g. ``"4 0; 0 1"``."""
    rows = [_split_floats(row) for row in text.split(";") if row.strip()]
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise ValueError(f"Matrix '{text}' has rows of different lengths.")
    return np.array(rows, dtype=np.float64)


class DistributionSection(BaseModel):
    """The `[distribution]` section.

    Attributes:
        kind (str): ``gaussian``, ``copula`` or ``student_t``.
        covariance (str | None): Gaussian covariance rows, ``"4 0; 0 1"``.
        diagonal (list[float] | None): Gaussian diagonal covariance.
        generator (str | None): Archimedean family id for ``copula``.
        generator_parameter (float | None): Family parameter; family default when omitted.
        marginal1 (str): Law of g(M), e.g. ``"norm"`` or ``"cauchy 0 1"``.
        marginal2 (str): Law of the second frame coordinate.
        tail (str): Law of every further frame coordinate.
        isotropic (bool): Declared isotropy after whitening (copula laws only).
        df (float | None): Degrees of freedom for ``student_t``.
    """
    model_config = ConfigDict(extra='forbid')

    kind: Literal["gaussian", "copula", "student_t"]
    covariance: str | None = None
    diagonal: list[float] | None = None
    generator: str | None = None
    generator_parameter: float | None = None
    marginal1: str = "norm"
    marginal2: str = "norm"
    tail: str = "norm"
    isotropic: bool = False
    df: float | None = Field(default=None, gt=0.0)

    @field_validator("diagonal", mode="before")
    @classmethod
    def _split_diagonal(cls, value):
        return _split_floats(value)

    @model_validator(mode='after')
    def _check_kind_fields(self) -> 'DistributionSection':
        if self.kind == "gaussian" and self.covariance is not None and self.diagonal is not None:
            raise ValueError("give either covariance or diagonal, not both")
        if self.kind == "copula" and self.generator is None:
            raise ValueError("kind 'copula' requires a generator")
        if self.kind == "student_t" and self.df is None:
            raise ValueError("kind 'student_t' requires df")
        return self


class OutputSection(BaseModel):
    """The `[output]` section.

    Attributes:
        directory (str): Where artifacts go; `ES_LINCON_OUTPUT_DIR` or ``output`` by default.
        plots (bool): Write the SVG plots.
        trace (bool): Write the δ trace CSV.
    """
    model_config = ConfigDict(extra='forbid')

    directory: str = Field(default_factory=lambda: os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))
    plots: bool = True
    trace: bool = True


class DiagnosticsSection(BaseModel):
    """The optional `[diagnostics]` section."""
    model_config = ConfigDict(extra='forbid')

    delta_grid: list[float] = Field(default_factory=lambda: [1.0, 5.0, 10.0, 20.0])
    samples_per_delta: int = Field(default=20_000, ge=100)

    @field_validator("delta_grid", mode="before")
    @classmethod
    def _split_grid(cls, value):
        return _split_floats(value)

    @field_validator("delta_grid")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        if not value or value[0] < 0 or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("delta_grid must be non-empty, non-negative and increasing")
        return value


class ExperimentConfig(BaseModel):
    """A validated experiment."""
    problem: Problem
    distribution: DistributionSection
    run: ChainRunConfig = Field(default_factory=ChainRunConfig)
    output: OutputSection = Field(default_factory=OutputSection)
    diagnostics: DiagnosticsSection | None = None


_SECTIONS = {
    "problem": Problem,
    "distribution": DistributionSection,
    "run": ChainRunConfig,
    "output": OutputSection,
    "diagnostics": DiagnosticsSection,
}
_REQUIRED_SECTIONS = ("problem", "distribution")


def _format_errors(section: str, error: ValidationError) -> list[str]:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        prefix = f"[{section}] {location}" if location else f"[{section}]"
        messages.append(f"{prefix}: {item['msg']}")
    return messages


def build_step_distribution(problem: Problem, section: DistributionSection) -> StepDistribution:
    """Instantiates the step law of a `[distribution]` section, bound to the problem frame.

    Raises:
        ValueError: For an invalid covariance, generator parameter or marginal.
    """
    frame = problem.frame
    n = problem.n
    if section.kind == "gaussian":
        if section.covariance is not None:
            covariance = parse_matrix(section.covariance)
        elif section.diagonal is not None:
            if len(section.diagonal) != n:
                raise ValueError(f"diagonal needs {n} entries, got {len(section.diagonal)}")
            covariance = np.diag(section.diagonal)
        else:
            covariance = np.eye(n)
        return gaussian_step_distribution(n, covariance, frame)
    if section.kind == "copula":
        copula = archimedean_copula(make_generator(section.generator, section.generator_parameter))
        tail = [make_marginal(section.tail)] * (n - 2)
        return copula_marginal_distribution(copula, make_marginal(section.marginal1), make_marginal(section.marginal2),
                                            tail, frame, isotropic_after_whitening=section.isotropic)
    return isotropic_student_t_distribution(n, section.df, frame)


def _distribution_errors(section: DistributionSection, n: int | None) -> list[str]:
    """Domain errors of a parsed `[distribution]` section.

    The generator, the marginals and the covariance are checked on their own,
    so these errors are reported next to errors of other sections. Dimension
    checks need `n` and are skipped when `[problem]` is invalid.
    """
    errors = []

    def check(action) -> None:
        try:
            action()
        except ValueError as e:
            errors.append(f"[distribution]: {e}")

    if section.kind == "copula":
        check(lambda: archimedean_copula(make_generator(section.generator, section.generator_parameter)))
        check(lambda: make_marginal(section.marginal1))
        check(lambda: make_marginal(section.marginal2))
        if n is None or n > 2:
            check(lambda: make_marginal(section.tail))
    elif section.kind == "gaussian":
        covariance = None
        if section.covariance is not None:
            try:
                covariance = parse_matrix(section.covariance)
            except ValueError as e:
                errors.append(f"[distribution]: {e}")
        elif section.diagonal is not None:
            covariance = np.diag(section.diagonal)
        if covariance is not None:
            if n is not None and covariance.shape != (n, n):
                errors.append(f"[distribution]: covariance must be {n}x{n}, got "
                              f"{covariance.shape[0]}x{covariance.shape[1]}")
            else:
                check(lambda: gaussian_step_distribution(covariance.shape[0], covariance))
    return errors


def parse_config(text: str) -> ExperimentConfig:
    """Parses and validates an experiment document.

    Args:
        text (str): The INI document.

    Returns:
        ExperimentConfig: The validated configuration with defaults filled in.

    Raises:
        ConfigError: Listing every problem found.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError([f"Malformed configuration: {e}"]) from e

    errors = []
    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            errors.append(f"[{name}]: unknown section")
            continue
        values = dict(parser[name])
        if name == "problem" and "lambda" in values:
            values["lam"] = values.pop("lambda")
        try:
            sections[name] = _SECTIONS[name].model_validate(values)
        except ValidationError as e:
            errors.extend(_format_errors(name, e))
    for name in _REQUIRED_SECTIONS:
        if name not in parser.sections():
            errors.append(f"[{name}]: missing required section")

    if "distribution" in sections:
        problem = sections.get("problem")
        errors.extend(_distribution_errors(sections["distribution"], problem.n if problem is not None else None))
    if errors:
        logger.warning(f"Configuration rejected with {len(errors)} error(s).")
        raise ConfigError(errors)
    config = ExperimentConfig(**sections)
    logger.debug(f"Parsed configuration: {config.model_dump(mode='json')}")
    return config


def load_config(path: str) -> ExperimentConfig:
    """Reads and parses a configuration file.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    try:
        text = read_str(path)
    except OSError as e:
        logger.error(f"Cannot read configuration {path}: {e}", exc_info=True)
        raise ConfigError([f"Cannot read configuration file '{path}': {e}"]) from e
    return parse_config(text)

"""Experiment configuration: flat ``key = value`` files with ``[section]`` headers.

Sections only group keys for readability; every key names a field of
:class:`ExperimentConfig` and may appear in any section, but at most once.
Values given on the command line override the file, and the
``REPDYN_SEED`` environment variable overrides the file's ``seed``.
"""

import configparser
import os
import re
from dataclasses import dataclass, fields

from .constants import DEFAULT_GAMMA, FOUR_ROOM_EPSILON, FOUR_ROOM_STEP_SIZE, SYNTHETIC_STEP_SIZE
from .cumulants import Family
from .errors import ConfigError
from .learning import Rule, WeightMode

EXPERIMENTS = ("convergence", "random-cumulants", "rotating", "verify")
GENERATORS = ("reversible", "symmetric", "four_room", "three_state_cycle", "file")
SEED_ENV = "REPDYN_SEED"


def _split_list(text):
    return tuple(p.strip() for p in re.split(r"[,\s]+", text.strip()) if p.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "convergence"
    # environment
    generator: str = "reversible"
    mdp_file: str = ""
    n_states: int = 50
    gamma: float = DEFAULT_GAMMA
    epsilon: float = FOUR_ROOM_EPSILON
    # learning
    rules: tuple = (Rule.MC, Rule.TD, Rule.RESIDUAL)
    weight_mode: WeightMode = WeightMode.IMPLICIT
    d: int = 3
    step_size: float = SYNTHETIC_STEP_SIZE
    steps: int = 100_000
    snapshot_every: int = 1000
    n_step: int = 1
    max_relative_step: float = 0.05
    # cumulants
    family: Family = Family.IDENTITY
    families: tuple = (Family.GAUSSIAN, Family.NORMALIZED_GAUSSIAN, Family.HAAR, Family.INDICATOR, Family.SVD_RIGHT)
    n_tasks: int = 0
    t_grid: tuple = (5, 10, 20, 40, 80)
    bound_seeds: int = 30
    # seeds and output
    seed: int = 0
    n_seeds: int = 30
    out: str = "out"
    filter: str = ""

    def validate(self, lines=None):
        lines = lines or {}

        def fail(name, msg):
            raise ConfigError(msg, line=lines.get(name), field=name)

        if self.experiment not in EXPERIMENTS:
            fail("experiment", f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.generator not in GENERATORS:
            fail("generator", f"unknown generator {self.generator!r}; choose from {', '.join(GENERATORS)}")
        if self.generator == "file" and not self.mdp_file:
            fail("mdp_file", "generator 'file' needs mdp_file")
        if self.n_states < 2:
            fail("n_states", "n_states must be at least 2")
        if not 0.0 <= self.gamma < 1.0:
            fail("gamma", "gamma must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            fail("epsilon", "epsilon must lie in [0, 1]")
        if not self.rules:
            fail("rules", "at least one rule is required")
        if self.d < 1:
            fail("d", "d must be at least 1")
        if not self.step_size > 0.0:
            fail("step_size", "step_size must be positive")
        if self.steps < 0:
            fail("steps", "steps must be non-negative")
        if self.snapshot_every < 1:
            fail("snapshot_every", "snapshot_every must be at least 1")
        if self.n_step < 1:
            fail("n_step", "n_step must be at least 1")
        if self.max_relative_step < 0:
            fail("max_relative_step", "max_relative_step must be non-negative")
        if self.n_tasks < 0:
            fail("n_tasks", "n_tasks must be non-negative (0 means one task per state)")
        if any(t < 1 for t in self.t_grid):
            fail("t_grid", "every T must be positive")
        if self.n_seeds < 1:
            fail("n_seeds", "n_seeds must be at least 1")
        if self.bound_seeds < 1:
            fail("bound_seeds", "bound_seeds must be at least 1")
        if self.seed < 0:
            fail("seed", "seed must be non-negative")
        return self


_TUPLE_PARSERS = {
    "rules": Rule.parse,
    "families": Family.parse,
    "t_grid": int,
}
_SCALAR_PARSERS = {
    "weight_mode": WeightMode.parse,
    "family": Family.parse,
}


def _convert(name, raw):
    default = next(f for f in fields(ExperimentConfig) if f.name == name).default
    if name in _TUPLE_PARSERS:
        return tuple(_TUPLE_PARSERS[name](p) for p in _split_list(raw))
    if name in _SCALAR_PARSERS:
        return _SCALAR_PARSERS[name](raw)
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            value = float(raw)
            if not value.is_integer():
                raise ValueError(f"expected an integer, got {raw.strip()!r}") from None
            return int(value)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


PRESETS = {
    "convergence": {},
    "random-cumulants": {
        "generator": "four_room",
        "d": 5,
        "rules": (Rule.MC, Rule.TD),
        "step_size": FOUR_ROOM_STEP_SIZE,
        "steps": 500_000,
        "snapshot_every": 500_000,
        "n_seeds": 3,
    },
    "rotating": {
        "generator": "three_state_cycle",
        "n_states": 3,
        "d": 2,
        "rules": (Rule.TD,),
        "step_size": 0.02,
        "steps": 100_000,
        "snapshot_every": 50,
        "n_seeds": 1,
    },
    "verify": {},
}


def _line_numbers(text):
    """Map each key to the 1-based line where it is defined."""
    out = {}
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*([A-Za-z_][\w-]*)\s*[=:]", line)
        if m:
            out.setdefault(m.group(1).lower().replace("-", "_"), i)
    return out


def parse_config_text(text):
    """Parse config text into ``(values, line_numbers)``."""
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="__defaults__")
    parser.optionxform = lambda s: s.strip().lower().replace("-", "_")
    lines = _line_numbers(text)
    headless = bool(text.strip()) and not text.lstrip().startswith("[")
    try:
        parser.read_string("[main]\n" + text if headless else text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is not None and headless:
            line -= 1
        raise ConfigError(str(exc).splitlines()[0], line=line) from None
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key in section [{section}]", line=lines.get(key), field=key)
            if key in values:
                raise ConfigError("key defined more than once", line=lines.get(key), field=key)
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigError(str(exc), line=lines.get(key), field=key) from None
    return values, lines


def build_config(experiment, path=None, overrides=None, environ=None):
    """Assemble a validated config: preset < file < REPDYN_SEED < command-line overrides."""
    environ = os.environ if environ is None else environ
    values, lines = {}, {}
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        values, lines = parse_config_text(text)
    file_experiment = values.pop("experiment", experiment)
    if experiment and file_experiment != experiment:
        raise ConfigError(
            f"config is for experiment {file_experiment!r}, not {experiment!r}",
            line=lines.get("experiment"), field="experiment",
        )
    merged = dict(PRESETS.get(experiment, {}))
    merged.update(values)
    if environ.get(SEED_ENV, "").strip():
        try:
            merged["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
        lines.pop("seed", None)
    for key, val in (overrides or {}).items():
        if val is not None:
            merged[key] = _convert(key, val) if isinstance(val, str) else val
            lines.pop(key, None)
    cfg = ExperimentConfig(experiment=experiment, **merged)
    return cfg.validate(lines)

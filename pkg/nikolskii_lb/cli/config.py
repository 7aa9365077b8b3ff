"""
Run configuration for the nikolskii-lb CLI

A RunConfig is assembled from an optional YAML/JSON file and the command
line flags; flags win. Every field is validated before any computation.
"""

import os
from typing import Any, Dict, List, Mapping, Optional

import yaml

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.core.models import (
    ClassParams, Command, Construction, KernelName, OutputFormat, RunConfig,
)
from nikolskii_lb.utils.file_utils import FileUtils
from nikolskii_lb.utils.validation import (
    parse_extended_real, validate_n_grid, validate_out_dir, validate_positive_int, validate_seed,
)

OUT_DIR_ENV = "NIKOLSKII_OUT_DIR"
DEFAULT_OUT_DIR = "reports"
LEMMA_REPS = 100_000

CONFIG_KEYS = frozenset({
    "theta", "theta_prime", "n", "n_grid", "kappa", "delta", "seed", "out_dir", "format",
    "reps", "y_mc", "bandwidths", "kernel", "alpha", "big_n", "construction", "grid",
    "samples",
})
CLASS_KEYS = ("d", "beta", "r", "q", "L", "Q")
GRID_KEYS = frozenset({"kind", "d", "betas", "rs", "qs", "points"})

STOCHASTIC = frozenset({Command.VERIFY, Command.SIMULATE, Command.LEMMAS})

REQUIRED: Dict[Command, tuple] = {
    Command.RATE: ("theta",),
    Command.REGIMES: (),
    Command.SWEEP: ("theta", "n_grid"),
    Command.CONSTRUCT: ("theta", "theta_prime", "n"),
    Command.VERIFY: ("theta", "theta_prime", "n", "seed"),
    Command.CERTIFY: ("theta", "theta_prime"),
    Command.SIMULATE: ("theta", "theta_prime", "n_grid", "seed"),
    Command.LEMMAS: ("theta", "theta_prime", "n", "seed"),
}


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a YAML or JSON configuration file

    Args:
        path: File path; JSON is valid YAML, so one loader serves both

    Returns:
        Mapping of configuration keys

    Raises:
        ParameterError: unreadable file, malformed document or unknown keys
    """
    try:
        text = FileUtils.read_file(path)
    except IOError as e:
        raise ParameterError(f"cannot read config file: {e}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParameterError(f"malformed config file {path}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParameterError(f"config file {path} must contain a mapping")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    return data


def parse_number_list(value: Any, name: str) -> List[float]:
    """Comma-separated string or sequence of extended reals; errors name the position"""
    if isinstance(value, str):
        items = [item for item in value.split(",") if item.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    if not items:
        raise ParameterError(f"{name}: empty list")
    return [parse_extended_real(item, f"{name}[{i + 1}]") for i, item in enumerate(items)]


def _vector_or_scalar(value: Any, name: str) -> Any:
    values = parse_number_list(value, name)
    return values[0] if len(values) == 1 else values


def _class_params(file_value: Optional[Mapping[str, Any]], overrides: Mapping[str, Any],
                  name: str, shared_d: Optional[int] = None) -> Optional[ClassParams]:
    if file_value is not None and not isinstance(file_value, dict):
        raise ParameterError(f"{name} must be a mapping of {', '.join(CLASS_KEYS)}")
    merged: Dict[str, Any] = dict(file_value or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if not merged or set(merged) == {"d"}:
        return None
    if "d" not in merged and shared_d is not None:
        merged["d"] = shared_d
    unknown = set(merged) - set(CLASS_KEYS)
    if unknown:
        raise ParameterError(f"unknown {name} keys: {sorted(unknown)}")
    for key in ("beta", "r", "q"):
        if key not in merged:
            raise ParameterError(f"missing required field {name}.{key}")
    d = merged.get("d", 1)
    if isinstance(d, bool) or not isinstance(d, int):
        try:
            d = int(str(d))
        except ValueError:
            raise ParameterError(f"{name}.d: malformed integer {d!r}") from None
    return ClassParams.create(
        d,
        _vector_or_scalar(merged["beta"], f"{name}.beta"),
        _vector_or_scalar(merged["r"], f"{name}.r"),
        parse_extended_real(merged["q"], f"{name}.q"),
        _vector_or_scalar(merged.get("L", 1.0), f"{name}.L"),
        parse_extended_real(merged.get("Q", 1.0), f"{name}.Q"),
    )


def _int_field(value: Any, name: str, minimum: int) -> int:
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError:
            raise ParameterError(f"{name}: malformed integer {value!r}") from None
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not validate_positive_int(value, minimum):
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _n_grid(value: Any) -> List[int]:
    if isinstance(value, str):
        value = [item for item in value.split(",") if item.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    grid = [_int_field(v, f"n_grid[{i + 1}]", 3) for i, v in enumerate(value)]
    if not validate_n_grid(grid):
        raise ParameterError("n_grid must be a nonempty strictly increasing list of n >= 3")
    return grid


def _grid(value: Any) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ParameterError("grid must be a mapping")
    unknown = set(value) - GRID_KEYS
    if unknown:
        raise ParameterError(f"unknown grid keys: {sorted(unknown)}")
    kind = value.get("kind", "isotropic")
    if kind not in ("isotropic", "anisotropic", "random"):
        raise ParameterError(f"grid.kind must be isotropic, anisotropic or random, got {kind!r}")
    grid: Dict[str, Any] = {"kind": kind, "d": _int_field(value.get("d", 1), "grid.d", 1)}
    for key in ("betas", "rs", "qs"):
        if key in value:
            grid[key] = parse_number_list(value[key], f"grid.{key}")
    if "points" in value:
        grid["points"] = _int_field(value["points"], "grid.points", 1)
    return grid


def _enum(enum_cls: Any, value: Any, name: str) -> Any:
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value))
    except ValueError:
        choices = ", ".join(item.value for item in enum_cls)
        raise ParameterError(f"{name} must be one of {choices}, got {value!r}") from None


def parse_config(command: Command, flags: Optional[Mapping[str, Any]] = None,
                 config_path: Optional[str] = None) -> RunConfig:
    """
    Build a validated RunConfig

    Args:
        command: Subcommand being run
        flags: Command-line values; None entries count as absent. Class
            parameter flags are d, beta, r, q, L, Q and their *_prime twins
        config_path: Optional YAML/JSON file

    Returns:
        RunConfig with flags overriding file values

    Raises:
        ParameterError: unknown keys, malformed numbers, violated domains or
            a missing required field (named in the message)
    """
    flags = {k: v for k, v in (flags or {}).items() if v is not None and v != {}}
    data = load_config_file(config_path) if config_path else {}

    theta = _class_params(data.get("theta"), {k: flags.get(k) for k in CLASS_KEYS}, "theta")
    theta_prime = _class_params(
        data.get("theta_prime"), {k: flags.get(f"{k}_prime") for k in CLASS_KEYS},
        "theta_prime", shared_d=theta.d if theta else flags.get("d"))
    if theta and theta_prime and theta.d != theta_prime.d:
        raise ParameterError("theta and theta_prime must share the dimension d")

    values = dict(data)
    values.update({k: v for k, v in flags.items()
                   if k in CONFIG_KEYS and k not in ("theta", "theta_prime", "grid")})
    if "grid" in flags:
        file_grid = data.get("grid")
        values["grid"] = {**(file_grid if isinstance(file_grid, dict) else {}), **flags["grid"]}

    config = RunConfig(command=command, theta=theta, theta_prime=theta_prime)
    if "n" in values:
        config.n = _int_field(values["n"], "n", 3)
    if "n_grid" in values:
        config.n_grid = _n_grid(values["n_grid"])
    for key in ("kappa", "delta", "alpha"):
        if key in values:
            number = parse_extended_real(values[key], key)
            if key != "alpha" and not 0.0 < number < float("inf"):
                raise ParameterError(f"{key} must be finite and positive ({key} > 0)")
            setattr(config, key, number)
    if "big_n" in values:
        config.big_n = parse_extended_real(values["big_n"], "big_n")
        if not 1.0 <= config.big_n < float("inf"):
            raise ParameterError("big_n must satisfy 1 <= N < inf")
    if "seed" in values:
        seed = values["seed"]
        if isinstance(seed, str) and seed.strip().isdigit():
            seed = int(seed)
        if not validate_seed(seed):
            raise ParameterError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        config.seed = seed
    if "reps" in values:
        config.reps = _int_field(values["reps"], "reps", 1)
    elif command is Command.LEMMAS:
        config.reps = LEMMA_REPS
    if "samples" in values:
        config.samples = _int_field(values["samples"], "samples", 1)
    if "y_mc" in values:
        config.y_mc = _int_field(values["y_mc"], "y_mc", 100)
    if "bandwidths" in values:
        config.bandwidths = parse_number_list(values["bandwidths"], "bandwidths")
        if any(not 0.0 < h < float("inf") for h in config.bandwidths):
            raise ParameterError("bandwidths must be finite and positive (h > 0)")
    if "kernel" in values:
        config.kernel = _enum(KernelName, values["kernel"], "kernel")
    if "format" in values:
        config.format = _enum(OutputFormat, values["format"], "format")
    if "construction" in values:
        config.construction = _enum(Construction, values["construction"], "construction")
        if config.construction is Construction.SYNTHETIC:
            raise ParameterError("construction must be I or II")
    if "grid" in values:
        config.grid = _grid(values["grid"])

    config.out_dir = str(values.get("out_dir") or os.getenv(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    if not validate_out_dir(config.out_dir):
        raise ParameterError(f"out_dir is not writable: {config.out_dir}")

    for field_name in REQUIRED[command]:
        if getattr(config, field_name) is None:
            flag = "--seed" if field_name == "seed" else field_name
            raise ParameterError(f"missing required field {flag} for command {command.value}")
    if config.samples is not None and config.seed is None:
        raise ParameterError("missing required field --seed for --samples")
    if command is Command.CERTIFY and config.n is None and config.n_grid is None:
        raise ParameterError("missing required field n (or n_grid) for command certify")
    return config

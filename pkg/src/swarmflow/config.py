"""Run configuration: key-value config files, flag overrides, validation.

A config file is plain text, one ``key = value`` per line, ``#`` comments
allowed. Keys are dotted (``pso.particles``, ``space.learning_rate.hi``) and
every key has a default, so the empty config is valid. Overrides (from
command-line flags) win over file values, which win over defaults; the
merged result can be echoed back out as text, and feeding that echo back in
reproduces the same configuration.

Validation never stops at the first problem: `validate_config` returns the
full list of violations so an operator can fix a config in one pass.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .flow_data import SplitSpec
from .mlp import Hyperparameters, MlpConfig
from .seeds import derive_seed
from .tuner import SearchSpace

MODES = ("tune", "train-only", "evaluate", "compress-experiment", "synth")
WEIGHT_MODES = ("fixed", "proportional")


@dataclass(frozen=True)
class KeySpec:
    kind: str  # str | int | float | bool | opt_str | opt_float | int_list | str_list
    default: object


SCHEMA: dict[str, KeySpec] = {
    "mode": KeySpec("str", "tune"),
    "inputs": KeySpec("str_list", ()),
    "output_dir": KeySpec("str", "swarmflow-run"),
    "label_column": KeySpec("str", "label"),
    "positive_label": KeySpec("opt_str", None),
    "threshold": KeySpec("float", 0.5),
    "threshold.policy": KeySpec("str", "calibrated"),
    "master_seed": KeySpec("int", 0),
    "threads": KeySpec("int", 1),
    "model_file": KeySpec("opt_str", None),
    "normalization_file": KeySpec("opt_str", None),
    "split.train_fraction": KeySpec("float", 0.8),
    "split.stratified": KeySpec("bool", True),
    "model.layers": KeySpec("int_list", (13, 20, 40, 60, 80, 40, 10, 1)),
    "model.hidden_activation": KeySpec("str", "relu"),
    "model.output_activation": KeySpec("str", "sigmoid"),
    "weights.mode": KeySpec("str", "fixed"),
    "weights.normal": KeySpec("float", 4500.0),
    "weights.attack": KeySpec("float", 1.0),
    "hp.batch_size": KeySpec("int", 350),
    "hp.epochs": KeySpec("int", 2),
    "hp.learning_rate": KeySpec("float", 0.2),
    "space.batch_size.lo": KeySpec("int", 16),
    "space.batch_size.hi": KeySpec("int", 4096),
    "space.epochs.lo": KeySpec("int", 1),
    "space.epochs.hi": KeySpec("int", 20),
    "space.learning_rate.lo": KeySpec("float", 1e-4),
    "space.learning_rate.hi": KeySpec("float", 0.5),
    "pso.particles": KeySpec("int", 6),
    "pso.iterations": KeySpec("int", 4),
    "pso.variant": KeySpec("str", "inertia"),
    "pso.theta1": KeySpec("float", 2.0),
    "pso.theta2": KeySpec("float", 2.0),
    "pso.w_max": KeySpec("float", 0.9),
    "pso.w_min": KeySpec("float", 0.4),
    "pso.v_max": KeySpec("opt_float", None),
    "pso.constriction_form": KeySpec("str", "as_printed"),
    "synth.n": KeySpec("int", 2000),
    "synth.attack_fraction": KeySpec("float", 0.995),
    "synth.separation": KeySpec("float", 4.0),
    "synth.features": KeySpec("int", 13),
    "compress.weight_mode": KeySpec("str", "row_mean"),
}

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _coerce(key: str, raw: object) -> object:
    """Turn a raw (usually string) value into the key's typed value."""
    kind = SCHEMA[key].kind
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if kind == "str":
        return text
    if kind == "opt_str":
        return text or None
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "opt_float":
        return float(text) if text else None
    if kind == "bool":
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "int_list":
        return tuple(int(part) for part in text.split(",") if part.strip())
    if kind == "str_list":
        return tuple(part.strip() for part in text.split(",") if part.strip())
    raise ValueError(f"unknown kind {kind!r}")


def _render(key: str, value: object) -> str:
    kind = SCHEMA[key].kind
    if value is None:
        return ""
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("int_list", "str_list"):
        return ",".join(str(v) for v in value)
    if kind in ("float", "opt_float"):
        return repr(float(value))
    return str(value)


class RunConfig:
    """Merged, typed configuration for one pipeline run."""

    def __init__(self, values: Mapping[str, object] | None = None):
        merged = {key: spec.default for key, spec in SCHEMA.items()}
        if values:
            for key, value in values.items():
                if key not in SCHEMA:
                    raise ConfigError(f"unknown configuration key {key!r}")
                merged[key] = value
        self._values = merged

    def get(self, key: str) -> object:
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown configuration key {key!r}") from None

    def echo(self) -> dict[str, str]:
        """All keys rendered back to config-file text form, sorted."""
        return {key: _render(key, self._values[key]) for key in sorted(self._values)}

    def echo_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.echo().items()) + "\n"

    # Typed views onto the underlying modules.

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            train_fraction=float(self.get("split.train_fraction")),
            seed=derive_seed(int(self.get("master_seed")), "split"),
            stratified=bool(self.get("split.stratified")),
        )

    def mlp_config(self, input_size: int | None = None, class_weight_normal: float | None = None) -> MlpConfig:
        layers = tuple(self.get("model.layers"))
        if input_size is not None:
            layers = (input_size,) + layers[1:]
        normal = class_weight_normal
        if normal is None:
            normal = float(self.get("weights.normal"))
        return MlpConfig(
            layer_sizes=layers,
            hidden_activation=str(self.get("model.hidden_activation")),
            output_activation=str(self.get("model.output_activation")),
            class_weight_normal=normal,
            class_weight_attack=float(self.get("weights.attack")),
            init_seed=derive_seed(int(self.get("master_seed")), "init"),
        )

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(
            batch_size=int(self.get("hp.batch_size")),
            epochs=int(self.get("hp.epochs")),
            learning_rate=float(self.get("hp.learning_rate")),
        )

    def search_spaces(self) -> tuple[SearchSpace, ...]:
        return (
            SearchSpace(
                "batch_size",
                int(self.get("space.batch_size.lo")),
                int(self.get("space.batch_size.hi")),
                "int",
            ),
            SearchSpace(
                "epochs",
                int(self.get("space.epochs.lo")),
                int(self.get("space.epochs.hi")),
                "int",
            ),
            SearchSpace(
                "learning_rate",
                float(self.get("space.learning_rate.lo")),
                float(self.get("space.learning_rate.hi")),
                "log10",
            ),
        )

    def pso_kwargs(self) -> dict:
        return {
            "n_particles": int(self.get("pso.particles")),
            "n_iterations": int(self.get("pso.iterations")),
            "variant": str(self.get("pso.variant")),
            "theta1": float(self.get("pso.theta1")),
            "theta2": float(self.get("pso.theta2")),
            "w_max": float(self.get("pso.w_max")),
            "w_min": float(self.get("pso.w_min")),
            "v_max": self.get("pso.v_max"),
            "constriction_form": str(self.get("pso.constriction_form")),
        }


def parse_config_text(text: str, source: str = "<config>") -> tuple[dict[str, str], list[str]]:
    """Raw key/value pairs plus any line-level problems."""
    values: dict[str, str] = {}
    errors: list[str] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"{source}: line {line_no}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values, errors


def load_config_file(path: str | Path) -> tuple[dict[str, str], list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _writable_dir_error(path_text: str) -> str | None:
    path = Path(path_text)
    if path.exists():
        if not path.is_dir():
            return f"output_dir {path_text!r} exists and is not a directory"
        if not os.access(path, os.W_OK):
            return f"output_dir {path_text!r} is not writable"
        return None
    for parent in path.absolute().parents:
        if parent.exists():
            if not os.access(parent, os.W_OK):
                return f"output_dir {path_text!r} cannot be created (no write access to {parent})"
            return None
    return f"output_dir {path_text!r} cannot be created"


def validate_run_config(cfg: RunConfig) -> list[str]:
    """All semantic violations in the merged configuration, in key order."""
    errors: list[str] = []

    def check(condition: bool, message: str) -> None:
        if not condition:
            errors.append(message)

    mode = cfg.get("mode")
    check(mode in MODES, f"mode must be one of {', '.join(MODES)}, got {mode!r}")

    dir_error = _writable_dir_error(str(cfg.get("output_dir")))
    if dir_error:
        errors.append(dir_error)
    threshold = cfg.get("threshold")
    check(0.0 <= threshold <= 1.0, f"threshold must be in [0, 1], got {threshold}")
    check(cfg.get("threshold.policy") in ("calibrated", "fixed"),
          f"threshold.policy must be calibrated or fixed, got {cfg.get('threshold.policy')!r}")
    check(cfg.get("threads") >= 1, "threads must be at least 1")

    frac = cfg.get("split.train_fraction")
    check(0.0 < frac < 1.0, f"split.train_fraction must be in (0, 1), got {frac}")

    layers = cfg.get("model.layers")
    check(len(layers) >= 3, "model.layers needs input, at least one hidden, and output sizes")
    check(all(n >= 1 for n in layers), "model.layers entries must be positive")
    check(not layers or layers[-1] == 1, "model.layers must end with a single output unit")
    for key in ("model.hidden_activation", "model.output_activation"):
        value = cfg.get(key)
        check(value in ("relu", "sigmoid"), f"{key} must be relu or sigmoid, got {value!r}")

    check(cfg.get("weights.mode") in WEIGHT_MODES,
          f"weights.mode must be one of {WEIGHT_MODES}, got {cfg.get('weights.mode')!r}")
    check(cfg.get("weights.normal") > 0, "weights.normal must be strictly positive")
    check(cfg.get("weights.attack") > 0, "weights.attack must be strictly positive")

    check(cfg.get("hp.batch_size") >= 1, "hp.batch_size must be at least 1")
    check(cfg.get("hp.epochs") >= 1, "hp.epochs must be at least 1")
    lr = cfg.get("hp.learning_rate")
    check(0.0 < lr < 1.0, f"hp.learning_rate must be in (0, 1), got {lr}")

    for name in ("batch_size", "epochs"):
        lo, hi = cfg.get(f"space.{name}.lo"), cfg.get(f"space.{name}.hi")
        check(lo >= 1, f"{name} lo must be at least 1")
        check(lo < hi, f"{name} lo must be < hi")
    lr_lo, lr_hi = cfg.get("space.learning_rate.lo"), cfg.get("space.learning_rate.hi")
    check(lr_lo > 0, "learning_rate lo must be > 0")
    check(lr_hi < 1, "learning_rate hi must be < 1")
    check(lr_lo < lr_hi, "learning_rate lo must be < hi")

    check(cfg.get("pso.particles") >= 1, "pso.particles must be at least 1")
    check(cfg.get("pso.iterations") >= 0, "pso.iterations must be nonnegative")
    check(cfg.get("pso.theta1") > 0, "pso.theta1 must be strictly positive")
    check(cfg.get("pso.theta2") > 0, "pso.theta2 must be strictly positive")
    check(cfg.get("pso.w_max") >= cfg.get("pso.w_min"), "pso.w_max must be >= pso.w_min")
    v_max = cfg.get("pso.v_max")
    check(v_max is None or v_max > 0, "pso.v_max must be strictly positive when set")
    variant = cfg.get("pso.variant")
    check(variant in ("original", "inertia", "constriction"),
          f"pso.variant must be original, inertia or constriction, got {variant!r}")
    if variant == "constriction":
        check(cfg.get("pso.theta1") + cfg.get("pso.theta2") > 4.0,
              "constriction variant requires theta1 + theta2 > 4")
    form = cfg.get("pso.constriction_form")
    check(form in ("as_printed", "standard"),
          f"pso.constriction_form must be as_printed or standard, got {form!r}")

    check(cfg.get("synth.n") >= 2, "synth.n must be at least 2")
    synth_frac = cfg.get("synth.attack_fraction")
    check(0.0 < synth_frac < 1.0, f"synth.attack_fraction must be in (0, 1), got {synth_frac}")
    check(cfg.get("synth.separation") >= 0, "synth.separation must be nonnegative")
    check(cfg.get("synth.features") >= 1, "synth.features must be at least 1")

    check(cfg.get("compress.weight_mode") in ("row_mean", "global_mean"),
          "compress.weight_mode must be row_mean or global_mean")

    if mode == "evaluate":
        check(bool(cfg.get("model_file")), "evaluate mode requires model_file")
        check(bool(cfg.get("inputs")), "evaluate mode requires an input dataset")
    return errors


def validate_config(
    file_values: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> tuple[RunConfig | None, list[str]]:
    """Merge file values and overrides over defaults; report every problem.

    Returns the merged config and an empty list when clean, or None and the
    full violation list (unknown keys, type errors, then semantic checks
    against whatever could be merged).
    """
    errors: list[str] = []
    merged: dict[str, object] = {}
    for layer in (file_values or {}, overrides or {}):
        for key, raw in layer.items():
            if key not in SCHEMA:
                errors.append(f"unknown configuration key {key!r}")
                continue
            try:
                merged[key] = _coerce(key, raw)
            except ValueError as exc:
                errors.append(f"{key}: invalid value {raw!r} ({exc})")
    cfg = RunConfig(merged)
    errors.extend(validate_run_config(cfg))
    if errors:
        return None, errors
    return cfg, []


def require_valid(
    file_values: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> RunConfig:
    cfg, errors = validate_config(file_values, overrides)
    if cfg is None:
        raise ConfigError(
            "invalid configuration:\n" + "\n".join(f"- {e}" for e in errors),
            details=errors,
        )
    return cfg

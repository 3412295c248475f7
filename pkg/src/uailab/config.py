"""Run configuration: strict JSON schema, defaults and a reproducible hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction

import jsonschema

from uailab.bayesexp import AgentConfig
from uailab.errors import SchemaError
from uailab.values.discount import DiscountSchedule

RATIONAL = {"type": "string", "pattern": r"^[0-9]+(/[0-9]+)?$"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "machine": {"type": "string"},
        "class": {"type": "string"},
        "true_env": {"type": "string"},
        "discount": {"type": "string", "pattern": r"^(geometric|table):"},
        "schedule": {"enum": ["inverse-sqrt", "constant"]},
        "epsilon": RATIONAL,
        "eps_trunc": RATIONAL,
        "force_explore": {"type": "boolean"},
        "exact": {"type": "boolean"},
        "steps": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_steps": {"type": "integer", "minimum": 1},
                "max_prefix_len": {"type": "integer", "minimum": 1},
                "planner_nodes": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "machine": "reference",
    "class": "benchmark",
    "discount": "geometric:1/2",
    "schedule": "inverse-sqrt",
    "eps_trunc": "1/1000",
    "force_explore": False,
    "exact": False,
    "steps": 1000,
    "seed": 0,
    "out": "uailab-out",
    "caps": {"max_steps": 10_000_000, "max_prefix_len": 24, "planner_nodes": 10_000_000},
}


@dataclass(frozen=True)
class RunConfig:
    machine: str
    env_class: str
    true_env: str | None
    discount: DiscountSchedule
    schedule: str
    epsilon: Fraction | None
    eps_trunc: Fraction
    force_explore: bool
    exact: bool
    steps: int
    seed: int
    out: str
    caps: dict
    canonical: dict

    @property
    def hash(self) -> str:
        return config_hash(self.canonical)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            discount=self.discount,
            epsilon=self.epsilon if self.schedule == "constant" else None,
            eps_trunc=self.eps_trunc,
            force_explore=self.force_explore,
            exact=self.exact,
            planner_nodes=self.caps["planner_nodes"],
        )


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts.extend(extra[:1])
    return ".".join(parts)


def canonical_bytes(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode()


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    return hashlib.sha256(canonical_bytes(data)).hexdigest()


def _rational(data: dict, key: str) -> Fraction:
    try:
        return Fraction(data[key])
    except (ValueError, ZeroDivisionError):
        raise SchemaError(key, f"not a rational number: {data[key]!r}") from None


def parse_config(raw: bytes | str | dict) -> RunConfig:
    """Validate a JSON config strictly and fill in defaults."""
    if isinstance(raw, dict):
        data = raw
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("", "config must be a JSON object")
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        raise SchemaError(_error_path(errors[0]), errors[0].message)
    merged = {**DEFAULTS, **data, "caps": {**DEFAULTS["caps"], **data.get("caps", {})}}
    if merged["schedule"] == "constant" and "epsilon" not in merged:
        raise SchemaError("epsilon", "a constant schedule needs an epsilon value")
    try:
        discount = DiscountSchedule.parse(merged["discount"])
    except (ValueError, ZeroDivisionError) as exc:
        raise SchemaError("discount", str(exc)) from None
    epsilon = _rational(merged, "epsilon") if "epsilon" in merged else None
    if epsilon is not None and epsilon <= 0:
        raise SchemaError("epsilon", "epsilon must be positive")
    eps_trunc = _rational(merged, "eps_trunc")
    if not 0 < eps_trunc < 1:
        raise SchemaError("eps_trunc", "eps_trunc must lie in (0, 1)")
    return RunConfig(
        machine=merged["machine"],
        env_class=merged["class"],
        true_env=merged.get("true_env"),
        discount=discount,
        schedule=merged["schedule"],
        epsilon=epsilon,
        eps_trunc=eps_trunc,
        force_explore=merged["force_explore"],
        exact=merged["exact"],
        steps=merged["steps"],
        seed=merged["seed"],
        out=merged["out"],
        caps=merged["caps"],
        canonical=merged,
    )

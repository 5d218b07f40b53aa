"""Scenario configuration: strict JSON schema mapped to simulation objects.

Unknown keys are rejected everywhere so that typos surface as config
errors instead of silently running a different scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controllers import ConstantGainController, GainFunctions, TimeVaryingGainController
from .errchain import ErrorChainParams
from .funnels import FunnelFunction
from .plants import MassOnCarPlant
from .sim import CosineReference, IntegratorConfig, PolynomialSplineReference

__all__ = ["ConfigError", "Scenario", "parse_scenario", "load_scenario", "apply_override"]


class ConfigError(ValueError):
    pass


def _check_keys(section, allowed, required, context):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(section)
    if missing:
        raise ConfigError(f"{context}: missing key(s) {sorted(missing)}")


def _number(section, key, context):
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{context}.{key}: expected a number, got {v!r}")
    return float(v)


@dataclass
class Scenario:
    """Validated scenario: simulation objects plus the raw config echo."""

    raw: dict
    plant: MassOnCarPlant
    controllers: list  # (label, controller) pairs
    reference: object
    funnel: FunnelFunction
    integrator: IntegratorConfig
    x0: np.ndarray
    out: dict

    @property
    def controller(self):
        return self.controllers[0][1]

    def chain_for(self, controller):
        chain = getattr(controller, "chain", None)
        if chain is not None:
            return chain
        return ErrorChainParams(
            k=self.funnel.alpha + 2.0,
            r=self.plant.relative_degree,
            m=self.plant.output_dim,
        )

    def initial_error_stack(self):
        t0 = self.integrator.t0
        out = self.plant.output_stack(self.x0)
        return out - self.reference.stack(t0, self.plant.relative_degree)


def _build_funnel(section):
    _check_keys(
        section,
        allowed=("family", "a", "lambda", "c", "alpha", "beta"),
        required=("family", "c", "alpha", "beta"),
        context="funnel",
    )
    family = section["family"]
    alpha = _number(section, "alpha", "funnel")
    beta = _number(section, "beta", "funnel")
    c = _number(section, "c", "funnel")
    try:
        if family == "exponential":
            if "a" not in section or "lambda" not in section:
                raise ConfigError("funnel: exponential family needs keys 'a' and 'lambda'")
            return FunnelFunction.exponential(
                a=_number(section, "a", "funnel"),
                lam=_number(section, "lambda", "funnel"),
                c=c,
                alpha=alpha,
                beta=beta,
            )
        if family == "constant":
            return FunnelFunction.constant(c=c, alpha=alpha, beta=beta)
    except ValueError as exc:
        raise ConfigError(f"funnel: {exc}") from exc
    raise ConfigError(f"funnel: unknown family {family!r}")


def _build_plant(section):
    _check_keys(
        section,
        allowed=("plant", "m1", "m2", "c", "delta", "theta"),
        required=("plant",),
        context="plant",
    )
    kind = section["plant"]
    if kind != "mass_on_car":
        raise ConfigError(f"plant: unknown kind {kind!r} (scenario configs support 'mass_on_car')")
    kwargs = {k: _number(section, k, "plant") for k in ("m1", "m2", "c", "delta", "theta") if k in section}
    try:
        return MassOnCarPlant(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"plant: {exc}") from exc


def _build_gains(section, context):
    try:
        return GainFunctions(
            surjection=section.get("N", "neg_identity"),
            bijection=section.get("gamma", "reciprocal"),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _build_controller(section, funnel, plant):
    if not isinstance(section, dict) or "controller" not in section:
        raise ConfigError("controller: missing 'controller' kind")
    kind = section["controller"]
    r = plant.relative_degree
    m = plant.output_dim
    if kind == "new_fc":
        _check_keys(
            section,
            allowed=("controller", "k", "N", "gamma"),
            required=("controller",),
            context="controller",
        )
        k = _number(section, "k", "controller") if "k" in section else funnel.alpha + 2.0
        try:
            return ConstantGainController(
                chain=ErrorChainParams(k=k, r=r, m=m),
                alpha=funnel.alpha,
                beta=funnel.beta,
                gains=_build_gains(section, "controller"),
            )
        except ValueError as exc:
            raise ConfigError(f"controller: {exc}") from exc
    if kind == "legacy_fc":
        _check_keys(
            section,
            allowed=("controller", "stage_scale", "N", "gamma"),
            required=("controller",),
            context="controller",
        )
        scale = _number(section, "stage_scale", "controller") if "stage_scale" in section else 2.0
        try:
            return TimeVaryingGainController.from_base_funnel(
                funnel, r, stage_scale=scale, gains=_build_gains(section, "controller"), m=m
            )
        except ValueError as exc:
            raise ConfigError(f"controller: {exc}") from exc
    raise ConfigError(f"controller: unknown kind {kind!r}")


def _build_reference(section):
    if section is None:
        return CosineReference()
    _check_keys(
        section,
        allowed=("reference", "amplitude", "frequency", "phase", "knots", "coefficients", "smoothness"),
        required=("reference",),
        context="reference",
    )
    kind = section["reference"]
    if kind == "cosine":
        kwargs = {
            k: _number(section, k, "reference")
            for k in ("amplitude", "frequency", "phase")
            if k in section
        }
        return CosineReference(**kwargs)
    if kind == "spline":
        try:
            return PolynomialSplineReference(
                knots=tuple(section.get("knots", ())),
                coefficients=tuple(tuple(row) for row in section.get("coefficients", ())),
                smoothness=int(section.get("smoothness", 3)),
            )
        except ValueError as exc:
            raise ConfigError(f"reference: {exc}") from exc
    raise ConfigError(f"reference: unknown kind {kind!r}")


def _build_integrator(section):
    if section is None:
        return IntegratorConfig()
    _check_keys(
        section,
        allowed=("method", "dt", "t0", "t_end", "log_stride", "rtol", "atol", "dt_min", "hold"),
        required=(),
        context="integrator",
    )
    kwargs = dict(section)
    try:
        if "log_stride" in kwargs:
            kwargs["log_stride"] = int(kwargs["log_stride"])
        return IntegratorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def _build_initial_state(section, plant):
    _check_keys(
        section,
        allowed=("z", "s", "z_dot", "s_dot"),
        required=("z", "s", "z_dot", "s_dot"),
        context="initial_state",
    )
    return np.array(
        [
            _number(section, "z", "initial_state"),
            _number(section, "s", "initial_state"),
            _number(section, "z_dot", "initial_state"),
            _number(section, "s_dot", "initial_state"),
        ]
    )


_TOP_KEYS = ("plant", "controller", "controllers", "reference", "funnel", "integrator", "initial_state", "output")


def parse_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario config must be a JSON object")
    _check_keys(raw, allowed=_TOP_KEYS, required=("plant", "funnel", "initial_state"), context="scenario")
    if ("controller" in raw) == ("controllers" in raw):
        raise ConfigError("scenario: provide exactly one of 'controller' or 'controllers'")
    funnel = _build_funnel(raw["funnel"])
    plant = _build_plant(raw["plant"])
    if "controller" in raw:
        sections = [raw["controller"]]
    else:
        sections = raw["controllers"]
        if not isinstance(sections, list):
            raise ConfigError("scenario: 'controllers' must be a list")
    controllers = []
    seen = {}
    for section in sections:
        ctl = _build_controller(section, funnel, plant)
        base = section["controller"]
        seen[base] = seen.get(base, 0) + 1
        label = base if seen[base] == 1 else f"{base}_{seen[base]}"
        controllers.append((label, ctl))
    reference = _build_reference(raw.get("reference"))
    integrator = _build_integrator(raw.get("integrator"))
    x0 = _build_initial_state(raw["initial_state"], plant)
    out = raw.get("output", {})
    if out:
        _check_keys(out, allowed=("dir", "stem"), required=(), context="output")
    ref_smooth = getattr(reference, "smoothness", None)
    if ref_smooth is not None and ref_smooth < plant.relative_degree:
        raise ConfigError(
            f"reference: smoothness {ref_smooth} below plant order {plant.relative_degree}"
        )
    return Scenario(
        raw=raw,
        plant=plant,
        controllers=controllers,
        reference=reference,
        funnel=funnel,
        integrator=integrator,
        x0=x0,
        out=dict(out),
    )


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_scenario(raw)


def apply_override(raw: dict, dotted_key: str, value_text: str):
    """Apply a ``--set section.key=value`` override in place; values parse
    as JSON literals with a string fallback."""
    try:
        value = json.loads(value_text)
    except json.JSONDecodeError:
        value = value_text
    parts = dotted_key.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted_key}: {part} is not an object")
    node[parts[-1]] = value
    return raw

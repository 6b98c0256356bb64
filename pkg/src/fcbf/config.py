"""Flat structured-text scenario configs.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Keys match the scenario's leaf field names exactly; unknown keys are hard
errors so gain-name typos cannot pass silently. SI units implied.
"""

from __future__ import annotations

from pathlib import Path

from . import model
from .sim import ConfigError, Controller, GainSet, InputBounds, QpWeights, ScenarioConfig

_FLOAT_KEYS = (
    "dt", "horizon_T",
    "x", "y", "theta", "v", "uf1", "uf2",
    "k1", "k2", "k3", "alpha", "c3",
    "Q", "smoothness_weight",
    "tau",
    "mass_M", "obstacle_x", "obstacle_y", "obstacle_r",
    "goal_x", "goal_y", "goal_tol_rd",
    "u1_min", "u1_max", "u2_min", "u2_max",
)
_INT_KEYS = ("order_ma",)
_STR_KEYS = ("controller",)
KNOWN_KEYS = frozenset(_FLOAT_KEYS + _INT_KEYS + _STR_KEYS)
_OPTIONAL = frozenset({"order_ma", "smoothness_weight"})


def parse_kv_text(text: str) -> dict:
    """Raw key/value pairs from config-format text (values still strings)."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config_text(text: str) -> ScenarioConfig:
    pairs = parse_kv_text(text)
    unknown = sorted(set(pairs) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(KNOWN_KEYS - set(pairs) - _OPTIONAL)
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")

    vals = {}
    for key, raw in pairs.items():
        if key in _STR_KEYS:
            vals[key] = raw
            continue
        try:
            vals[key] = int(raw) if key in _INT_KEYS else float(raw)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number: {raw!r}") from exc

    try:
        controller = Controller(vals["controller"])
    except ValueError as exc:
        names = ", ".join(c.value for c in Controller)
        raise ConfigError(
            f"controller must be one of {names}, got {vals['controller']!r}"
        ) from exc

    default_w = 0.1 if controller is Controller.SP_HOCBF else 0.0
    config = ScenarioConfig(
        dt=vals["dt"],
        horizon_T=vals["horizon_T"],
        initial_state=model.SystemState(vals["x"], vals["y"], vals["theta"], vals["v"]),
        initial_uf=model.FilteredInput(vals["uf1"], vals["uf2"]),
        controller=controller,
        gains=GainSet.from_values(vals["k1"], vals["k2"], vals["k3"],
                                  vals["alpha"], vals["c3"]),
        qp=QpWeights(vals["Q"], vals.get("smoothness_weight", default_w)),
        filter=model.FilterParams(vals["tau"], vals.get("order_ma", 1)),
        unicycle=model.UnicycleParams(
            vals["mass_M"], vals["obstacle_x"], vals["obstacle_y"], vals["obstacle_r"],
            vals["goal_x"], vals["goal_y"], vals["goal_tol_rd"],
        ),
        input_bounds=InputBounds((vals["u1_min"], vals["u2_min"]),
                                 (vals["u1_max"], vals["u2_max"])),
    )
    config.validate()
    return config


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def format_config(config: ScenarioConfig) -> str:
    """Serialize a scenario back to config text (parse round trip)."""
    st = config.initial_state
    uf = config.initial_uf
    g = config.gains
    par = config.unicycle
    lo, hi = config.input_bounds.u_min, config.input_bounds.u_max
    items = [
        ("dt", config.dt), ("horizon_T", config.horizon_T),
        ("x", st.x), ("y", st.y), ("theta", st.theta), ("v", st.v),
        ("uf1", uf.uf1), ("uf2", uf.uf2),
        ("controller", config.controller.value),
        ("k1", g.k1.gain), ("k2", g.k2.gain), ("k3", g.k3.gain),
        ("alpha", g.alpha.gain), ("c3", g.c3.gain),
        ("Q", config.qp.Q), ("smoothness_weight", config.qp.smoothness_weight),
        ("tau", config.filter.tau), ("order_ma", config.filter.order_ma),
        ("mass_M", par.mass_M),
        ("obstacle_x", par.obstacle_x), ("obstacle_y", par.obstacle_y),
        ("obstacle_r", par.obstacle_r),
        ("goal_x", par.goal_x), ("goal_y", par.goal_y), ("goal_tol_rd", par.goal_tol_rd),
        ("u1_min", lo[0]), ("u1_max", hi[0]), ("u2_min", lo[1]), ("u2_max", hi[1]),
    ]
    return format_kv(items)


def format_kv(items) -> str:
    """key = value lines (the shared structured-text report format)."""
    lines = []
    for key, value in items:
        if isinstance(value, float):
            lines.append(f"{key} = {format(value, '.17g')}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

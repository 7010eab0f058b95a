"""Run configuration: INI-style sectioned key-value files.

Sections are [model], [grid], [basis], [stepper], [initial-data], [output].
Every key is typed and validated at load with its section/key location in
error messages; unknown sections or keys are rejected.  A RunConfig
serializes back to canonical text and re-parses to an equal value.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .potential import Potential, make_fene, make_hookean
from .qbasis import QBasis, build_basis
from .state import ModelParams
from .stepper import StepConfig
from .xgrid import TorusGrid

__all__ = ["RunConfig", "parse_config", "load_config", "config_to_text"]


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str):
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _parse_float_list(raw: str):
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


# section -> key -> (converter, default)
_SCHEMA = {
    "model": {
        "mu": (float, 1.0),
        "xi": (float, 1.0),
        "a": (float, 1.0),
        "gamma": (float, 2.0),
        "sigma": (float, 1.0),
        "r": (float, 1.0),
        "lam": (float, 1.0),
        "de": (float, 1.0),
        "ma": (float, 1.0),
        "potential": (str, "hookean"),
        "dim_q": (int, 3),
        "fene_k": (float, 2.0),
        "fene_b0": (float, 1.0),
    },
    "grid": {
        "dim_x": (int, 1),
        "nx": (_parse_int_list, (64,)),
        "length": (_parse_float_list, ()),
    },
    "basis": {
        "nq": (int, 8),
    },
    "stepper": {
        "dt": (float, 1e-2),
        "t_end": (float, 1.0),
        "scheme": (str, "imex"),
        "order": (int, 1),
        "picard_tol": (float, 1e-10),
        "picard_max_iter": (int, 8),
        "cfl_safety": (float, 0.5),
        "check_cfl": (_parse_bool, True),
        "audit": (_parse_bool, True),
        "eta": (float, 0.1),
    },
    "initial-data": {
        "family": (str, "zero"),
        "eps": (float, 0.0),
        "mode": (_parse_int_list, (1,)),
        "rho_amp": (float, 0.0),
        "u_amp": (float, 1.0),
        "g_amp": (float, 1.0),
        "g_mode": (int, 1),
        "snapshot": (str, ""),
    },
    "output": {
        "csv": (str, "out/run.csv"),
        "snapshot_dir": (str, ""),
        "snapshot_every": (int, 0),
        "seed": (int, 1234),
    },
}


@dataclass
class RunConfig:
    """Fully validated run description (plain values only)."""

    model: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)
    stepper: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    # -- builders ---------------------------------------------------------

    def make_params(self) -> ModelParams:
        m = self.model
        return ModelParams(
            mu=m["mu"], xi=m["xi"], a=m["a"], gamma=m["gamma"],
            sigma=m["sigma"], r=m["r"], lam=m["lam"], de=m["de"], ma=m["ma"],
        ).validate()

    def make_potential(self, check_stiffness: bool = True) -> Potential:
        m = self.model
        if m["potential"] == "hookean":
            return make_hookean(m["sigma"], m["r"], m["dim_q"])
        return make_fene(
            m["fene_k"], m["fene_b0"], m["sigma"], m["r"],
            check_stiffness=check_stiffness,
        )

    def make_grid(self) -> TorusGrid:
        g = self.grid
        lengths = g["length"] or tuple(2.0 * math.pi for _ in g["nx"])
        return TorusGrid(dims=g["nx"], lengths=lengths)

    def make_basis(self, potential: Potential | None = None) -> QBasis:
        return build_basis(potential or self.make_potential(), self.basis["nq"])

    def make_step_config(self, **overrides) -> StepConfig:
        s = dict(self.stepper)
        s["snapshot_every"] = self.output["snapshot_every"]
        s.update(overrides)
        return StepConfig(
            dt=s["dt"], t_end=s["t_end"], scheme=s["scheme"], order=s["order"],
            picard_tol=s["picard_tol"], picard_max_iter=s["picard_max_iter"],
            cfl_safety=s["cfl_safety"], check_cfl=s["check_cfl"],
            audit=s["audit"], eta=s["eta"],
            snapshot_every=s["snapshot_every"],
        ).validate()


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate sectioned key-value text."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed configuration: {err}") from err

    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError("unknown section", section=section)
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", section=section, key=key)

    for section, keys in _SCHEMA.items():
        sec_out = {}
        for key, (conv, default) in keys.items():
            if cp.has_option(section, key):
                raw = cp.get(section, key)
                try:
                    sec_out[key] = conv(raw)
                except (ValueError, TypeError) as err:
                    raise ConfigError(
                        f"cannot parse value {raw!r}: {err}", section=section, key=key
                    ) from err
            else:
                sec_out[key] = default
        values[section] = sec_out

    cfg = RunConfig(
        model=values["model"],
        grid=values["grid"],
        basis=values["basis"],
        stepper=values["stepper"],
        initial=values["initial-data"],
        output=values["output"],
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    m = cfg.model
    if m["potential"] not in ("hookean", "fene"):
        raise ConfigError(
            f"unknown potential {m['potential']!r}", section="model", key="potential"
        )
    if m["gamma"] < 1.0:
        raise ConfigError(
            f"pressure exponent must satisfy gamma >= 1, got {m['gamma']}",
            section="model", key="gamma",
        )
    if m["dim_q"] not in (1, 2, 3):
        raise ConfigError("dim_q must be 1, 2 or 3", section="model", key="dim_q")
    if m["potential"] == "fene" and m["dim_q"] != 1:
        raise ConfigError(
            "the finitely extensible potential is one-dimensional; set "
            "dim_q = 1",
            section="model", key="dim_q",
        )
    for key in ("mu", "xi", "a", "sigma", "r", "lam", "de", "ma"):
        if not math.isfinite(m[key]):
            raise ConfigError("value must be finite", section="model", key=key)
    try:
        cfg.make_params()
    except Exception as err:
        raise ConfigError(str(err), section="model") from err

    g = cfg.grid
    if g["dim_x"] not in (1, 2, 3):
        raise ConfigError("dim_x must be 1, 2 or 3", section="grid", key="dim_x")
    if len(g["nx"]) == 1 and g["dim_x"] > 1:
        g["nx"] = g["nx"] * g["dim_x"]
    if len(g["nx"]) != g["dim_x"]:
        raise ConfigError(
            f"nx needs {g['dim_x']} entries, got {len(g['nx'])}",
            section="grid", key="nx",
        )
    if g["length"] and len(g["length"]) == 1 and g["dim_x"] > 1:
        g["length"] = g["length"] * g["dim_x"]
    if g["length"] and len(g["length"]) != g["dim_x"]:
        raise ConfigError(
            f"length needs {g['dim_x']} entries, got {len(g['length'])}",
            section="grid", key="length",
        )
    if any(n <= 0 or n % 2 for n in g["nx"]):
        raise ConfigError("grid points must be positive and even",
                          section="grid", key="nx")
    if m["dim_q"] < g["dim_x"]:
        raise ConfigError(
            "configuration dimension must be at least the flow dimension",
            section="model", key="dim_q",
        )

    if cfg.basis["nq"] < 2:
        raise ConfigError("nq must be at least 2", section="basis", key="nq")

    try:
        cfg.make_step_config()
    except Exception as err:
        raise ConfigError(str(err), section="stepper") from err

    ini = cfg.initial
    if ini["family"] not in ("zero", "modal", "snapshot"):
        raise ConfigError(
            f"unknown family {ini['family']!r}", section="initial-data", key="family"
        )
    if ini["eps"] < 0:
        raise ConfigError("eps must be nonnegative", section="initial-data", key="eps")
    if ini["family"] == "snapshot":
        if not ini["snapshot"]:
            raise ConfigError(
                "snapshot family needs a snapshot path",
                section="initial-data", key="snapshot",
            )
        if not os.path.exists(ini["snapshot"]):
            raise ConfigError(
                f"snapshot file {ini['snapshot']!r} does not exist",
                section="initial-data", key="snapshot",
            )
    if len(ini["mode"]) == 1 and g["dim_x"] > 1:
        ini["mode"] = ini["mode"] * g["dim_x"]
    if len(ini["mode"]) != g["dim_x"]:
        raise ConfigError(
            f"mode needs {g['dim_x']} entries", section="initial-data", key="mode"
        )
    if ini["g_mode"] < 0:
        raise ConfigError(
            "g_mode must be nonnegative", section="initial-data", key="g_mode"
        )
    if cfg.output["snapshot_every"] < 0:
        raise ConfigError(
            "snapshot_every must be nonnegative", section="output",
            key="snapshot_every",
        )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read configuration {path!r}: {err}") from err


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: RunConfig) -> str:
    """Canonical serialization; parse_config round-trips it exactly."""
    names = {
        "model": cfg.model,
        "grid": cfg.grid,
        "basis": cfg.basis,
        "stepper": cfg.stepper,
        "initial-data": cfg.initial,
        "output": cfg.output,
    }
    lines = []
    for section, data in names.items():
        lines.append(f"[{section}]")
        for key in _SCHEMA[section]:
            lines.append(f"{key} = {_fmt(data[key])}")
        lines.append("")
    return "\n".join(lines)

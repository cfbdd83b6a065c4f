"""Named problem instances and the registry used by the command-line front end."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import cartpole, double_integrator, pusher, toy

NOISE_LEVELS = (1e-4, 1e-3, 1e-2, 5e-2)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    """One problem parameter.  ``kind`` is "int", "float", "bool", "str" or "vector"."""

    name: str
    kind: str
    default: object
    help: str = ""
    length: Optional[int] = None  # fixed length of a vector, None for any

    def parse(self, text: str):
        """Convert a command-line string."""
        try:
            if self.kind == "vector":
                return self.check([float(v) for v in text.split(",") if v.strip()])
            if self.kind == "bool":
                low = text.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                return low in ("true", "1", "yes")
            return self.check({"int": int, "float": float, "str": str}[self.kind](text))
        except (TypeError, ValueError) as exc:
            raise ParameterError(f"--{self.flag}: cannot read {text!r} as {self.kind}") from exc

    def check(self, value):
        """Type-check a value coming from JSON (or already parsed)."""
        bad = ParameterError(f"{self.name}: expected {self.kind}, got {value!r}")
        if self.kind == "vector":
            if isinstance(value, (str, bytes)) or not hasattr(value, "__len__"):
                raise bad
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise bad
            if self.length is not None and len(value) != self.length:
                raise ParameterError(f"{self.name}: expected {self.length} entries, got {len(value)}")
            return tuple(float(v) for v in value)
        if self.kind == "bool":
            if not isinstance(value, bool):
                raise bad
            return value
        if self.kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise bad
            return value
        if self.kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise bad
            return float(value)
        if not isinstance(value, str):
            raise bad
        return value

    @property
    def flag(self) -> str:
        return self.name.replace("_", "-")

    def schema(self) -> dict:
        out = {"name": self.name, "type": self.kind, "default": _jsonable(self.default), "help": self.help}
        if self.length is not None:
            out["length"] = self.length
        return out


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(e) for e in v]
    return v


@dataclass(frozen=True)
class ProblemEntry:
    name: str
    description: str
    params: Tuple[Param, ...]
    build: Callable[[dict, int], object]  # (params, seed) -> OCPDefinition or PhaseSequence
    relaxation: str = "per-pair-barrier"
    solver: Dict[str, object] = field(default_factory=dict)
    push: Optional[float] = None  # interior push of the initial guess, None for the default
    simulate: Optional[Callable] = None  # (params, seed) -> SysIdDataset
    estimate: Optional[Callable] = None  # (params, sigma, seed) -> dict

    def defaults(self) -> dict:
        return {p.name: p.default for p in self.params}

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise ParameterError(f"problem {self.name!r} has no parameter {name!r}")

    def resolve(self, overrides: dict) -> dict:
        """Defaults updated by ``overrides``, each override type-checked."""
        out = self.defaults()
        for k, v in overrides.items():
            out[k] = self.param(k).check(v)
        return out

    def schema(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "relaxation": self.relaxation,
            "solver": dict(self.solver),
            "params": [p.schema() for p in self.params],
            "commands": ["solve"] + (["simulate"] if self.simulate else []) + (["estimate"] if self.estimate else []),
        }


# --------------------------------------------------------------------------
# builders


def _pusher(a: dict, seed: int = 0):
    params = pusher.PusherSliderParams(mu_p=a["mu_p"], fn_max=a["fn_max"])
    return pusher.pusher_goal_ocp(a["init"], a["goal"], a["Ne"], a["T"], params)


def _pusher_modes(a: dict, seed: int = 0):
    faces = tuple(f.strip() for f in a["faces"].split(",") if f.strip())
    for f in faces:
        if f not in pusher.FACE_ANGLES:
            raise ParameterError(f"faces: unknown face {f!r}")
    params = pusher.PusherSliderParams(mu_p=a["mu_p"], fn_max=a["fn_max"])
    return pusher.pusher_mode_sequence(a["init"], a["goal"], faces, (a["Ne"],) * len(faces),
                                       (a["duration_min"], a["duration_max"]), params)


def _cartpole_inputs(a: dict, seed: int):
    rng = np.random.default_rng(seed)
    return cartpole.SumOfSines.draw(rng)(np.arange(a["Ne"]) * a["h"])


def _cartpole(a: dict, seed: int = 0):
    u = _cartpole_inputs(a, seed)
    return cartpole.cartpole_feasibility_ocp(a["p"], cartpole.SYSID_X0, u, a["h"])


def _cartpole_simulate(a: dict, seed: int):
    return cartpole.generate_sysid_data(a["p"], a["sigma"], seed, a["Ne"], a["h"])


def _cartpole_estimate(a: dict, sigma: float, seed: int) -> dict:
    ds = cartpole.generate_sysid_data(a["p"], sigma, seed, a["Ne"], a["h"])
    est = cartpole.estimate_parameters(ds)
    return {
        "seed": seed,
        "sigma": sigma,
        "status": est.status,
        "iterations": est.iterations,
        "params": est.params,
        "rel_errors": cartpole.relative_errors(est.params, a["p"]),
        "nrmse": est.nrmse,
        "seconds": est.seconds,
    }


def _double_integrator(a: dict, seed: int = 0):
    if a["min_time"]:
        return double_integrator.double_integrator_min_time_ocp(a["Ne"], a["u_max"], a["target"])
    return double_integrator.double_integrator_ocp(a["Ne"], a["T"], a["target"])


_PUSH_PARAMS = (
    Param("mu_p", "float", 0.3, "pusher-slider friction coefficient"),
    Param("fn_max", "float", 0.5, "largest normal force [N]"),
)

REGISTRY: Dict[str, ProblemEntry] = {}


def register(entry: ProblemEntry) -> ProblemEntry:
    if entry.name in REGISTRY:
        raise ValueError(f"problem {entry.name!r} already registered")
    REGISTRY[entry.name] = entry
    return entry


register(ProblemEntry(
    "pusher",
    "planar pushing to a goal pose, sticking and sliding contact",
    (
        Param("init", "vector", (0.0, 0.0, 0.0), "initial slider pose x,y,theta", 3),
        Param("goal", "vector", (0.0, 0.5, float(np.pi)), "goal slider pose x,y,theta", 3),
        Param("Ne", "int", 50, "finite elements"),
        Param("T", "float", 5.0, "horizon [s]"),
    ) + _PUSH_PARAMS,
    _pusher,
    solver={"max_iter": 1000},
))
register(ProblemEntry(
    "pusher-modes",
    "planar pushing through a fixed sequence of sticking faces with free phase durations",
    (
        Param("init", "vector", (0.0, 0.0, 0.0), "initial slider pose", 3),
        Param("goal", "vector", (0.0, 0.0, float(np.pi)), "goal slider pose", 3),
        Param("faces", "str", "left,top", "comma-separated face sequence"),
        Param("Ne", "int", 30, "finite elements per phase"),
        Param("duration_min", "float", 0.05, "lower bound of each phase duration [s]"),
        Param("duration_max", "float", 30.0, "upper bound of each phase duration [s]"),
    ) + _PUSH_PARAMS,
    _pusher_modes,
    solver={"max_iter": 1000},
))
register(ProblemEntry(
    "cartpole-softwall",
    "linear cart-pole between spring walls; solve replays a seeded input, estimate identifies (m_p, k1, k2)",
    (
        Param("p", "vector", tuple(cartpole.PARAM_SETS[0]), "true parameters m_p,k1,k2", 3),
        Param("Ne", "int", cartpole.SYSID_N, "time steps"),
        Param("h", "float", cartpole.SYSID_H, "step length [s]"),
        Param("sigma", "float", 0.0, "measurement noise std for simulate"),
        Param("sigmas", "vector", NOISE_LEVELS, "noise levels for estimate"),
        Param("realizations", "int", 50, "noise realizations per level for estimate"),
    ),
    _cartpole,
    solver=dict(cartpole.FEASIBILITY_SOLVER),
    simulate=_cartpole_simulate,
    estimate=_cartpole_estimate,
))
register(ProblemEntry(
    "double-integrator",
    "rest-to-rest double integrator, minimum energy or (min_time) minimum time",
    (
        Param("Ne", "int", 20, "finite elements"),
        Param("T", "float", 1.0, "horizon [s] for minimum energy"),
        Param("target", "float", 1.0, "final position"),
        Param("min_time", "bool", False, "minimise the duration instead"),
        Param("u_max", "float", 6.0, "input bound for minimum time"),
    ),
    _double_integrator,
))


def get(name: str) -> ProblemEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown problem {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


__all__ = [
    "NOISE_LEVELS",
    "Param",
    "ParameterError",
    "ProblemEntry",
    "REGISTRY",
    "cartpole",
    "double_integrator",
    "get",
    "pusher",
    "register",
    "toy",
]

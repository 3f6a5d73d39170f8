"""Scenario configuration files and dotted-key overrides.

Configs are JSON with nested sections mirroring dotted key paths
(``loads.eps_nu`` lives at ``{"loads": {"eps_nu": ...}}``).  Angles in
``ic.kepler`` are degrees; sigmas are km and km/s.  Command-line overrides use
``dotted.key=value`` with JSON-parsed values, last one wins.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .elements import ElementSet
from .forces import ForceConfig, SpacecraftParams
from .integrate import IntegratorConfig
from .pipeline import Scenario

__all__ = ["scenario_from_dict", "scenario_to_dict", "load_scenario",
           "apply_overrides", "config_hash", "bundled_scenario_path"]


def bundled_scenario_path(name: str) -> Path:
    from importlib import resources

    base = resources.files("orbuq.data").joinpath("scenarios")
    path = Path(str(base.joinpath(f"{name}.json")))
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path


def _get(d: dict, path: str, default=None):
    cur: Any = d
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def scenario_from_dict(obj: dict) -> Scenario:
    eset = ElementSet.parse(
        _get(obj, "elements.set", "cartesian"),
        _get(obj, "elements.fast_var"),
    )
    force = ForceConfig(
        mu=_get(obj, "hf.mu", 398600.4355),
        re_km=_get(obj, "hf.re_km", 6378.1363),
        degree=_get(obj, "hf.degree", 8),
        order=_get(obj, "hf.order", 8),
        third_body_sun=_get(obj, "hf.third_body_sun", True),
        third_body_moon=_get(obj, "hf.third_body_moon", True),
        drag=_get(obj, "hf.drag", False),
        srp=_get(obj, "hf.srp", True),
        drag_bulge_exponent=_get(obj, "hf.drag_bulge_exponent"),
        gravity_path=_get(obj, "hf.gravity_path"),
    )
    integrator = IntegratorConfig(
        tableau=_get(obj, "hf.tableau", "dp8"),
        abs_tol=_get(obj, "hf.abs_tol", 1e-12),
        rel_tol=_get(obj, "hf.rel_tol", 1e-12),
    )
    spacecraft = SpacecraftParams(
        mass=_get(obj, "spacecraft.mass", 500.0),
        area=_get(obj, "spacecraft.area", 1.0),
        cd=_get(obj, "spacecraft.cd", 2.0),
        cr=_get(obj, "spacecraft.cr", 1.5),
    )
    return Scenario(
        name=_get(obj, "scenario.name", "unnamed"),
        ic_kepler=tuple(_get(obj, "ic.kepler")),
        sigma_cartesian=tuple(_get(obj, "sigma.cartesian")),
        epoch_utc=_get(obj, "epoch_utc", "2021-01-01T00:00:00"),
        periods=_get(obj, "periods", 2.0),
        element_set=eset,
        eps_nu=_get(obj, "loads.eps_nu", 0.01),
        ci=_get(obj, "loads.ci", 3.0),
        n_max=_get(obj, "loads.n_max", 20),
        alpha_min=_get(obj, "loads.alpha_min", 1e-8),
        conversion_eps_nu=_get(obj, "loads.conversion_eps_nu", 0.01),
        library_size=_get(obj, "library.L", 3),
        library_lambda=_get(obj, "library.lambda", 1e-3),
        lf_theory=_get(obj, "lf.theory", "sgp4"),
        lf_j2=_get(obj, "lf.j2"),
        shift_mode=_get(obj, "shift.mode", "osculating"),
        seed=_get(obj, "seed", 42),
        force=force,
        integrator=integrator,
        spacecraft=spacecraft,
        ut_kappa=_get(obj, "ut.kappa"),
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "scenario": {"name": s.name},
        "ic": {"kepler": list(s.ic_kepler)},
        "sigma": {"cartesian": list(s.sigma_cartesian)},
        "epoch_utc": s.epoch_utc,
        "periods": s.periods,
        "elements": {
            "set": s.element_set.kind.value,
            "fast_var": s.element_set.fast.value if s.element_set.fast else None,
        },
        "loads": {
            "eps_nu": s.eps_nu,
            "ci": s.ci,
            "n_max": s.n_max,
            "alpha_min": s.alpha_min,
            "conversion_eps_nu": s.conversion_eps_nu,
        },
        "library": {"L": s.library_size, "lambda": s.library_lambda},
        "lf": {"theory": s.lf_theory, "j2": s.lf_j2},
        "shift": {"mode": s.shift_mode},
        "seed": s.seed,
        "ut": {"kappa": s.ut_kappa},
        "hf": {
            "mu": s.force.mu,
            "re_km": s.force.re_km,
            "degree": s.force.degree,
            "order": s.force.order,
            "third_body_sun": s.force.third_body_sun,
            "third_body_moon": s.force.third_body_moon,
            "drag": s.force.drag,
            "srp": s.force.srp,
            "drag_bulge_exponent": s.force.drag_bulge_exponent,
            "gravity_path": s.force.gravity_path,
            "tableau": s.integrator.tableau,
            "abs_tol": s.integrator.abs_tol,
            "rel_tol": s.integrator.rel_tol,
        },
        "spacecraft": {
            "mass": s.spacecraft.mass,
            "area": s.spacecraft.area,
            "cd": s.spacecraft.cd,
            "cr": s.spacecraft.cr,
        },
    }


def apply_overrides(obj: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` strings (JSON-parsed values, last wins)."""
    out = json.loads(json.dumps(obj))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cur = out
        parts = key.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
            if not isinstance(cur, dict):
                raise ValueError(f"override path {key!r} crosses a non-object")
        cur[parts[-1]] = value
    return out


def load_scenario(path: str | Path, overrides: list[str] | None = None
                  ) -> tuple[Scenario, dict]:
    """Read a config file (or bundled name) and apply overrides."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled_scenario_path(str(path))
    with open(p) as fh:
        obj = json.load(fh)
    if overrides:
        obj = apply_overrides(obj, overrides)
    return scenario_from_dict(obj), obj


def config_hash(obj: dict) -> str:
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]

"""Bundled test fixtures: small hand-built cases with known behavior.

case2 / case3      tiny fixed-frequency cases whose optima are verified
                   against a brute-force dispatch oracle in the test suite.
case3r + fopf ext  radial case for the converter pass-through property.
corridor + ext     congested north-south corridor with one long upgradeable
                   tie; produces the angle / thermal / voltage-drop sweep
                   regimes.
corridor_light     uncongested lossless variant of the corridor.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

CASES = {
    "case2": "case2.m",
    "case3": "case3.m",
    "case3r": "case3r.m",
    "corridor": "corridor.m",
    "corridor-light": "corridor_light.m",
}

EXTENSIONS = {
    "case3r-fopf": "case3r_fopf.yaml",
    "corridor-lfac": "corridor_lfac.yaml",
    "corridor-light-lfac": "corridor_light_lfac.yaml",
}


def case_path(name: str) -> Path:
    """Filesystem path of a bundled case or extension by registry name."""
    table = CASES if name in CASES else EXTENSIONS
    if name not in table:
        raise KeyError(f"unknown bundled fixture {name!r}; "
                       f"known: {sorted(CASES) + sorted(EXTENSIONS)}")
    return Path(resources.files(__package__) / table[name])


def resolve(spec: str) -> Path:
    """Resolve a CLI --case/--ext value: a real path wins, then the registry."""
    p = Path(spec)
    if p.exists():
        return p
    if spec in CASES or spec in EXTENSIONS:
        return case_path(spec)
    raise FileNotFoundError(f"{spec!r} is neither a file nor a bundled fixture name")

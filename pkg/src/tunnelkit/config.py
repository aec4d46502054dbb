"""Run configuration: flat TOML sections, strictly validated.

Example::

    [potential]
    terms = [[0.25, 4, 0], [-0.5, 2, 0], [0.25, 0, 0], [1.0, 0, 2]]

    [run]
    h = [0.1, 0.05]
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, ValidationError

TOLERANCES = {
    "tol_contour": 1e-10,
    "tol_shell": 1e-6,
    "tol_cycle": 1e-4,
    "tol_eig": 1e-8,
    "tol_transport": 1e-3,
    "tol_fit": 1e-6,
    "tol_resonance": 1e-3,
    "tol_hess": 1e-8,
}

SCHEMA = {
    "potential": {"terms": None},
    "grid": {"half_width": 2.0, "half_height": 1.5, "n": 256, "n2": None},
    "run": {"h": None, "E0": 0.3, "energy": 0.0, "alpha": [0, 0], "output": "tunnelkit-out",
            "project_umbilics": True, "with_reference": False, "energy_window_delta": 0.5,
            "jobs": 1},
    "tolerances": dict(TOLERANCES),
    "reference": {"half_width": 2.2, "half_height": 1.3, "n": 256, "n2": 128,
                  "points_per_scale": 8, "max_nodes": 262144},
}


@dataclass(frozen=True)
class RunConfig:
    terms: tuple
    grid: dict
    h: tuple
    E0: float
    energy: float
    alpha: tuple
    output: str
    project_umbilics: bool
    with_reference: bool
    energy_window_delta: float
    jobs: int
    tolerances: dict
    reference: dict
    warnings: tuple = field(default=(), compare=False)

    def model(self):
        from .potential import PotentialModel
        return PotentialModel([tuple(t) for t in self.terms])

    def grid_spec(self):
        from .grid import GridSpec
        g = self.grid
        return GridSpec.symmetric(g["half_width"], g["half_height"], g["n"], g["n2"])

    def reference_grid(self):
        from .grid import GridSpec
        r = self.reference
        return GridSpec.symmetric(r["half_width"], r["half_height"], r["n"], r["n2"])

    def effective(self):
        """Sectioned dict of every setting, defaults filled in."""
        d = asdict(self)
        return {
            "potential": {"terms": [list(t) for t in d["terms"]]},
            "grid": dict(d["grid"]),
            "run": {k: d[k] for k in SCHEMA["run"]},
            "tolerances": dict(d["tolerances"]),
            "reference": dict(d["reference"]),
        }


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg):
    """TOML text of the effective configuration (stable key order)."""
    lines = []
    for sec, vals in cfg.effective().items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {_fmt(v)}" for k, v in vals.items()]
        lines.append("")
    return "\n".join(lines)


def _is_pow2_multiple_of_16(n):
    return isinstance(n, int) and n >= 16 and n % 16 == 0 and ((n // 16) & (n // 16 - 1)) == 0


def _number(sec, key, v, positive=False, integer=False):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if not ok or isinstance(v, bool):
        raise ValidationError(f"{sec}.{key} must be {'an integer' if integer else 'a number'}",
                              key=key)
    if positive and not v > 0:
        raise ValidationError(f"{sec}.{key} must be positive", key=key)
    return v if integer else float(v)


def _parse_line_col(exc, text):
    """1-based position of a decode error; end of text for "end of document" errors."""
    import re
    if getattr(exc, "lineno", None) is not None:
        return exc.lineno, exc.colno
    m = re.search(r"line (\d+), column (\d+)", str(exc))
    if m:
        return int(m.group(1)), int(m.group(2))
    lines = text.split("\n")
    return len(lines), len(lines[-1]) + 1


def loads(text):
    """Parse configuration text into a ``RunConfig``.

    Raises
    ------
    ParseError
        On TOML syntax errors, with ``line`` and ``column``.
    ValidationError
        On unknown, missing or ill-typed keys; ``key`` names the culprit.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = _parse_line_col(exc, text)
        raise ParseError(str(exc), line, col) from exc
    warnings = []
    vals = {}
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ValidationError(f"unknown key {sec!r}", key=sec)
        if not isinstance(body, dict):
            raise ValidationError(f"{sec!r} must be a section", key=sec)
        for k in body:
            if k not in SCHEMA[sec]:
                raise ValidationError(f"unknown key {k!r} in [{sec}]", key=k)
    for sec, defaults in SCHEMA.items():
        body = raw.get(sec, {})
        vals[sec] = {k: body.get(k, d) for k, d in defaults.items()}

    terms = vals["potential"]["terms"]
    if terms is None:
        raise ValidationError("[potential] terms is required", key="terms")
    if not isinstance(terms, list) or not terms:
        raise ValidationError("terms must be a non-empty list of [coefficient, a, b]", key="terms")
    clean = []
    for t in terms:
        if (not isinstance(t, list) or len(t) != 3 or isinstance(t[0], bool)
                or not isinstance(t[0], (int, float))
                or not all(isinstance(e, int) and not isinstance(e, bool) and e >= 0 for e in t[1:])):
            raise ValidationError(f"bad potential term {t!r}", key="terms")
        clean.append((float(t[0]), int(t[1]), int(t[2])))

    g = vals["grid"]
    g["half_width"] = _number("grid", "half_width", g["half_width"], positive=True)
    g["half_height"] = _number("grid", "half_height", g["half_height"], positive=True)
    if g["n2"] is None:
        g["n2"] = g["n"]
    for k in ("n", "n2"):
        if not _is_pow2_multiple_of_16(g[k]) or isinstance(g[k], bool):
            raise ValidationError(f"grid.{k} must be a power-of-two multiple of 16", key=k)

    r = vals["run"]
    h = r["h"]
    if h is None:
        raise ValidationError("[run] h is required", key="h")
    hs = h if isinstance(h, list) else [h]
    if not hs:
        raise ValidationError("h list is empty", key="h")
    hs = [_number("run", "h", v, positive=True) for v in hs]
    if hs != sorted(hs, reverse=True):
        warnings.append({"warning": "h_resorted", "key": "h", "given": hs})
        hs = sorted(hs, reverse=True)
    E0 = _number("run", "E0", r["E0"], positive=True)
    energy = _number("run", "energy", r["energy"])
    if energy < 0:
        raise ValidationError("run.energy must be >= 0", key="energy")
    alpha = r["alpha"]
    if (not isinstance(alpha, list) or len(alpha) != 2
            or not all(isinstance(a, int) and not isinstance(a, bool) and a >= 0 for a in alpha)):
        raise ValidationError("run.alpha must be two non-negative integers", key="alpha")
    for k in ("project_umbilics", "with_reference"):
        if not isinstance(r[k], bool):
            raise ValidationError(f"run.{k} must be true or false", key=k)
    if not isinstance(r["output"], str) or not r["output"]:
        raise ValidationError("run.output must be a directory name", key="output")
    delta = _number("run", "energy_window_delta", r["energy_window_delta"], positive=True)
    if not delta < 1:
        raise ValidationError("energy_window_delta must lie in (0, 1)", key="energy_window_delta")
    jobs = _number("run", "jobs", r["jobs"], positive=True, integer=True)

    tol = {k: _number("tolerances", k, v, positive=True) for k, v in vals["tolerances"].items()}

    ref = vals["reference"]
    ref["half_width"] = _number("reference", "half_width", ref["half_width"], positive=True)
    ref["half_height"] = _number("reference", "half_height", ref["half_height"], positive=True)
    for k in ("n", "n2"):
        if not _is_pow2_multiple_of_16(ref[k]) or isinstance(ref[k], bool):
            raise ValidationError(f"reference.{k} must be a power-of-two multiple of 16", key=k)
    if ref["n"] < 32:
        raise ValidationError("reference.n must be >= 32 (each half domain needs 16 columns)",
                              key="n")
    ref["points_per_scale"] = _number("reference", "points_per_scale", ref["points_per_scale"],
                                      positive=True, integer=True)
    ref["max_nodes"] = _number("reference", "max_nodes", ref["max_nodes"], positive=True,
                               integer=True)

    return RunConfig(terms=tuple(clean), grid=g, h=tuple(hs), E0=E0, energy=energy,
                     alpha=tuple(alpha), output=r["output"],
                     project_umbilics=r["project_umbilics"], with_reference=r["with_reference"],
                     energy_window_delta=delta, jobs=jobs, tolerances=tol, reference=ref,
                     warnings=tuple(warnings))


def parse_config(path):
    """Read and validate a configuration file (see ``loads``)."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"config is not UTF-8: {exc}") from exc
    return loads(text)

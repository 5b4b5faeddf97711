"""Experiment configuration: a flat key-value text format with dotted sections.

One `key = value` pair per line; `#` starts a comment.  Values are typed by a
fixed schema: int, float, bare string, or a whitespace-separated float vector.
`parse_config(emit_config(cfg))` reproduces the config field for field.

Keys::

    name = tripod-long
    function.builtin = tripod            # or function.dim plus function.piece.K
    function.dim = 2
    function.piece.0 = -2 0 0            # gradient components, then the offset
    run.x0 = 0.3 -0.7
    run.steps = 1000000
    run.seed = 1
    run.policy = first-active            # min-norm | random-vertex | random-hull
    run.thin = 1
    schedule.c = 0.1
    schedule.p = 0.5
    schedule.offset = 1
    guard.lo = -10 -10                   # optional; default is [-10, 10]^n
    guard.hi = 10 10
    checkpoints.per_decade = 4
    checkpoints.first = 1
    diagnostic.<label>.kind = compensation
    diagnostic.<label>.<param> = ...

Diagnostic kinds and parameters are listed in DIAG_SCHEMAS below; *_-prefixed
threshold parameters are optional and only drive pass/fail verdicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .dynamics import StepSchedule, DEFAULT_GUARD_HALFWIDTH
from .oracles import BUILTINS, POLICY_KINDS, FunctionOracle, PolyhedralFunction, \
    SelectionPolicy, builtin


class ConfigError(ValueError):
    """The configuration text is malformed or inconsistent."""


# (type, default) per parameter; required when default is REQUIRED
REQUIRED = object()

DIAG_SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "compensation": {"center": ("vec", REQUIRED), "eta": ("float", REQUIRED),
                     "delta": ("float", REQUIRED), "max_ratio": ("float", None),
                     "min_mass": ("float", None)},
    "essacc": {"resolution": ("int", 64), "tau": ("float", 0.01),
               "first_checkpoint": ("int", None), "max_dist": ("float", None)},
    "intervals": {"center": ("vec", REQUIRED), "eta": ("float", REQUIRED),
                  "delta": ("float", REQUIRED), "min_growth": ("float", None)},
    "separation": {"center_a": ("vec", REQUIRED), "radius_a": ("float", REQUIRED),
                   "center_b": ("vec", REQUIRED), "radius_b": ("float", REQUIRED)},
    "perpendicularity": {"center": ("vec", REQUIRED), "radius": ("float", REQUIRED),
                         "tail_fraction": ("float", 0.1),
                         "min_velocity": ("float", 0.0),
                         "basis": ("vec", None), "stratum_at": ("vec", None),
                         "max_dot": ("float", None)},
    "values": {"window": ("int", 10000), "max_oscillation": ("float", None)},
    "regions": {"target": ("vec", None), "tol": ("float", None),
                "max_residual": ("float", None)},
    "centroid": {"resolution": ("int", 64)},
    "defect": {"degree": ("int", 2), "max_final": ("float", None)},
    "circulation": {"policy": ("str", "min-norm"), "subsamples": ("int", 4),
                    "mode": ("str", "auto"), "max_rel_error": ("float", None)},
}


@dataclass(frozen=True)
class DiagnosticSpec:
    label: str
    kind: str
    params: tuple[tuple[str, object], ...]

    def get(self, key: str):
        for k, v in self.params:
            if k == key:
                return v
        ty, default = DIAG_SCHEMAS[self.kind][key]
        return None if default is REQUIRED else default


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    x0: tuple[float, ...]
    steps: int
    c: float
    p: float = 1.0
    offset: int = 1
    builtin: str | None = None
    function_dim: int | None = None
    pieces: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0
    policy: str = "first-active"
    thin: int = 1
    guard_lo: tuple[float, ...] | None = None
    guard_hi: tuple[float, ...] | None = None
    cp_per_decade: int = 4
    cp_first: int = 1
    diagnostics: tuple[DiagnosticSpec, ...] = ()

    @property
    def dimension(self) -> int:
        if self.pieces is not None:
            return len(self.pieces[0]) - 1
        return builtin(self.builtin).dimension

    def make_oracle(self) -> FunctionOracle:
        if self.builtin is not None:
            return builtin(self.builtin)
        return PolyhedralFunction.from_rows(self.pieces, name=f"{self.name}-polyhedral")

    def make_schedule(self) -> StepSchedule:
        return StepSchedule(c=self.c, p=self.p, offset=self.offset)

    def make_policy(self) -> SelectionPolicy:
        return SelectionPolicy(kind=self.policy, seed=self.seed)

    def guard(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        n = self.dimension
        lo = self.guard_lo if self.guard_lo is not None else (-DEFAULT_GUARD_HALFWIDTH,) * n
        hi = self.guard_hi if self.guard_hi is not None else (DEFAULT_GUARD_HALFWIDTH,) * n
        return lo, hi

    def checkpoints(self) -> list[int]:
        from .diagnostics import default_checkpoints
        return default_checkpoints(self.steps, self.cp_per_decade, self.cp_first)


def _parse_value(raw: str, ty: str, key: str):
    raw = raw.strip()
    try:
        if ty == "int":
            return int(raw)
        if ty == "float":
            return float(raw)
        if ty == "str":
            return raw
        if ty == "vec":
            parts = raw.split()
            if not parts:
                raise ValueError
            return tuple(float(v) for v in parts)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {ty}") from None
    raise ConfigError(f"unknown type tag {ty}")


_GLOBAL_SCHEMA = {
    "name": "str", "function.builtin": "str", "function.dim": "int",
    "run.x0": "vec", "run.steps": "int", "run.seed": "int",
    "run.policy": "str", "run.thin": "int",
    "schedule.c": "float", "schedule.p": "float", "schedule.offset": "int",
    "guard.lo": "vec", "guard.hi": "vec",
    "checkpoints.per_decade": "int", "checkpoints.first": "int",
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError on any malformed or missing field."""
    pairs: dict[str, str] = {}
    order: list[str] = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {ln}: duplicate key {key}")
        pairs[key] = raw
        order.append(key)

    vals: dict[str, object] = {}
    piece_rows: dict[int, tuple[float, ...]] = {}
    diag_raw: dict[str, dict[str, str]] = {}
    diag_order: list[str] = []
    for key in order:
        raw = pairs[key]
        if key in _GLOBAL_SCHEMA:
            vals[key] = _parse_value(raw, _GLOBAL_SCHEMA[key], key)
        elif key.startswith("function.piece."):
            try:
                idx = int(key.rsplit(".", 1)[1])
            except ValueError:
                raise ConfigError(f"bad piece key {key}") from None
            piece_rows[idx] = _parse_value(raw, "vec", key)
        elif key.startswith("diagnostic."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"diagnostic keys look like diagnostic.<label>.<param>: {key}")
            _, label, param = parts
            diag_raw.setdefault(label, {})[param] = raw
            if label not in diag_order:
                diag_order.append(label)
        else:
            raise ConfigError(f"unknown key {key}")

    for req in ("name", "run.x0", "run.steps", "schedule.c"):
        if req not in vals:
            raise ConfigError(f"missing required key {req}")

    pieces = None
    if piece_rows:
        if "function.builtin" in vals:
            raise ConfigError("give either function.builtin or function.piece rows, not both")
        if "function.dim" not in vals:
            raise ConfigError("explicit pieces need function.dim")
        dim = vals["function.dim"]
        rows = []
        for idx in range(len(piece_rows)):
            if idx not in piece_rows:
                raise ConfigError(f"function.piece indices must be 0..{len(piece_rows)-1}")
            row = piece_rows[idx]
            if len(row) != dim + 1:
                raise ConfigError(
                    f"function.piece.{idx} needs {dim}+1 numbers (gradient then offset)")
            rows.append(row)
        pieces = tuple(rows)
    elif "function.builtin" not in vals:
        raise ConfigError("config needs function.builtin or function.piece rows")
    elif vals["function.builtin"] not in BUILTINS:
        raise ConfigError(f"unknown builtin {vals['function.builtin']!r}; "
                          f"choose from {sorted(BUILTINS)}")

    diagnostics = []
    for label in diag_order:
        params_raw = diag_raw[label]
        if "kind" not in params_raw:
            raise ConfigError(f"diagnostic.{label} needs a kind")
        kind = params_raw.pop("kind").strip()
        if kind not in DIAG_SCHEMAS:
            raise ConfigError(f"diagnostic.{label}: unknown kind {kind!r}; "
                              f"choose from {sorted(DIAG_SCHEMAS)}")
        schema = DIAG_SCHEMAS[kind]
        params = []
        for pname, raw in params_raw.items():
            if pname not in schema:
                raise ConfigError(f"diagnostic.{label}: unknown parameter {pname!r} "
                                  f"for kind {kind}")
            params.append((pname, _parse_value(raw, schema[pname][0], f"diagnostic.{label}.{pname}")))
        for pname, (ty, default) in schema.items():
            if default is REQUIRED and pname not in params_raw:
                raise ConfigError(f"diagnostic.{label}: missing required parameter {pname}")
        diagnostics.append(DiagnosticSpec(label, kind, tuple(sorted(params))))

    cfg = ExperimentConfig(
        name=vals["name"],
        builtin=vals.get("function.builtin"),
        function_dim=vals.get("function.dim"),
        pieces=pieces,
        x0=vals["run.x0"],
        steps=vals["run.steps"],
        seed=vals.get("run.seed", 0),
        policy=vals.get("run.policy", "first-active"),
        thin=vals.get("run.thin", 1),
        c=vals["schedule.c"],
        p=vals.get("schedule.p", 1.0),
        offset=vals.get("schedule.offset", 1),
        guard_lo=vals.get("guard.lo"),
        guard_hi=vals.get("guard.hi"),
        cp_per_decade=vals.get("checkpoints.per_decade", 4),
        cp_first=vals.get("checkpoints.first", 1),
        diagnostics=tuple(diagnostics))
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.name or any(ch in cfg.name for ch in "/\\\n"):
        raise ConfigError("name must be a nonempty token without path separators")
    if cfg.steps < 1:
        raise ConfigError("run.steps must be at least 1")
    if cfg.thin < 1:
        raise ConfigError("run.thin must be at least 1")
    if cfg.policy not in POLICY_KINDS:
        raise ConfigError(f"run.policy must be one of {POLICY_KINDS}")
    try:
        StepSchedule(cfg.c, cfg.p, cfg.offset)
    except ValueError as e:
        raise ConfigError(f"schedule: {e}") from None
    n = cfg.dimension
    if len(cfg.x0) != n:
        raise ConfigError(f"run.x0 has {len(cfg.x0)} components, function dimension is {n}")
    if (cfg.guard_lo is None) != (cfg.guard_hi is None):
        raise ConfigError("give both guard.lo and guard.hi or neither")
    if cfg.guard_lo is not None:
        if len(cfg.guard_lo) != n or len(cfg.guard_hi) != n:
            raise ConfigError("guard box dimension mismatch")
        if any(l >= h for l, h in zip(cfg.guard_lo, cfg.guard_hi)):
            raise ConfigError("guard box needs lo < hi on every axis")
    if cfg.cp_per_decade < 1 or cfg.cp_first < 1:
        raise ConfigError("checkpoint parameters must be positive")
    for d in cfg.diagnostics:
        _validate_diag(cfg, d, n)


def _validate_diag(cfg: ExperimentConfig, d: DiagnosticSpec, n: int) -> None:
    where = f"diagnostic.{d.label} ({d.kind})"
    if d.kind in ("compensation", "intervals"):
        if len(d.get("center")) != n:
            raise ConfigError(f"{where}: center dimension mismatch")
        if not (0 < d.get("eta") < d.get("delta")):
            raise ConfigError(f"{where}: needs 0 < eta < delta")
    elif d.kind == "separation":
        ca, cb = d.get("center_a"), d.get("center_b")
        if len(ca) != n or len(cb) != n:
            raise ConfigError(f"{where}: ball center dimension mismatch")
        gap = sum((a - b) ** 2 for a, b in zip(ca, cb)) ** 0.5
        if gap <= d.get("radius_a") + d.get("radius_b"):
            raise ConfigError(f"{where}: separation balls overlap; they must be disjoint")
    elif d.kind == "perpendicularity":
        if len(d.get("center")) != n:
            raise ConfigError(f"{where}: center dimension mismatch")
        if not (0 < d.get("tail_fraction") <= 1):
            raise ConfigError(f"{where}: tail_fraction must lie in (0, 1]")
        basis = d.get("basis")
        if basis is not None and len(basis) % n != 0:
            raise ConfigError(f"{where}: basis length must be a multiple of the dimension")
        if basis is None and d.get("stratum_at") is None:
            raise ConfigError(f"{where}: give basis or stratum_at")
    elif d.kind == "essacc":
        if not (0 < d.get("tau") < 1):
            raise ConfigError(f"{where}: tau must lie in (0, 1)")
        if d.get("resolution") < 1:
            raise ConfigError(f"{where}: resolution must be at least 1")
    elif d.kind == "values":
        if d.get("window") < 1:
            raise ConfigError(f"{where}: window must be at least 1")
    elif d.kind == "regions":
        if cfg.builtin == "nsbanana":
            raise ConfigError(f"{where}: regions need a polyhedral function")
    elif d.kind == "defect":
        if d.get("degree") < 1:
            raise ConfigError(f"{where}: degree must be at least 1")
    elif d.kind == "circulation":
        if d.get("policy") not in POLICY_KINDS:
            raise ConfigError(f"{where}: unknown selection policy")
        if d.get("subsamples") < 1:
            raise ConfigError(f"{where}: subsamples must be at least 1")
        if d.get("mode") not in ("auto", "exact", "midpoint"):
            raise ConfigError(f"{where}: mode must be auto, exact or midpoint")


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config(emit_config(cfg)) == cfg."""
    lines = [f"name = {cfg.name}"]
    if cfg.builtin is not None:
        lines.append(f"function.builtin = {cfg.builtin}")
    if cfg.function_dim is not None:
        lines.append(f"function.dim = {cfg.function_dim}")
    if cfg.pieces is not None:
        for i, row in enumerate(cfg.pieces):
            lines.append(f"function.piece.{i} = {_fmt(row)}")
    lines.append(f"run.x0 = {_fmt(cfg.x0)}")
    lines.append(f"run.steps = {cfg.steps}")
    lines.append(f"run.seed = {cfg.seed}")
    lines.append(f"run.policy = {cfg.policy}")
    lines.append(f"run.thin = {cfg.thin}")
    lines.append(f"schedule.c = {_fmt(cfg.c)}")
    lines.append(f"schedule.p = {_fmt(cfg.p)}")
    lines.append(f"schedule.offset = {cfg.offset}")
    if cfg.guard_lo is not None:
        lines.append(f"guard.lo = {_fmt(cfg.guard_lo)}")
        lines.append(f"guard.hi = {_fmt(cfg.guard_hi)}")
    lines.append(f"checkpoints.per_decade = {cfg.cp_per_decade}")
    lines.append(f"checkpoints.first = {cfg.cp_first}")
    for d in cfg.diagnostics:
        lines.append(f"diagnostic.{d.label}.kind = {d.kind}")
        for k, v in sorted(d.params):
            lines.append(f"diagnostic.{d.label}.{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


@dataclass
class RunManifest:
    """What a run produced: config snapshot, artifact paths, and status."""

    name: str
    config_text: str
    trajectory_csv: str
    wall_clock_s: float
    version: str
    diverged: bool
    n_steps: int
    n_stored: int
    dimension: int
    summary_json: str | None = None
    diagnostic_csvs: dict = field(default_factory=dict)

    def config(self) -> ExperimentConfig:
        return parse_config(self.config_text)


def save_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_manifest(path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**data)

"""Run configuration: ``key = value`` lines, ``#`` comments, dotted section keys.

Example::

    shape.kind = sphere
    shape.radius = 0.25
    cell.n = 16
    domain.epsilon = 0.25
    domain.a_eps = 0.125, 0.0625   # one DNS run per value
    domain.n_c = 8
    force.kind = swirl
    force.params = amplitude=1, gradient=0.5
    pipeline.stages = cell, k, darcy
"""
import hashlib
import math
from dataclasses import dataclass, field

from .darcy2d import BodyForce2D
from .errors import GeometryError, InvalidShape, ParseError, ValidationError
from .geometry import SHAPE_KINDS, ObstacleShape, ThinDomainSpec
from .saddle import SolverConfig

STAGES = ("cell", "k", "darcy", "dns", "compare", "verify-unfold")
FORCE_KINDS = ("constant", "gradient_cosine", "swirl", "manufactured")


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    f = float(s)
    if not f.is_integer():
        raise ValueError("not an integer")
    return int(f)


def _floats(s):
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _names(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _params(s):
    out = {}
    for item in _names(s):
        k, sep, v = item.partition("=")
        if not sep or not k.strip():
            raise ValueError(f"expected name=value, got {item!r}")
        out[k.strip()] = _float(v)
    return out


# key -> (converter, default)
SCHEMA = {
    "shape.kind": (str, None),
    "shape.center": (_floats, (0.0, 0.0, 0.0)),
    "shape.radius": (_float, None),
    "shape.half_extents": (_floats, None),
    "shape.exponent": (_float, 2.0),
    "cell.n": (_int, 16),
    "domain.Lx": (_float, 1.0),
    "domain.Ly": (_float, 1.0),
    "domain.epsilon": (_float, None),
    "domain.a_eps": (_floats, None),
    "domain.n_c": (_int, None),
    "solver.tol_mom": (_float, 1e-8),
    "solver.tol_div": (_float, 1e-8),
    "solver.max_outer": (_int, 500),
    "solver.max_inner": (_int, 2000),
    "solver.nu": (_float, 1.0),
    "solver.schur_precond": (str, "auto"),
    "darcy.gx": (_int, None),
    "darcy.gy": (_int, None),
    "force.kind": (str, "swirl"),
    "force.params": (_params, {}),
    "pipeline.stages": (_names, ("cell", "k")),
    "dns.max_unknowns": (_int, 10_000_000),
    "unfold.trials": (_int, 100),
    "unfold.seed": (_int, 0),
}


@dataclass(frozen=True)
class ForceSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def build(self, K=None, Lx=1.0, Ly=1.0):
        p = dict(self.params)
        if self.kind == "constant":
            return BodyForce2D.constant(p.get("f1", 1.0), p.get("f2", 0.0))
        if self.kind == "gradient_cosine":
            return BodyForce2D.gradient_cosine(Lx, p.get("amplitude", 1.0))
        if self.kind == "swirl":
            return BodyForce2D.swirl(Lx, Ly, p.get("amplitude", 1.0), p.get("gradient", 0.0))
        if K is None:
            raise ValidationError("the manufactured force needs a permeability", "force.kind")
        return BodyForce2D.manufactured(K, Lx, Ly)


@dataclass(frozen=True)
class RunConfig:
    values: dict
    shape: ObstacleShape
    cell_n: int
    domains: tuple          # ThinDomainSpec per a_eps value
    n_c: int
    solver: SolverConfig
    darcy_grid: tuple       # (gx, gy) or None: use the microcell columns
    force: ForceSpec
    stages: tuple
    max_unknowns: int
    unfold_trials: int
    unfold_seed: int

    @property
    def Lx(self):
        return self.values["domain.Lx"]

    @property
    def Ly(self):
        return self.values["domain.Ly"]

    def canonical_text(self):
        return "".join(f"{k} = {self.values[k]!r}\n" for k in sorted(self.values))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def parse_lines(text):
    """Raw ``{key: string}`` from config text; syntax errors carry the line number."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ParseError("expected 'key = value'", lineno)
        if any(ch.isspace() for ch in key):
            raise ParseError(f"malformed key {key!r}", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if key not in SCHEMA:
            raise ValidationError(f"unknown key {key!r}", key)
        raw[key] = value
    return raw


def _convert(raw):
    values = {}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except ValueError as e:
                raise ValidationError(f"{key}: invalid value {raw[key]!r} ({e})", key) from None
        else:
            values[key] = default
    return values


def _require(values, key, why):
    if values[key] is None:
        raise ValidationError(f"{key} is required {why}", key)


def _positive(values, *keys):
    for k in keys:
        v = values[k]
        if v is not None and not (v > 0 if not isinstance(v, tuple) else all(x > 0 for x in v)):
            raise ValidationError(f"{k} must be positive", k)


def build_config(raw):
    values = _convert(raw)
    stages = values["pipeline.stages"]
    for s in stages:
        if s not in STAGES:
            raise ValidationError(f"unknown stage {s!r}", "pipeline.stages")
    stages = tuple(s for s in STAGES if s in stages)
    _positive(values, "shape.radius", "shape.exponent", "domain.Lx", "domain.Ly",
              "domain.epsilon", "domain.a_eps", "solver.tol_mom", "solver.tol_div",
              "solver.nu", "dns.max_unknowns", "unfold.trials")

    shape = None
    if values["shape.kind"] is not None:
        if values["shape.kind"] not in SHAPE_KINDS:
            raise ValidationError(f"shape.kind must be one of {SHAPE_KINDS}", "shape.kind")
        try:
            shape = ObstacleShape(values["shape.kind"], values["shape.center"],
                                  values["shape.radius"], values["shape.half_extents"],
                                  values["shape.exponent"])
        except InvalidShape as e:
            key = "shape.radius" if values["shape.kind"] == "sphere" else "shape.half_extents"
            raise ValidationError(str(e), key) from None
        if not shape.fits_in_cell():
            raise ValidationError("obstacle does not fit strictly inside the cell", "shape.center")
    if {"cell", "k", "dns"} & set(stages) and shape is None:
        raise ValidationError("shape.kind is required for the cell, k and dns stages",
                              "shape.kind")
    if values["cell.n"] < 4:
        raise ValidationError("cell.n must be >= 4", "cell.n")

    domains = ()
    need_domain = {"dns", "compare", "verify-unfold"} & set(stages)
    if values["domain.epsilon"] is not None or values["domain.a_eps"] is not None:
        for key in ("domain.epsilon", "domain.a_eps", "domain.n_c"):
            _require(values, key, "when a domain is given")
        try:
            domains = tuple(ThinDomainSpec(values["domain.Lx"], values["domain.Ly"],
                                           values["domain.epsilon"], a)
                            for a in values["domain.a_eps"])
        except GeometryError as e:
            raise ValidationError(str(e), "domain.a_eps") from None
        if values["domain.n_c"] < 4:
            raise ValidationError("domain.n_c must be >= 4", "domain.n_c")
    elif need_domain:
        raise ValidationError("domain.epsilon is required for the dns, compare and "
                              "verify-unfold stages", "domain.epsilon")

    try:
        solver = SolverConfig(values["solver.tol_mom"], values["solver.tol_div"],
                              values["solver.max_outer"], values["solver.max_inner"],
                              values["solver.nu"], values["solver.schur_precond"])
    except ValueError as e:
        raise ValidationError(str(e), "solver") from None

    gx, gy = values["darcy.gx"], values["darcy.gy"]
    if (gx is None) != (gy is None):
        raise ValidationError("set both darcy.gx and darcy.gy or neither",
                              "darcy.gx" if gx is None else "darcy.gy")
    if gx is None and not domains and "darcy" in stages:
        raise ValidationError("darcy.gx/gy are required without a domain", "darcy.gx")
    if gx is not None and min(gx, gy) < 4:
        raise ValidationError("darcy grid needs at least 4 cells per direction", "darcy.gx")

    if values["force.kind"] not in FORCE_KINDS:
        raise ValidationError(f"force.kind must be one of {FORCE_KINDS}", "force.kind")
    return RunConfig(values, shape, values["cell.n"], domains, values["domain.n_c"], solver,
                     None if gx is None else (gx, gy),
                     ForceSpec(values["force.kind"], values["force.params"]), stages,
                     values["dns.max_unknowns"], values["unfold.trials"], values["unfold.seed"])


def parse_config_text(text):
    return build_config(parse_lines(text))


def parse_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())

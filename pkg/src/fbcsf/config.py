"""Run configuration: flat key=value text with dotted section prefixes.

The format is deliberately primitive: one `section.key = value` assignment
per line, `#`/`;` comments, no section headers, no nesting.  Every key has a
typed schema entry with a default and a range check; unknown keys are
rejected by name with the offending line number so sweep scripts fail loudly
instead of silently ignoring a typo.

`canonical_text` materializes all defaults in schema order at 17 significant
digits, which makes the sha256 of that text a usable run identity: equal
hashes imply byte-identical downstream CSVs.
"""

import hashlib
import math

from .errors import ConfigError
from . import geometry as geo
from .solver import SolverOptions


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _parse_bool(s):
    t = s.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s):
    return tuple(float(tok) for tok in s.split())


class _Key:
    __slots__ = ("name", "parse", "default", "check", "doc")

    def __init__(self, name, parse, default, check=None, doc=""):
        self.name = name
        self.parse = parse
        self.default = default
        self.check = check
        self.doc = doc


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


_REQUIRED = object()

# Range checks guard plumbing-level sanity only.  Grid-size legality (N >= 16)
# is the solver's own invariant and is enforced there, so an undersized grid
# surfaces as a solver failure rather than a config one.
_SCHEMA = [
    _Key("domain.kind", str.strip, _REQUIRED,
         lambda v: v in ("halfplane", "disk", "ellipse", "fourier"),
         "barrier kind"),
    _Key("domain.params", _parse_floats, (),
         doc="kind-specific coefficients (disk: R; ellipse: a b)"),
    _Key("domain.frame", _parse_floats, (),
         lambda v: len(v) in (0, 3),
         "rigid motion alpha tx ty; empty keeps the barrier tangent at 0"),
    _Key("initial.r0", float, 1.0, _pos, "starting height scale"),
    _Key("initial.eps", _parse_floats, (),
         doc="window cosine perturbation coefficients"),
    _Key("initial.theta_lo", float, 0.0,
         lambda v: -0.5 * math.pi < v < 1.5 * math.pi,
         "initial window seed (exact for a flat barrier)"),
    _Key("initial.theta_hi", float, math.pi,
         lambda v: -0.5 * math.pi < v < 1.5 * math.pi),
    _Key("solver.N", int, 256, _pos, "grid intervals"),
    _Key("solver.cfl", float, 0.8, lambda v: 0 < v <= 2.0),
    _Key("solver.gap_tol", float, 1e-2, lambda v: 0 < v < math.pi),
    _Key("solver.stop_time_frac", float, 1e-4, lambda v: 0 < v < 1),
    _Key("solver.sample_stride", int, 64, _pos),
    _Key("solver.checkpoint_stride", int, 256, _pos),
    _Key("solver.max_steps", int, 2_000_000, _nonneg),
    _Key("solver.curvature_ratio_tol", float, 0.25, lambda v: 0 < v < 1),
    _Key("solver.backend", str.strip, "auto",
         lambda v: v in ("auto", "numba", "numpy")),
    _Key("analysis.enabled", _parse_bool, True),
    _Key("analysis.harmonics", int, 64, lambda v: v >= 4),
    _Key("analysis.n_ext", int, 4096, lambda v: v >= 64),
    _Key("analysis.window_lo", float, 0.40, lambda v: 0 <= v < 1),
    _Key("analysis.window_hi", float, 0.95, lambda v: 0 < v <= 1),
    _Key("analysis.margin", float, 0.2, _nonneg,
         "slack subtracted from predicted exponents"),
    _Key("analysis.identity_tol", float, 1e-3, _pos,
         "gate on normalized evolution-identity residuals"),
    _Key("analysis.identity_window", _parse_floats, (0.2, 0.8),
         lambda v: len(v) == 2 and 0 <= v[0] < v[1] <= 1,
         "fraction of [0, T] over which residual maxima are taken"),
    _Key("analysis.gate_checks", str.strip,
         "I0 I1 L2 C0 hausdorff kappa_rel sigma_dev",
         lambda v: set(v.split()) <= {"I0", "I1", "L2", "C0", "hausdorff",
                                      "bc_scale", "kappa_rel", "sigma_dev"},
         "decay checks that abort the pipeline; the rest are reported only"),
    _Key("oracle.enabled", _parse_bool, False),
    _Key("oracle.m", int, 400, lambda v: v >= 8, "front-tracking points"),
    _Key("oracle.cfl", float, 0.4, lambda v: 0 < v <= 0.5),
    _Key("oracle.horizon_frac", float, 0.5, lambda v: 0 < v <= 0.7),
    _Key("oracle.samples", int, 6, lambda v: v >= 1),
    _Key("oracle.gate", float, 1e-2, _pos, "max Hausdorff allowed"),
    _Key("linear.enabled", _parse_bool, False),
    _Key("linear.modes", _parse_floats, (0.0, 1.0, 2.0, 3.0),
         lambda v: all(x >= 0 and x == int(x) for x in v)),
    _Key("linear.horizon", float, 1.0, _pos, "slow-time horizon"),
    _Key("linear.n", int, 256, lambda v: v >= 16),
    _Key("linear.dt", float, 0.0, _nonneg, "0 selects the default step"),
    _Key("linear.tol_frac", float, 0.02, _pos,
         "relative gate on fitted versus exact exponents"),
    _Key("output.dir", str.strip, "out"),
    _Key("output.formats", str.strip, "csv json",
         lambda v: set(v.split()) <= {"csv", "json", "plots"}),
    _Key("seed", int, 0, _nonneg, "randomized sweep seed"),
]

_BY_NAME = {k.name: k for k in _SCHEMA}


class RunConfig:
    """Validated configuration; attribute access via get()/sections."""

    def __init__(self, values):
        self._values = dict(values)

    def get(self, name):
        return self._values[name]

    def __getitem__(self, name):
        return self._values[name]

    def items(self):
        return [(k.name, self._values[k.name]) for k in _SCHEMA]

    # ---- constructed objects -------------------------------------------

    def domain(self):
        kind = self["domain.kind"]
        fr = self["domain.frame"]
        params = self["domain.params"]
        if kind == "halfplane":
            if fr and any(fr):
                raise ConfigError("domain.frame: the flat barrier is kept "
                                  "in standard position")
            return geo.halfplane()
        if not params:
            raise ConfigError(f"domain.params: required for kind {kind!r}")
        if kind == "disk" and len(params) != 1:
            raise ConfigError("domain.params: disk takes a single radius")
        if kind == "ellipse" and len(params) != 2:
            raise ConfigError("domain.params: ellipse takes semi-axes a b")
        if not fr:
            # default placement: barrier tangent to y = 0 at the origin
            if kind == "disk":
                return geo.standard_disk(params[0])
            if kind == "ellipse":
                return geo.standard_ellipse(params[0], params[1])
            return geo.ConvexDomain(kind, params)
        return geo.ConvexDomain(kind, params, geo.Frame(*fr))

    def solver_options(self):
        return SolverOptions(
            cfl=self["solver.cfl"],
            gap_tol=self["solver.gap_tol"],
            stop_time_frac=self["solver.stop_time_frac"],
            sample_stride=self["solver.sample_stride"],
            checkpoint_stride=self["solver.checkpoint_stride"],
            max_steps=self["solver.max_steps"],
            curvature_ratio_tol=self["solver.curvature_ratio_tol"])

    def window0(self):
        lo, hi = self["initial.theta_lo"], self["initial.theta_hi"]
        if not lo < hi:
            raise ConfigError("initial.theta_lo must be below initial.theta_hi")
        if self["domain.kind"] == "halfplane":
            if abs(lo) > 1e-12 or abs(hi - math.pi) > 1e-12:
                raise ConfigError("initial window over the flat barrier is "
                                  "pinned to [0, pi] by orthogonal contact")
            return None
        if (lo, hi) == (0.0, math.pi):
            return None  # untouched default: let the contact solve pick
        return (lo, hi)


def parse_config(text, source="<config>"):
    """Parse flat dotted-key text into a RunConfig.

    Raises ConfigError naming the key and the 1-based line number for
    unknown keys, bad values, out-of-range values, and duplicates.
    """
    values = {k.name: k.default for k in _SCHEMA}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            raise ConfigError(f"{source}:{lineno}: section headers are not "
                              f"used; write dotted keys ({line!r})")
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, "
                              f"got {line!r}")
        name, _, rhs = line.partition("=")
        name = name.strip()
        rhs = rhs.strip()
        key = _BY_NAME.get(name)
        if key is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {name!r}")
        if name in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {name!r}")
        seen.add(name)
        try:
            val = key.parse(rhs)
        except ValueError as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value for {name!r}: {exc}") from exc
        if key.check is not None and not key.check(val):
            raise ConfigError(f"{source}:{lineno}: value {rhs!r} out of "
                              f"range for {name!r}")
        values[name] = val
    missing = [n for n, v in values.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"{source}: missing required key(s) "
                          + ", ".join(repr(n) for n in missing))
    cfg = RunConfig(values)
    cfg.domain()   # cross-field checks fail at load time, not per stage
    cfg.window0()
    cfg.solver_options().validate()
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def canonical_text(cfg):
    """All keys in schema order with defaults materialized."""
    lines = [f"{name} = {_fmt(val)}" for name, val in cfg.items()]
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()

"""Experiment configuration: defaults, key = value files, validation."""
import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import InvalidParameter
from .ib import CURVE_KINDS

DEFAULT_T = {"balloon": 3.0}
DEFAULT_DT = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "ellipse-static"
    N: int = 16
    m: int = 128
    K: int = 200
    T: float = 2.0
    rho: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0
    R: float = 0.4
    picard_tol: float = 1e-8
    picard_max_iters: int = 25
    output: str = ""
    snapshot_stride: int = 10

    @property
    def dt(self):
        return self.T / self.K

    def validate(self):
        if self.experiment not in CURVE_KINDS:
            raise InvalidParameter(f"unknown experiment {self.experiment!r}; expected one of {CURVE_KINDS}")
        for name in ("N", "m", "K", "picard_max_iters", "snapshot_stride"):
            if getattr(self, name) < 1:
                raise InvalidParameter(f"{name} must be at least 1")
        if self.m < 3:
            raise InvalidParameter("m must be at least 3")
        for name in ("T", "rho", "mu", "picard_tol", "R"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.kappa < 0:
            raise InvalidParameter("kappa must be nonnegative")
        return self

    def to_text(self):
        lines = [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)]
        lines.append(f"dt = {_fmt(self.dt)}")
        return "\n".join(lines) + "\n"

    def as_dict(self):
        d = asdict(self)
        d["dt"] = self.dt
        return d


def _fmt(v):
    return "%.17g" % v if isinstance(v, float) else str(v)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS = {"int": int, "float": float, "str": str, int: int, float: float, str: str}
_ALIASES = {"dt": "dt", "delta_t": "dt", "stride": "snapshot_stride", "tol": "picard_tol",
            "max_iters": "picard_max_iters", "out": "output"}


def _cast(key, value):
    cast = _CASTS[_TYPES[key]]
    try:
        if cast is int:
            f = float(value)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return cast(value)
    except ValueError as exc:
        raise InvalidParameter(f"bad value {value!r} for {key}") from exc


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameter(f"line {n}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = _ALIASES.get(key, key).replace("-", "_")
        if key != "dt" and key not in _TYPES:
            raise InvalidParameter(f"line {n}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(values):
    """ExperimentConfig from string or typed ``values`` (``dt`` allowed).

    T defaults per experiment and dt to 0.01; when both K and dt are given
    they must satisfy dt * K = T.
    """
    values = {k: v for k, v in values.items() if v is not None}
    experiment = str(values.get("experiment", ExperimentConfig.experiment))
    typed = {k: _cast(k, v) for k, v in values.items() if k not in ("dt", "experiment")}
    typed["experiment"] = experiment
    dt = float(values["dt"]) if "dt" in values else None
    if dt is not None and not dt > 0:
        raise InvalidParameter("dt must be positive")
    T = typed.get("T")
    K = typed.get("K")
    if T is None:
        T = DEFAULT_T.get(experiment, 2.0)
    if K is None:
        step = DEFAULT_DT if dt is None else dt
        K = round(T / step)
        if K < 1 or not math.isclose(K * step, T, rel_tol=1e-9):
            raise InvalidParameter(f"dt = {step} does not divide T = {T}")
    elif dt is not None and not math.isclose(K * dt, T, rel_tol=1e-9):
        raise InvalidParameter(f"dt * K = {dt * K} differs from T = {T}")
    typed["T"], typed["K"] = float(T), int(K)
    return ExperimentConfig(**typed).validate()


def load_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def with_overrides(config, **kw):
    return replace(config, **kw).validate()

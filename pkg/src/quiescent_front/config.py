"""Sectioned ``key = value`` experiment configuration and run manifests."""
from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import MISSING, asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConfigError
from .kernel import FAMILIES, Grid, KernelSpec, load_tabulated
from .model import ModelParams, nicholson

AUTO = "auto"


@dataclass(frozen=True)
class ModelSection:
    D: float
    gamma1: float
    gamma2: float
    tau: float
    reaction: str = "nicholson"
    p: float = 2.0
    d: float = 1.0
    a: float = 1.0
    mu0: float = 0.0
    u_max: float = 10.0


@dataclass(frozen=True)
class KernelSection:
    family: str = "gaussian"
    scale: float = 1.0
    radius: float | None = None
    tol: float = 1e-10
    table: str | None = None


@dataclass(frozen=True)
class GridSection:
    xi_min: float = -200.0
    xi_max: float = 800.0
    h: float = 0.05


@dataclass(frozen=True)
class WaveSection:
    c: float = 8.0
    tol: float = 1e-11
    max_iter: int = 5000
    kappa: float | None = None
    tol_bc: float = 1e-6


@dataclass(frozen=True)
class CertificateSection:
    c_star_assumed: float = 0.0
    mu_fraction: float = 0.9
    beta: float | None = None


@dataclass(frozen=True)
class EvolutionSection:
    frame: str = "moving"
    T: float | None = None
    decay_target: float = 0.1
    dt: float | None = None
    sample_interval: float = 0.25
    seed: int = 0
    shape: str = "bump_pair"
    amplitude: float = 0.1
    center: float = 0.0
    width: float = 10.0
    xi_min: float = -50.0
    xi_max: float = 400.0
    h: float = 0.1
    method: str = "direct"
    amplification: float = 10.0


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection
    kernel: KernelSection = field(default_factory=KernelSection)
    grid: GridSection = field(default_factory=GridSection)
    wave: WaveSection = field(default_factory=WaveSection)
    certificate: CertificateSection = field(default_factory=CertificateSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str | None = None

    # -- derived objects ----------------------------------------------------------
    def params(self) -> ModelParams:
        m = self.model
        if m.reaction != "nicholson":
            raise ConfigError(f"unknown reaction {m.reaction!r}")
        return ModelParams(m.D, m.gamma1, m.gamma2, m.tau, nicholson(m.p, m.d, m.a, m.mu0, m.tau), u_max=m.u_max)

    def kernel_spec(self) -> KernelSpec:
        k = self.kernel
        if k.family == "tabulated":
            if not k.table:
                raise ConfigError("[kernel] family = tabulated needs table = PATH")
            path = Path(k.table)
            if not path.is_absolute() and self.source:
                path = Path(self.source).parent / path
            return load_tabulated(path, radius=k.radius, tol=k.tol)
        return KernelSpec(k.family, k.scale, k.radius, k.tol)

    def wave_grid(self) -> Grid:
        g = self.grid
        return Grid.from_spacing(g.xi_min, g.xi_max, g.h)

    def sim_grid(self) -> Grid:
        e = self.evolution
        return Grid.from_spacing(e.xi_min, e.xi_max, e.h)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Replace fields per section, e.g. ``with_overrides(evolution={"seed": 3})``."""
        kw = {}
        for name, changes in sections.items():
            cur = getattr(self, name)
            kw[name] = type(cur)(**{**asdict(cur), **changes})
        return ExperimentConfig(**{**{f: getattr(self, f) for f in _SECTIONS}, "source": self.source, **kw})

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {
    "model": ModelSection, "kernel": KernelSection, "grid": GridSection, "wave": WaveSection,
    "certificate": CertificateSection, "evolution": EvolutionSection, "output": OutputSection,
}

# (check, message) per field; values arrive already converted
_RULES = {
    ("model", "D"): (lambda v: v > 0, "must be > 0"),
    ("model", "gamma1"): (lambda v: v > 0, "must be > 0"),
    ("model", "gamma2"): (lambda v: v > 0, "must be > 0"),
    ("model", "tau"): (lambda v: v >= 0, "must be >= 0"),
    ("model", "p"): (lambda v: v > 0, "must be > 0"),
    ("model", "d"): (lambda v: v > 0, "must be > 0"),
    ("model", "a"): (lambda v: v > 0, "must be > 0"),
    ("model", "mu0"): (lambda v: v >= 0, "must be >= 0"),
    ("model", "reaction"): (lambda v: v == "nicholson", "must be 'nicholson'"),
    ("kernel", "family"): (lambda v: v in FAMILIES, f"must be one of {', '.join(FAMILIES)}"),
    ("kernel", "scale"): (lambda v: v > 0, "must be > 0"),
    ("kernel", "radius"): (lambda v: v is None or v > 0, "must be > 0"),
    ("kernel", "tol"): (lambda v: v > 0, "must be > 0"),
    ("grid", "h"): (lambda v: v > 0, "must be > 0"),
    ("wave", "c"): (lambda v: v > 0, "must be > 0"),
    ("wave", "tol"): (lambda v: v > 0, "must be > 0"),
    ("wave", "max_iter"): (lambda v: v >= 1, "must be >= 1"),
    ("wave", "kappa"): (lambda v: v is None or v > 0, "must be > 0"),
    ("wave", "tol_bc"): (lambda v: v > 0, "must be > 0"),
    ("certificate", "c_star_assumed"): (lambda v: v >= 0, "must be >= 0"),
    ("certificate", "mu_fraction"): (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    ("certificate", "beta"): (lambda v: v is None or v > 0, "must be > 0"),
    ("evolution", "frame"): (lambda v: v in ("lab", "moving"), "must be 'lab' or 'moving'"),
    ("evolution", "T"): (lambda v: v is None or v >= 0, "must be >= 0"),
    ("evolution", "decay_target"): (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    ("evolution", "dt"): (lambda v: v is None or v > 0, "must be > 0"),
    ("evolution", "sample_interval"): (lambda v: v > 0, "must be > 0"),
    ("evolution", "shape"): (lambda v: v in ("bump_pair", "random"), "must be 'bump_pair' or 'random'"),
    ("evolution", "amplitude"): (lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    ("evolution", "width"): (lambda v: v > 0, "must be > 0"),
    ("evolution", "h"): (lambda v: v > 0, "must be > 0"),
    ("evolution", "method"): (lambda v: v in ("direct", "fft"), "must be 'direct' or 'fft'"),
    ("evolution", "amplification"): (lambda v: v >= 1, "must be >= 1"),
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def _where(path, text, section, key=None) -> str:
    line = _line_of(text, section, key)
    loc = f"{path}:{line}" if line else str(path)
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _convert(raw: str, annotation: str, where: str):
    """Convert by the field's (string) annotation; optional fields accept 'auto'."""
    raw = raw.strip()
    kind, _, rest = annotation.partition("|")
    kind = kind.strip()
    if "None" in rest and raw.lower() in (AUTO, "none", ""):
        return None
    try:
        if kind == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        if kind == "int":
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = [s for s in cp.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"{_where(source, text, unknown[0])}: unknown section")
    if not cp.has_section("model"):
        raise ConfigError(f"{source}: missing [model] section")
    built = {}
    for name, cls in _SECTIONS.items():
        fields = cls.__dataclass_fields__
        kw = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in fields:
                    raise ConfigError(f"{_where(source, text, name, key)}: unknown key")
                kw[key] = _convert(raw, fields[key].type, _where(source, text, name, key))
        for key, f in fields.items():
            if key not in kw and f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(f"{_where(source, text, name)}: missing required key {key!r}")
        for key, val in kw.items():
            rule = _RULES.get((name, key))
            if rule and not rule[0](val):
                raise ConfigError(f"{_where(source, text, name, key)} = {val!r} {rule[1]}")
        built[name] = cls(**kw)
    g, e = built["grid"], built["evolution"]
    if not g.xi_min < g.xi_max:
        raise ConfigError(f"{_where(source, text, 'grid', 'xi_max')}: need xi_min < xi_max")
    if not e.xi_min < e.xi_max:
        raise ConfigError(f"{_where(source, text, 'evolution', 'xi_max')}: need xi_min < xi_max")
    return ExperimentConfig(**built, source=source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render every field (defaults included) back to the config format."""
    lines = []
    for name, sec in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for k, v in sec.items():
            lines.append(f"{k} = {AUTO if v is None else v}")
        lines.append("")
    return "\n".join(lines)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    config: dict
    tool_version: str
    started: str
    finished: str | None = None
    outputs: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def begin(cls, command: str, cfg: ExperimentConfig) -> "RunManifest":
        from . import __version__
        return cls(command, cfg.digest(), cfg.to_dict(), __version__, _now())

    def add(self, path) -> None:
        p = Path(path)
        self.outputs.append({"path": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)})

    def finish(self, out_dir) -> Path:
        self.finished = _now()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

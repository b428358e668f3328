"""Scenario configuration: physical models, strategy, security parameters.

The on-disk format is a flat list of ``section.key = value`` lines. Every
such file is also valid TOML, so parsing goes through ``tomllib``/``tomli``.
Unknown keys are rejected so that typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class DetectorModel:
    eta_d0: float = 0.78
    eta_d1: float = 0.78
    pd0: float = 1e-8
    pd1: float = 1e-8

    def validate(self, prefix: str = "detector") -> None:
        for name in ("eta_d0", "eta_d1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{prefix}.{name}", f"must lie in [0, 1], got {v}")
        for name in ("pd0", "pd1"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{prefix}.{name}", f"must lie in [0, 1), got {v}")


@dataclass(frozen=True)
class SourceModel:
    """One party's weak-coherent source; the vacuum intensity is always 0."""

    mu: float = 0.542
    nu: float = 0.035
    p_mu: float = 0.261
    p_nu: float = 0.344
    p_o: float = 0.395

    @property
    def intensities(self) -> tuple[float, float, float]:
        """Mean photon numbers ordered as (o, nu, mu)."""
        return (0.0, self.nu, self.mu)

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.p_o, self.p_nu, self.p_mu)

    def validate(self, prefix: str) -> None:
        if not self.mu > 0:
            raise ConfigError(f"{prefix}.mu", f"must be positive, got {self.mu}")
        if self.nu < 0:
            raise ConfigError(f"{prefix}.nu", f"must be non-negative, got {self.nu}")
        if not self.nu < self.mu:
            raise ConfigError(f"{prefix}.nu", f"decoy {self.nu} must be below signal {self.mu}")
        for name in ("p_mu", "p_nu", "p_o"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{prefix}.{name}", f"must lie in [0, 1], got {v}")
        total = self.p_mu + self.p_nu + self.p_o
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"{prefix}.p_o", f"p_mu + p_nu + p_o = {total!r}, expected 1")


@dataclass(frozen=True)
class LinkModel:
    """Fibre link with Charlie in the middle by default.

    ``split`` is the fraction of ``total_distance`` on Alice's side.
    """

    total_distance: float = 0.0
    loss_coeff: float = 0.2
    split: float = 0.5

    @property
    def eta_a(self) -> float:
        return 10.0 ** (-self.loss_coeff * self.total_distance * self.split / 10.0)

    @property
    def eta_b(self) -> float:
        return 10.0 ** (-self.loss_coeff * self.total_distance * (1.0 - self.split) / 10.0)

    @property
    def eta(self) -> float:
        """End-to-end Alice-Bob transmittance."""
        return 10.0 ** (-self.loss_coeff * self.total_distance / 10.0)

    def validate(self, prefix: str = "link") -> None:
        if self.total_distance < 0 or not math.isfinite(self.total_distance):
            raise ConfigError(f"{prefix}.total_distance", f"must be finite and >= 0, got {self.total_distance}")
        if self.loss_coeff < 0:
            raise ConfigError(f"{prefix}.loss_coeff", f"must be >= 0, got {self.loss_coeff}")
        if not 0.0 <= self.split <= 1.0:
            raise ConfigError(f"{prefix}.split", f"must lie in [0, 1], got {self.split}")


@dataclass(frozen=True)
class MisalignmentModel:
    enabled: bool = False
    e_hom: float = 0.04
    delta_f: float = 10.0
    omega_fiber: float = 5.9e3
    clock_f: float = 1e9

    def validate(self, prefix: str = "misalignment") -> None:
        if not 0.0 <= self.e_hom <= 0.5:
            raise ConfigError(f"{prefix}.e_hom", f"must lie in [0, 0.5], got {self.e_hom}")
        if self.clock_f <= 0:
            raise ConfigError(f"{prefix}.clock_f", f"must be positive, got {self.clock_f}")


STRATEGIES = ("original", "flexible")
MODES = ("asymptotic", "finite")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "flexible"
    p_save: float = 1.0
    l: int = 200_000

    def validate(self, prefix: str = "strategy") -> None:
        if self.kind not in STRATEGIES:
            raise ConfigError(f"{prefix}.kind", f"must be one of {STRATEGIES}, got {self.kind!r}")
        if not 0.0 < self.p_save <= 1.0:
            raise ConfigError(f"{prefix}.p_save", f"must lie in (0, 1], got {self.p_save}")
        if int(self.l) != self.l or self.l < 1:
            raise ConfigError(f"{prefix}.l", f"must be a positive integer, got {self.l}")


@dataclass(frozen=True)
class SecurityEpsilons:
    eps_cor: float = 1e-10
    eps_prime: float = 1e-10
    eps_hat: float = 1e-10
    eps_PA: float = 1e-10
    eps_pe: float = 1e-10

    def validate(self, prefix: str = "eps") -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{prefix}.{f.name}", f"must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class ScenarioConfig:
    detector: DetectorModel = field(default_factory=DetectorModel)
    alice: SourceModel = field(default_factory=SourceModel)
    bob: SourceModel = field(default_factory=SourceModel)
    link: LinkModel = field(default_factory=LinkModel)
    misalignment: MisalignmentModel = field(default_factory=MisalignmentModel)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    eps: SecurityEpsilons = field(default_factory=SecurityEpsilons)
    N: float = 7.24e13
    M: int = 16
    f: float = 1.1
    mode: str = "finite"

    def validate(self) -> "ScenarioConfig":
        self.detector.validate()
        self.alice.validate("alice")
        self.bob.validate("bob")
        self.link.validate()
        self.misalignment.validate()
        self.strategy.validate()
        self.eps.validate()
        if not self.N >= 1:
            raise ConfigError("N", f"must be >= 1, got {self.N}")
        if int(self.M) != self.M or self.M < 2:
            raise ConfigError("M", f"must be an integer >= 2, got {self.M}")
        if self.f < 1.0:
            raise ConfigError("f", f"error-correction efficiency must be >= 1, got {self.f}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        return self

    # convenience copies used all over the sweeps
    def at_distance(self, km: float) -> "ScenarioConfig":
        return replace(self, link=replace(self.link, total_distance=float(km)))

    def with_strategy(self, kind: str | None = None, p_save: float | None = None, l: int | None = None) -> "ScenarioConfig":
        s = self.strategy
        return replace(self, strategy=StrategyConfig(
            kind=s.kind if kind is None else kind,
            p_save=s.p_save if p_save is None else float(p_save),
            l=s.l if l is None else int(l),
        ))


_SECTIONS = {
    "detector": DetectorModel,
    "alice": SourceModel,
    "bob": SourceModel,
    "link": LinkModel,
    "misalignment": MisalignmentModel,
    "strategy": StrategyConfig,
    "eps": SecurityEpsilons,
}
_TOP_LEVEL = ("N", "M", "f", "mode")

# where each default comes from; printed by --explain-defaults
DEFAULT_ORIGINS = {
    "detector.*": "published parameter set (SPD efficiency 78%, dark count 1e-8)",
    "alice.*, bob.*": "published parameter set (mu=0.542, nu=0.035, p_mu=0.261, p_nu=0.344)",
    "link.loss_coeff": "published parameter set (0.2 dB/km)",
    "link.split": "published parameter set (Charlie midway)",
    "link.total_distance": "design decision (0 km; set per run)",
    "misalignment.*": "published misalignment setting (E_HOM=0.04, df=10 Hz, w=5.9e3 rad/s, F=1e9); disabled by default",
    "strategy.l": "published parameter set (l=2e5)",
    "strategy.kind": "design decision (flexible)",
    "strategy.p_save": "design decision (1.0; use `optimize` to tune)",
    "eps.*": "design decision (1e-10 each; no published value)",
    "N": "published parameter set (7.24e13)",
    "M": "published example (M=16)",
    "f": "design decision (1.1; no published value)",
    "mode": "design decision (finite)",
}


def _coerce(path: str, target: Any, value: Any) -> Any:
    if isinstance(target, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(target, int) and not isinstance(target, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(target, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(target, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, "unsupported field type")  # pragma: no cover


def config_from_mapping(data: dict[str, Any]) -> ScenarioConfig:
    """Build a validated scenario from a (possibly nested) mapping."""
    cfg = ScenarioConfig()
    updates: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a section of key = value pairs")
            current = getattr(cfg, key)
            known = {f.name for f in fields(current)}
            sub = {}
            for k, v in value.items():
                if k not in known:
                    raise ConfigError(f"{key}.{k}", "unknown key")
                sub[k] = _coerce(f"{key}.{k}", getattr(current, k), v)
            updates[key] = replace(current, **sub)
        elif key in _TOP_LEVEL:
            updates[key] = _coerce(key, getattr(cfg, key), value)
        else:
            raise ConfigError(key, "unknown key")
    return replace(cfg, **updates).validate()


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"parse error: {exc}") from exc
    return config_from_mapping(data)


def load_config(path: str | Path) -> ScenarioConfig:
    return loads_config(Path(path).read_text(encoding="utf-8"))


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_flat(cfg: ScenarioConfig) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key in _TOP_LEVEL:
        flat[key] = getattr(cfg, key)
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            flat[f"{section}.{f.name}"] = getattr(obj, f.name)
    return flat


def dumps_config(cfg: ScenarioConfig) -> str:
    lines = [f"{k} = {_fmt(v)}" for k, v in config_to_flat(cfg).items()]
    return "\n".join(lines) + "\n"


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")


def as_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)

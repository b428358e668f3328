"""Distance and parameter sweeps, p_save optimization and figure presets."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import build_click_model
from .config import ScenarioConfig
from .decoy import estimate_asymptotic, estimate_finite, pair_choice_probs
from .keyrate import KeyRateResult, asymptotic_key_rate, finite_key_rate
from .pairing import analytic_pair_counts

P_SAVE_MIN = 1e-3
P_SAVE_GRID = 40
GOLDEN_TOL = 1e-4
CSV_COLUMNS = ("distance_km", "mode", "strategy", "N", "l", "p_save", "R", "E_z",
               "n11_lower", "e11x_upper", "improvement")
VARIABLES = ("distance", "N", "l", "p_save")


def evaluate_point(scenario: ScenarioConfig) -> KeyRateResult:
    """Click model, expected counts, decoy bounds and key rate for one scenario."""
    click_model = build_click_model(scenario)
    table = analytic_pair_counts(scenario, click_model)
    probs = pair_choice_probs(scenario)
    if scenario.mode == "asymptotic":
        bounds = estimate_asymptotic(table, probs, scenario)
        return asymptotic_key_rate(bounds, table, scenario.N, scenario.f)
    bounds = estimate_finite(table, probs, scenario)
    return finite_key_rate(bounds, table, scenario.eps, scenario.N, scenario.f)


def p_save_grid(resolution: int = P_SAVE_GRID) -> np.ndarray:
    return np.geomspace(P_SAVE_MIN, 1.0, resolution)


@dataclass
class PSaveOptimum:
    p_save: float
    R: float
    result: KeyRateResult

    def __iter__(self):
        # unpacks as (p_save*, R*)
        return iter((self.p_save, self.R))


def optimize_p_save(scenario: ScenarioConfig, resolution: int = P_SAVE_GRID,
                    refine: bool = True, tol: float = GOLDEN_TOL) -> PSaveOptimum:
    """Maximize the flexible-strategy key rate over p_save in (0, 1].

    A log-spaced grid scan is followed by a bounded golden-section search
    (with parabolic steps) over ln p_save between the neighbours of the
    best grid point. If the rate falls monotonically along the whole grid,
    the grid minimum is returned as is.
    """
    scenario = scenario.with_strategy(kind="flexible")
    grid = p_save_grid(resolution)
    results = [evaluate_point(scenario.with_strategy(p_save=float(p))) for p in grid]
    rates = np.array([r.R for r in results])
    best = int(np.argmax(rates))
    if rates[best] <= 0.0:
        return PSaveOptimum(math.nan, 0.0, results[best])
    monotone = bool(np.all(np.diff(rates) <= 0.0))
    if not refine or monotone:
        return PSaveOptimum(float(grid[best]), float(rates[best]), results[best])

    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, len(grid) - 1)])

    def negative_rate(x: float) -> float:
        return -evaluate_point(scenario.with_strategy(p_save=math.exp(x))).R

    found = minimize_scalar(negative_rate, bounds=(lo, hi), method="bounded",
                            options={"xatol": tol})
    p_star = min(math.exp(found.x), 1.0)
    refined = evaluate_point(scenario.with_strategy(p_save=p_star))
    if refined.R >= rates[best]:
        return PSaveOptimum(p_star, refined.R, refined)
    return PSaveOptimum(float(grid[best]), float(rates[best]), results[best])


def improvement(r_flex: float, r_orig: float) -> float:
    """R_flex / R_orig - 1; +inf when only the flexible strategy is feasible."""
    if r_orig > 0.0:
        return r_flex / r_orig - 1.0
    return math.inf if r_flex > 0.0 else math.nan


def cutoff_distance(distances: Sequence[float], rates: Sequence[float]) -> float:
    """Largest grid distance with a positive rate (nan if none)."""
    feasible = [d for d, r in zip(distances, rates) if r > 0.0]
    return max(feasible) if feasible else math.nan


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    distances: list[float]
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    variable: str = "distance"
    values: list[float] = field(default_factory=list)
    strategies: tuple[str, ...] = ("original", "flexible")
    mode: str | None = None
    optimize: bool = True
    name: str = "sweep"

    def validate(self) -> "SweepSpec":
        if not self.distances:
            raise ValueError("distance grid is empty")
        if any(b <= a for a, b in zip(self.distances, self.distances[1:])):
            raise ValueError("distances must be strictly increasing")
        if self.variable not in VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if self.variable != "distance" and not self.values:
            raise ValueError(f"sweeping {self.variable} needs a list of values")
        for s in self.strategies:
            if s not in ("original", "flexible"):
                raise ValueError(f"unknown strategy {s!r}")
        if self.mode not in (None, "asymptotic", "finite"):
            raise ValueError(f"unknown mode {self.mode!r}")
        return self

    def scenarios(self) -> list[tuple[float | None, float, str, ScenarioConfig]]:
        """Work items ``(value, distance, strategy, scenario)`` in output order."""
        base = self.base if self.mode is None else replace(self.base, mode=self.mode)
        values = self.values if self.variable != "distance" else [None]
        items = []
        for value in values:
            scen = base
            if self.variable == "N":
                scen = replace(scen, N=float(value))
            elif self.variable == "l":
                scen = scen.with_strategy(l=int(value))
            elif self.variable == "p_save":
                scen = scen.with_strategy(p_save=float(value))
            for d in self.distances:
                for s in self.strategies:
                    items.append((value, float(d), s, scen.at_distance(d).with_strategy(kind=s)))
        return items


@dataclass
class SweepPoint:
    value: float | None
    distance_km: float
    strategy: str
    mode: str
    N: float
    l: int
    p_save: float
    R: float
    E_z: float
    n11_lower: float
    e11x_upper: float
    feasible: bool
    improvement: float | None = None
    error: str | None = None


@dataclass
class SweepResult:
    spec_name: str
    variable: str
    points: list[SweepPoint]

    def rows(self, strategy: str | None = None, value=None) -> list[SweepPoint]:
        return [p for p in self.points
                if (strategy is None or p.strategy == strategy) and (value is None or p.value == value)]

    def series(self, strategy: str, value=None) -> tuple[list[float], list[float]]:
        pts = self.rows(strategy, value)
        return [p.distance_km for p in pts], [p.R for p in pts]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for p in self.points:
            writer.writerow([
                _num(p.distance_km), p.mode, p.strategy, _num(p.N), p.l, _num(p.p_save),
                _num(p.R), _num(p.E_z), _num(p.n11_lower), _num(p.e11x_upper),
                "" if p.improvement is None else _num(p.improvement),
            ])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {"spec_name": self.spec_name, "variable": self.variable,
                "points": [asdict(p) for p in self.points]}


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _evaluate_item(item, optimize: bool) -> SweepPoint:
    value, distance, strategy, scen = item
    try:
        if strategy == "flexible" and optimize:
            best = optimize_p_save(scen)
            p_save, res = best.p_save, best.result
        else:
            p_save = scen.strategy.p_save if strategy == "flexible" else 1.0
            res = evaluate_point(scen)
        return SweepPoint(value, distance, strategy, scen.mode, scen.N, scen.strategy.l, p_save,
                          res.R, res.E_z, res.n11_z_lower, res.e11_x_upper, res.feasible)
    except Exception as exc:  # recorded per point, the sweep goes on
        return SweepPoint(value, distance, strategy, scen.mode, scen.N, scen.strategy.l,
                          math.nan, math.nan, math.nan, math.nan, math.nan, False,
                          error=f"{type(exc).__name__}: {exc}")


def worker_count() -> int:
    env = os.environ.get("MPQKD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"MPQKD_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    spec.validate()
    items = spec.scenarios()
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_evaluate_item, items, [spec.optimize] * len(items)))
    else:
        points = [_evaluate_item(it, spec.optimize) for it in items]

    if "original" in spec.strategies and "flexible" in spec.strategies:
        orig = {(p.value, p.distance_km): p for p in points if p.strategy == "original"}
        for p in points:
            o = orig[(p.value, p.distance_km)]
            if p.strategy == "flexible" and p.error is None and o.error is None:
                p.improvement = improvement(p.R, o.R)
    return SweepResult(spec.name, spec.variable, points)


# --------------------------------------------------------------------------
# figure presets


def default_distances(stop: float = 600.0, step: float = 5.0) -> list[float]:
    return [float(d) for d in np.arange(0.0, stop + step / 2, step)]


def figure_specs(name: str, base: ScenarioConfig | None = None,
                 distances: list[float] | None = None) -> list[SweepSpec]:
    """Sweep specs for the named figure preset (fig2 ... fig7)."""
    base = ScenarioConfig() if base is None else base
    grid = default_distances() if distances is None else distances
    if name in ("fig2", "fig3"):
        return [SweepSpec(grid, base, "l", [200, 20000, 200000], mode="asymptotic", name=name)]
    if name == "fig4":
        return [SweepSpec(grid, base, "N", [7.24e13, 1e11, 1e10], mode="finite", name=name)]
    if name == "fig5":
        return [SweepSpec(grid, base, "N", [1e8, 1e9, 1e10, 1e11, 1e12, 7.24e13],
                          mode="finite", name=name)]
    if name == "fig6":
        specs = []
        for l in (20000, 200000):
            for N in (1e10, 1e11, 7.24e13):
                scen = replace(base, N=N).with_strategy(l=l)
                specs.append(SweepSpec(grid, scen, strategies=("flexible",), mode="finite",
                                       name=f"fig6_l{l}_N{N:.3g}"))
        return specs
    if name == "fig7":
        specs = []
        for eta in (0.9, 0.3):
            det = replace(base.detector, eta_d0=eta, eta_d1=eta)
            specs.append(SweepSpec(grid, replace(base, detector=det), mode="finite",
                                   name=f"fig7_eta{eta}"))
        mis = replace(base.misalignment, enabled=True)
        specs.append(SweepSpec(grid, replace(base, misalignment=mis), mode="finite",
                               name="fig7_misalignment"))
        return specs
    raise ValueError(f"unknown figure preset {name!r}; choose from {', '.join(FIGURES)}")


FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7")

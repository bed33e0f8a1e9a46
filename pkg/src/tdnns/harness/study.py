"""Convergence, interpolation and stability studies on the structured cube family."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..assembly import MaterialLaw, assemble_system
from ..interpolation import FieldFunction, interpolate_sigma, interpolate_v, interpolate_w
from ..mesh import build_structured_cube
from ..norms import DualNorm, broken_h1_norm, h1_norm, hcurl_norm, sigma_h_norm
from ..reference import SIGMA, V, W
from ..solver import solve_saddle, stability_constants
from ..space import FESpace
from .cases import get_case

KINDS = ("solve", "interp", "stability")
SOLVE_CAP = {1: 8, 2: 4}
EIG_LEVEL_CAP = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    case: str = "TRIG"
    order: int = 1
    levels: tuple[int, ...] = (2, 4)
    E: float = 1.0
    nu: float = 0.3
    csv: str | None = None
    vtk: bool = False
    kind: str = "solve"
    exploratory: bool = False

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels or any(n < 1 for n in levels):
            raise ConfigError("levels must be positive integers")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {levels}")
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        # near-incompressible runs are allowed only as an explicit opt-in
        nu_max = 0.5 if self.exploratory else 0.49
        if not self.nu < nu_max:
            raise ConfigError(f"nu must be below {nu_max}, got {self.nu}")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def material(self) -> MaterialLaw:
        return MaterialLaw(self.E, self.nu)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "levels":
        return tuple(int(t) for t in raw.replace(",", " ").split())
    if key == "order":
        return int(raw)
    if key in ("E", "nu"):
        return float(raw)
    if key in ("vtk", "exploratory"):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{key} must be a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if key == "csv":
        return raw or None
    return raw


def parse_config(text: str, **overrides) -> StudyConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    known = {f.name for f in fields(StudyConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "k":
            key = "order"
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; allowed: {', '.join(sorted(known))}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**values)


def load_config(path, **overrides) -> StudyConfig:
    return parse_config(Path(path).read_text(), **overrides)


# -- tables -------------------------------------------------------------------


@dataclass
class StudyTable:
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r.get(c)) for c in self.columns) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{float(v):.12e}"


def rate(e_coarse: float, e_fine: float, n_coarse: int, n_fine: int) -> float:
    """Observed order between two levels; ``log2(e_coarse / e_fine)`` when
    ``n_fine = 2 n_coarse``."""
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(n_fine / n_coarse)


def _add_rates(table: StudyTable, names, levels) -> None:
    for i, row in enumerate(table.rows):
        for name in names:
            if i == 0:
                row[f"rate_{name}"] = float("nan")
            else:
                prev = table.rows[i - 1]
                row[f"rate_{name}"] = rate(prev[name], row[name], levels[i - 1], levels[i])


def _columns(base, rated):
    return tuple(base) + tuple(f"rate_{n}" for n in rated)


# -- studies ------------------------------------------------------------------


def _spaces(config: StudyConfig, n: int):
    case = get_case(config.case, config.material)
    mesh = build_structured_cube(n, case.dirichlet_spec)
    return case, mesh, FESpace(mesh, SIGMA, config.order), FESpace(mesh, V, config.order)


def _map_levels(fn, config: StudyConfig, jobs: int):
    """Run ``fn(config, n)`` for every level, in order; levels are
    independent, so ``jobs > 1`` runs them in separate processes."""
    if jobs <= 1 or len(config.levels) == 1:
        return [fn(config, n) for n in config.levels]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(jobs, len(config.levels))) as pool:
        return list(pool.map(fn, [config] * len(config.levels), config.levels))


CONVERGENCE_ERRORS = ("l2", "face", "dual", "sigma_h", "hcurl", "combined")
CONVERGENCE_RATED = ("l2", "sigma_h", "hcurl", "combined")


def convergence_level(config: StudyConfig, n: int, vtk_dir=None) -> dict:
    case, mesh, S, Vs = _spaces(config, n)
    system = assemble_system(S, Vs, config.material, case)
    try:
        sol = solve_saddle(system, with_inertia=False)
    except RuntimeError as exc:
        raise RuntimeError(f"level n={n}: {exc}") from exc
    dual = DualNorm(S, Vs, B=system.B)
    rep = sigma_h_norm(S, sol.sigma, case.sigma, dual)
    hc = hcurl_norm(Vs, sol.u, case.displacement)
    if vtk_dir is not None:
        from .vtk import write_solution_vtk

        write_solution_vtk(Path(vtk_dir) / f"{case.name.lower()}_k{config.order}_n{n}.vtk", S, Vs, sol.sigma, sol.u)
    return dict(
        n=n,
        h=mesh.h,
        ndofs=S.ndofs + Vs.ndofs,
        l2=rep.l2_sigma,
        face=rep.face_term,
        dual=rep.dual_term,
        sigma_h=rep.sigma_h_norm,
        hcurl=hc,
        combined=rep.sigma_h_norm + hc,
        residual=sol.residual_rel,
    )


def run_convergence(config: StudyConfig, vtk_dir=None, jobs: int = 1) -> StudyTable:
    """Solve on each level and measure errors against the exact solution."""
    cap = SOLVE_CAP[config.order]
    if max(config.levels) > cap:
        raise ConfigError(f"order {config.order} solve studies are capped at n <= {cap}")
    table = StudyTable(_columns(("n", "h", "ndofs") + CONVERGENCE_ERRORS + ("residual",), CONVERGENCE_RATED))
    if vtk_dir is not None:
        table.rows = [convergence_level(config, n, vtk_dir) for n in config.levels]
    else:
        table.rows = _map_levels(convergence_level, config, jobs)
    _add_rates(table, CONVERGENCE_RATED, config.levels)
    return table


INTERP_ERRORS = ("sigma_l2", "sigma_h", "sigma_dual", "v_hcurl", "v_broken_h1", "w_h1")


def interp_level(config: StudyConfig, n: int) -> dict:
    case, mesh, S, Vs = _spaces(config, n)
    Ws = FESpace(mesh, W, config.order + 1)
    cs = interpolate_sigma(case.sigma, S)
    cv = interpolate_v(case.u, Vs)
    grad_u = case.grad_u
    scalar = FieldFunction(lambda X: case.u(X)[:, 0], lambda X: grad_u(X)[:, 0, :])
    cw = interpolate_w(scalar, Ws)
    rep = sigma_h_norm(S, cs, case.sigma, DualNorm(S, Vs))
    return dict(
        n=n,
        h=mesh.h,
        sigma_l2=rep.l2_sigma,
        sigma_h=rep.sigma_h_norm,
        sigma_dual=rep.dual_term,
        v_hcurl=hcurl_norm(Vs, cv, case.displacement),
        v_broken_h1=broken_h1_norm(Vs, cv, case.displacement),
        w_h1=h1_norm(Ws, cw, scalar),
    )


def run_interp_rates(config: StudyConfig, jobs: int = 1) -> StudyTable:
    """Interpolation errors of the exact stress, displacement and a scalar
    potential (the first displacement component)."""
    table = StudyTable(_columns(("n", "h") + INTERP_ERRORS, INTERP_ERRORS))
    table.rows = _map_levels(interp_level, config, jobs)
    _add_rates(table, INTERP_ERRORS, config.levels)
    return table


STABILITY_VALUES = ("infsup", "coercivity", "continuity")
STABILITY_COLUMNS = ("n", "h", "infsup", "coercivity", "continuity", "kernel_dim", "face_domination")


def stability_level(config: StudyConfig, n: int) -> dict:
    _, mesh, S, Vs = _spaces(config, n)
    rep = stability_constants(S, Vs, config.material, level=n)
    return dict(
        n=n,
        h=mesh.h,
        infsup=rep.infsup_constant,
        coercivity=rep.kernel_coercivity_constant,
        continuity=rep.continuity_constant,
        kernel_dim=rep.kernel_dimension,
        face_domination=rep.face_domination,
    )


def run_stability(config: StudyConfig, jobs: int = 1) -> StudyTable:
    """Discrete stability constants per level; ratios relative to the previous level."""
    if max(config.levels) > EIG_LEVEL_CAP:
        raise ConfigError(f"stability studies are capped at n <= {EIG_LEVEL_CAP} (dense eigensolves)")
    table = StudyTable(STABILITY_COLUMNS + tuple(f"ratio_{v}" for v in STABILITY_VALUES))
    table.rows = _map_levels(stability_level, config, jobs)
    for prev, row in zip([None] + table.rows[:-1], table.rows):
        for v in STABILITY_VALUES:
            row[f"ratio_{v}"] = row[v] / prev[v] if prev else float("nan")
    return table


def run_study(config: StudyConfig, vtk_dir=None, jobs: int = 1) -> StudyTable:
    if config.kind == "solve":
        table = run_convergence(config, vtk_dir if config.vtk else None, jobs)
    elif config.kind == "interp":
        table = run_interp_rates(config, jobs)
    else:
        table = run_stability(config, jobs)
    if config.csv:
        table.write_csv(config.csv)
    return table


def with_kind(config: StudyConfig, kind: str) -> StudyConfig:
    return replace(config, kind=kind)

"""Problem files: INI sections of ``key = expression`` pairs.

Section problems (``kind = section`` or ``kind = solver``)::

    [problem]
    kind = section            ; section | solver | manifold
    name = laplace
    n = 2
    N = 1
    seed = 0

    [hamiltonian]
    H = 0.5*(p1_1^2 + p1_2^2)

    [section]                 ; one key per fibre coordinate, in x1..xn
    q1 = x1*x2
    p1_1 = x2
    p1_2 = x1

    [perturbation]            ; optional: add eps * (seeded random modes)
    eps = 0.01
    seed = 3

    [domain]                  ; evaluation / integration box
    x1 = 0, 1
    x2 = 0, 1

    [verify]
    suites = hv, pullback_vertical, pullback_full, vortex, dhdw
    grid = 9                  ; nodes per axis (analytic sections)
    tol = 1e-6                ; grid sections default to 5 h^2
    step =                    ; relative difference step, blank = scheme default
    scheme = central

    [solver]                  ; kind = solver
    method = laplace          ; laplace | ode
    grid = 65
    boundary = x1*x2
    omega = 1.9
    ; ode: q0, p0 (comma lists), step

Manifold problems (``kind = manifold``) use 1-based index keys::

    [manifold]
    dim = 2
    n = 1
    coordinates = q, p        ; default z1..zdim

    [omega]
    1,2 = 1

    [hamiltonian]             ; degree 0: key H; higher degree: index keys
    H = 0.5*(q^2 + p^2)

    [samples]
    count = 20
    bounds = -1, 1
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .algebra import AlternatingForm, multi_indices
from .bundle import BundleShape, HamiltonVolterraFunction
from .calculus import ChartedDomain, DifferentiationConfig, FormField
from .catalog import ExampleSpec, get_example
from .equations import FIVE_WAY, ALL_SUITES, AnalyticSection, perturbed
from .expr import ExpressionError, compile_function, compile_gradient, parse_expression
from .nplectic import HamiltonianForm, NPlecticManifold
from .symbolic import base_names, section_from_text, volterra_from_text

__all__ = ["ProblemError", "Problem", "ManifoldProblem", "load_problem", "problem_from_example",
           "example_problems", "builtin_problems", "parse_box"]


class ProblemError(ValueError):
    """Malformed or inconsistent problem file."""


def builtin_problems() -> list[str]:
    root = resources.files("multisym") / "problems"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def _read_text(source: str) -> tuple[str, str]:
    path = Path(source)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.stem
    name = source[:-4] if source.endswith(".ini") else source
    res = resources.files("multisym") / "problems" / f"{name}.ini"
    if res.is_file():
        return res.read_text(encoding="utf-8"), name
    raise ProblemError(f"no problem file {source!r} (built-ins: {', '.join(builtin_problems())})")


def parse_box(text: str, dim: int | None = None) -> ChartedDomain:
    """``"a,b"`` per axis, axes separated by ``;``."""
    try:
        axes = [tuple(float(v) for v in part.split(",")) for part in text.split(";") if part.strip()]
        if any(len(a) != 2 for a in axes):
            raise ValueError("each axis needs exactly two bounds")
        box = ChartedDomain(tuple(axes))
    except ValueError as exc:
        raise ProblemError(f"bad box {text!r}: {exc}") from None
    if dim is not None and box.dim != dim:
        raise ProblemError(f"box {text!r} has {box.dim} axes, expected {dim}")
    return box


def _expand(box: ChartedDomain, frac: float = 0.25) -> ChartedDomain:
    w = box.upper - box.lower
    return ChartedDomain(tuple(zip(box.lower - frac * w, box.upper + frac * w)))


@dataclass
class Problem:
    """A Hamilton-Volterra problem with either an analytic section or a solver request."""

    name: str
    shape: BundleShape
    hamiltonian: str
    box: ChartedDomain
    section: Optional[AnalyticSection] = None
    solver: dict = field(default_factory=dict)
    suites: tuple = FIVE_WAY
    grid: int = 9
    tol: Optional[float] = None
    cfg: DifferentiationConfig = field(default_factory=DifferentiationConfig)
    seed: int = 0
    echo: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "solver" if self.section is None else "section"

    def volterra(self) -> HamiltonVolterraFunction:
        return volterra_from_text(self.shape, self.hamiltonian, name=self.name)

    def solve(self, grid: int | None = None, step: float | None = None):
        spec = ExampleSpec(self.name, self.shape.n, self.shape.N, self.hamiltonian,
                           _expand(self.box).bounds, self.box.bounds, solver=self.solver.get("method"),
                           solver_params=_solver_params(self.solver, self.shape))
        overrides = {}
        if grid is not None:
            overrides["grid"] = grid
        if step is not None:
            overrides["step"] = step
        try:
            return spec.solve(**overrides)
        except KeyError as exc:
            raise ProblemError(f"[solver] is missing {exc.args[0]!r}") from None


def _solver_params(raw: dict, shape: BundleShape) -> dict:
    out = {}
    for key, val in raw.items():
        if key in ("grid",):
            out[key] = int(val)
        elif key in ("omega", "tol", "step"):
            out[key] = float(val)
        elif key in ("q0", "p0"):
            out[key] = [float(v) for v in str(val).split(",")]
        elif key != "method":
            out[key] = val
    return out


@dataclass
class ManifoldProblem:
    name: str
    manifold: NPlecticManifold
    hamiltonian: Optional[HamiltonianForm]
    coordinates: list
    samples: np.ndarray
    echo: dict = field(default_factory=dict)


def _int(section, key, default=None):
    try:
        raw = section.get(key)
        if raw is None or raw.strip() == "":
            if default is None:
                raise ProblemError(f"missing [{section.name}] {key}")
            return default
        return int(raw)
    except ValueError:
        raise ProblemError(f"[{section.name}] {key} must be an integer, got {section.get(key)!r}") from None


def _float(section, key, default=None):
    raw = section.get(key) if section is not None else None
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ProblemError(f"[{section.name}] {key} must be a number, got {raw!r}") from None


def _expr_check(text: str, allowed, where: str):
    try:
        return parse_expression(text, allowed)
    except ExpressionError as exc:
        raise ProblemError(f"{where}: {exc}") from None


def load_problem(source: str):
    """Parse a problem file (path or built-in name)."""
    text, stem = _read_text(source)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ProblemError(f"cannot parse {source}: {exc}") from None
    if not cp.has_section("problem") and not cp.has_section("manifold"):
        raise ProblemError(f"{source}: needs a [problem] or [manifold] section")
    kind = cp.get("problem", "kind", fallback="manifold" if cp.has_section("manifold") else "section")
    name = cp.get("problem", "name", fallback=stem)
    if kind == "manifold":
        return _load_manifold(cp, name)
    if kind not in ("section", "solver"):
        raise ProblemError(f"unknown problem kind {kind!r}")
    return _load_section_problem(cp, name, kind)


def _load_section_problem(cp, name: str, kind: str) -> Problem:
    prob = cp["problem"]
    shape = BundleShape(_int(prob, "n"), _int(prob, "N"))
    seed = _int(prob, "seed", 0)
    if not cp.has_option("hamiltonian", "H"):
        raise ProblemError("missing [hamiltonian] H")
    H = cp.get("hamiltonian", "H")
    _expr_check(H, shape.names_P, "[hamiltonian] H")

    if not cp.has_section("domain"):
        raise ProblemError("missing [domain]")
    axes = []
    for xname in base_names(shape.n):
        if not cp.has_option("domain", xname):
            raise ProblemError(f"missing [domain] {xname}")
        axes.append(cp.get("domain", xname))
    box = parse_box(";".join(axes), shape.n)

    section = None
    solver = {}
    if kind == "section":
        if not cp.has_section("section"):
            raise ProblemError("kind = section needs a [section] block")
        sec = cp["section"]
        extra = set(sec) - set(shape.names_P[shape.n:])
        if extra:
            raise ProblemError(f"[section] has unknown keys {sorted(extra)}")
        qs, ps = [], []
        for a in range(shape.N):
            key = f"q{a + 1}"
            if key not in sec:
                raise ProblemError(f"missing [section] {key}")
            qs.append(sec[key])
            row = []
            for mu in range(shape.n):
                key = f"p{a + 1}_{mu + 1}"
                if key not in sec:
                    raise ProblemError(f"missing [section] {key}")
                row.append(sec[key])
            ps.append(row)
        for t in qs + [t for r in ps for t in r]:
            _expr_check(t, base_names(shape.n), "[section]")
        section = section_from_text(shape, qs, ps, _expand(box), name=name)
        if cp.has_section("perturbation"):
            pert = cp["perturbation"]
            eps = _float(pert, "eps", 0.0)
            section = perturbed(section, eps, _int(pert, "seed", seed), _int(pert, "modes", 2))
    else:
        if not cp.has_section("solver"):
            raise ProblemError("kind = solver needs a [solver] block")
        solver = dict(cp["solver"])
        if solver.get("method") not in ("laplace", "ode"):
            raise ProblemError(f"unknown solver method {solver.get('method')!r}")
        if "boundary" in solver:
            _expr_check(solver["boundary"], base_names(shape.n), "[solver] boundary")

    ver = cp["verify"] if cp.has_section("verify") else None
    suites = FIVE_WAY
    if ver is not None and ver.get("suites"):
        suites = tuple(s.strip() for s in ver["suites"].split(",") if s.strip())
        bad = [s for s in suites if s not in ALL_SUITES]
        if bad:
            raise ProblemError(f"unknown suites {bad}; choose from {list(ALL_SUITES)}")
    try:
        cfg = DifferentiationConfig(_float(ver, "step"), ver.get("scheme", "central") if ver is not None else "central")
    except ValueError as exc:
        raise ProblemError(f"[verify]: {exc}") from None
    grid = _int(ver, "grid", 9) if ver is not None else 9
    echo = {section_name: dict(cp[section_name]) for section_name in cp.sections()}
    return Problem(name, shape, H, box, section, solver, suites, grid, _float(ver, "tol"), cfg, seed, echo)


def _load_manifold(cp, name: str) -> ManifoldProblem:
    if not cp.has_section("manifold"):
        raise ProblemError("kind = manifold needs a [manifold] block")
    man = cp["manifold"]
    dim, n = _int(man, "dim"), _int(man, "n")
    coords = [c.strip() for c in man.get("coordinates", "").split(",") if c.strip()] \
        or [f"z{i + 1}" for i in range(dim)]
    if len(coords) != dim:
        raise ProblemError(f"{len(coords)} coordinate names for dim = {dim}")
    if not cp.has_section("omega"):
        raise ProblemError("missing [omega]")
    omega = _form_field(cp["omega"], dim, n + 1, coords, "[omega]")
    M = NPlecticManifold(dim, n, omega, name=name)
    H = None
    if cp.has_section("hamiltonian"):
        hs = cp["hamiltonian"]
        if "H" in hs:
            tree = _expr_check(hs["H"], coords, "[hamiltonian] H")
            H = HamiltonianForm.from_function(dim, compile_function(tree, coords), compile_gradient(tree, coords))
        else:
            degree = _int(hs, "degree")
            H = HamiltonianForm(_form_field(hs, dim, degree, coords, "[hamiltonian]", skip=("degree",)))
    smp = cp["samples"] if cp.has_section("samples") else None
    count = _int(smp, "count", 20) if smp is not None else 20
    lo, hi = -1.0, 1.0
    if smp is not None and smp.get("bounds"):
        lo, hi = parse_box(smp["bounds"]).bounds[0]
    seed = _int(cp["problem"], "seed", 0) if cp.has_section("problem") else 0
    samples = np.random.default_rng(seed).uniform(lo, hi, size=(count, dim))
    echo = {s: dict(cp[s]) for s in cp.sections()}
    return ManifoldProblem(name, M, H, coords, samples, echo)


def _form_field(section, dim: int, degree: int, coords, where: str, skip=()) -> FormField:
    entries = []
    valid = set(multi_indices(dim, degree))
    for key, text in section.items():
        if key in skip:
            continue
        try:
            idx = tuple(int(v) - 1 for v in key.split(","))
        except ValueError:
            raise ProblemError(f"{where}: key {key!r} is not a comma list of indices") from None
        if len(idx) != degree or tuple(sorted(idx)) != idx or idx not in valid:
            raise ProblemError(f"{where}: {key!r} is not an increasing {degree}-index in 1..{dim}")
        entries.append((idx, compile_function(_expr_check(text, coords, f"{where} {key}"), coords)))

    def at(z):
        return AlternatingForm.from_dict(dim, degree, {I: f(z) for I, f in entries})

    return FormField(dim, degree, at)


def problem_from_example(spec: ExampleSpec, label: str | None = None, grid: int = 9) -> Problem:
    """A section problem for one exact solution of a catalog entry (or its solver when ``label`` is None)."""
    box = spec.evaluation_box
    if label is None:
        return Problem(spec.name, spec.shape, spec.hamiltonian, box, None,
                       {"method": spec.solver, **{k: (",".join(map(str, v)) if isinstance(v, list) else v)
                                                  for k, v in spec.solver_params.items()}},
                       grid=grid, echo={"example": spec.name, "solver": spec.solver})
    section = spec.sections()[label]
    return Problem(f"{spec.name}:{label}", spec.shape, spec.hamiltonian, box, section, grid=grid,
                   echo={"example": spec.name, "section": label})


def example_problems(name: str, grid: int = 9) -> list[Problem]:
    spec = get_example(name)
    out = [problem_from_example(spec, label, grid) for label in spec.exact]
    if spec.solver is not None:
        out.append(problem_from_example(spec, None, grid))
    return out


"""Worked examples: Hamiltonians, exact sections, known non-solutions and solver settings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bundle import BundleShape, HamiltonVolterraFunction
from .calculus import ChartedDomain
from .equations import AnalyticSection, DiscreteSection, action
from .solvers import solve_laplace, solve_ode
from .symbolic import section_from_text, volterra_from_text

__all__ = ["ExampleSpec", "catalog", "get_example", "laplace_action_growth"]


@dataclass(frozen=True)
class ExampleSpec:
    """A named example.

    ``exact`` and ``non_solutions`` map a label to ``(q_texts, pmom_texts)``.
    ``domain`` is where sections are defined; ``box`` is the evaluation and
    integration box, strictly inside ``domain``.
    """

    name: str
    n: int
    N: int
    hamiltonian: str
    domain: tuple
    box: tuple
    exact: dict = field(default_factory=dict)
    non_solutions: dict = field(default_factory=dict)
    solver: Optional[str] = None
    solver_params: dict = field(default_factory=dict)
    from_source: bool = True
    description: str = ""

    @property
    def shape(self) -> BundleShape:
        return BundleShape(self.n, self.N)

    @property
    def section_domain(self) -> ChartedDomain:
        return ChartedDomain(self.domain)

    @property
    def evaluation_box(self) -> ChartedDomain:
        return ChartedDomain(self.box)

    def volterra(self) -> HamiltonVolterraFunction:
        return volterra_from_text(self.shape, self.hamiltonian, name=self.name)

    def _build(self, table: dict) -> dict[str, AnalyticSection]:
        return {label: section_from_text(self.shape, q, p, self.section_domain, name=f"{self.name}:{label}")
                for label, (q, p) in table.items()}

    def sections(self) -> dict[str, AnalyticSection]:
        return self._build(self.exact)

    def non_solution_sections(self) -> dict[str, AnalyticSection]:
        return self._build(self.non_solutions)

    def solve(self, **overrides) -> DiscreteSection:
        params = {**self.solver_params, **overrides}
        if self.solver == "ode":
            return solve_ode(self.volterra(), params["q0"], params["p0"], self.box[0], params["step"])
        if self.solver == "laplace":
            boundary = section_from_text(self.shape, [params["boundary"]], [["0"] * self.n])
            return solve_laplace(lambda x: boundary.q(x)[0], self.evaluation_box,
                                 grid=params.get("grid", 65), omega=params.get("omega", 1.9),
                                 tol=params.get("tol", 1e-10))
        raise ValueError(f"example {self.name!r} has no solver")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "N": self.N,
            "hamiltonian": self.hamiltonian,
            "box": [list(b) for b in self.box],
            "exact": sorted(self.exact),
            "non_solutions": sorted(self.non_solutions),
            "solver": self.solver,
            "from_source": self.from_source,
            "description": self.description,
        }


_TWO_PI = 2 * np.pi

_CATALOG = (
    ExampleSpec(
        name="oscillator",
        n=1, N=1,
        hamiltonian="0.5*(p1_1^2 + q1^2)",
        domain=((-1.0, 7.5),),
        box=((0.0, _TWO_PI),),
        exact={"cos": (["cos(x1)"], [["-sin(x1)"]])},
        non_solutions={"cos-no-momentum": (["cos(x1)"], [["0"]])},
        solver="ode",
        solver_params={"q0": 1.0, "p0": 0.0, "step": 1e-3},
        description="harmonic oscillator; the equations reduce to Hamilton's ODEs",
    ),
    ExampleSpec(
        name="free-particle",
        n=1, N=1,
        hamiltonian="p1_1",
        domain=((-1.0, 7.5),),
        box=((0.0, _TWO_PI),),
        exact={"drift": (["1 + x1"], [["0.5"]])},
        non_solutions={"accelerating": (["x1^2"], [["0.5"]])},
        solver="ode",
        solver_params={"q0": 1.0, "p0": 0.5, "step": 1e-2},
        description="uniform drift q = q0 + x",
    ),
    ExampleSpec(
        name="laplace-example",
        n=2, N=1,
        hamiltonian="0.5*(p1_1^2 + p1_2^2)",
        domain=((-0.5, 1.5), (-0.5, 1.5)),
        box=((0.0, 1.0), (0.0, 1.0)),
        exact={
            "x1*x2": (["x1*x2"], [["x2", "x1"]]),
            "x1^2-x2^2": (["x1^2 - x2^2"], [["2*x1", "-2*x2"]]),
            "exp-sin": (["exp(x1)*sin(x2)"], [["exp(x1)*sin(x2)", "exp(x1)*cos(x2)"]]),
        },
        non_solutions={
            "q=x1": (["x1"], [["0", "0"]]),
            "x1^2+x2^2": (["x1^2 + x2^2"], [["2*x1", "2*x2"]]),
        },
        solver="laplace",
        solver_params={"boundary": "x1*x2", "grid": 65},
        description="Laplace equation for q with p = grad q",
    ),
    ExampleSpec(
        name="wave",
        n=2, N=1,
        hamiltonian="0.5*(p1_1^2 - p1_2^2)",
        domain=((-0.5, 1.5), (-0.5, 1.5)),
        box=((0.0, 1.0), (0.0, 1.0)),
        exact={"travelling": (["sin(x1 - x2)"], [["cos(x1 - x2)", "cos(x1 - x2)"]])},
        non_solutions={"wrong-speed": (["sin(x1 + 2*x2)"], [["cos(x1 + 2*x2)", "-2*cos(x1 + 2*x2)"]])},
        from_source=False,
        description="hyperbolic stress case q_11 - q_22 = 0 (not a worked example of the source)",
    ),
)


def catalog() -> list[ExampleSpec]:
    return list(_CATALOG)


_ALIASES = {"laplace": "laplace-example", "free": "free-particle"}


def get_example(name: str) -> ExampleSpec:
    name = _ALIASES.get(name, name)
    for spec in _CATALOG:
        if spec.name == name:
            return spec
    raise KeyError(f"no example named {name!r}; known: {', '.join(s.name for s in _CATALOG)}")


def laplace_action_growth(lengths, cells: int = 32) -> list[float]:
    """Action of ``q = x1 x2`` over ``[0, L]^2`` for each ``L`` (closed form ``L^4 / 3``)."""
    spec = get_example("laplace-example")
    HV = spec.volterra()
    out = []
    for L in lengths:
        psi = section_from_text(spec.shape, ["x1*x2"], [["x2", "x1"]],
                                ChartedDomain(((-1.0, L + 1.0),) * 2))
        out.append(action(HV, psi, ChartedDomain(((0.0, L),) * 2), "midpoint", cells))
    return out

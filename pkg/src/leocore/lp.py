"""The equilibrium feasibility LP under uniform income, and budget restriction.

Variables are an allocation ``y_o`` for each non-null comparison outcome and a
personalized price ``p_io`` for each voter and non-null outcome. Rows:

* budget: ``sum_o c(o) y_o == B``;
* revenue: ``sum_i p_io <= (alpha / 2) (c(o) / B) n`` for each outcome;
* supply: ``sum_{o' weakly preferred to o by i} y_o' >= alpha (1 - p_io)``
  for each voter and outcome.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from . import simplex
from .model import BOTTOM, Instance


class LpError(RuntimeError):
    pass


class LpInfeasibleError(LpError):
    """The solver claims infeasibility. The LP is always feasible, so this is an internal error."""


class LpIterationLimit(LpError):
    pass


class NoAffordableOutcomes(ValueError):
    """Only the null outcome survives the cost threshold."""


def restrict_instance(instance: Instance, alpha: float):
    """Comparison outcomes of cost at most ``B/(alpha+1)`` and working budget ``alpha B/(alpha+1)``.

    Returns
    -------
    (list of frozenset, float)
        The restricted comparison set (always containing the null outcome)
        and the restricted budget.

    Raises
    ------
    NoAffordableOutcomes
        If no non-null outcome passes the threshold.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return restrict_by_threshold(instance, instance.budget / (alpha + 1.0), alpha * instance.budget / (alpha + 1.0))


def restrict_by_threshold(instance: Instance, threshold: float, budget: float):
    keep = [o for o, c in zip(instance.comparison_set, instance.comparison_costs) if o != BOTTOM and c <= threshold + 1e-12]
    if not keep:
        raise NoAffordableOutcomes("no affordable comparison outcomes")
    return keep + [BOTTOM], float(budget)


@dataclass(eq=False)
class LpModel:
    """Sparse description of LP(alpha, C, B) over a (restricted) instance.

    ``outcomes`` holds positions (into ``instance.comparison_set``) of the
    non-null outcomes in variable order. Column ``k`` is ``y`` of outcome
    ``outcomes[k]``; column ``m + i*m + k`` is the price of voter ``i`` for it.
    """

    instance: Instance
    alpha: float
    budget: float
    outcomes: np.ndarray
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    upper: np.ndarray
    row_names: list = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.outcomes)

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def num_vars(self) -> int:
        return self.m + self.n * self.m

    @property
    def num_rows(self) -> int:
        return self.A_eq.shape[0] + self.A_ub.shape[0]

    def var_names(self) -> list:
        C = self.instance.comparison_set
        names = [f"y[{_label(C[j])}]" for j in self.outcomes]
        for v in self.instance.voters:
            names += [f"p[{v},{_label(C[j])}]" for j in self.outcomes]
        return names

    def split(self, z: np.ndarray):
        """Map a variable vector to arrays aligned with the comparison set."""
        inst = self.instance
        y = np.zeros(len(inst.comparison_set))
        y[self.outcomes] = z[: self.m]
        p = np.zeros((inst.n, len(inst.comparison_set)))
        p[:, self.outcomes] = z[self.m :].reshape(inst.n, self.m)
        return y, p

    def violation(self, z: np.ndarray) -> float:
        eq = np.abs(self.A_eq @ z - self.b_eq).max(initial=0.0)
        ub = np.maximum(self.A_ub @ z - self.b_ub, 0.0).max(initial=0.0)
        box = max(np.maximum(-z, 0.0).max(initial=0.0), np.maximum(z - self.upper, 0.0).max(initial=0.0))
        return float(max(eq, ub, box))


def _label(o: frozenset) -> str:
    return "+".join(sorted(o)) if o else "bottom"


def build_lp(instance: Instance, alpha: float, comparison=None, budget: float | None = None) -> LpModel:
    """Assemble LP(alpha, C, B).

    ``comparison`` and ``budget`` default to those of ``instance``; otherwise
    the instance is first restricted to them.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if comparison is not None or budget is not None:
        instance = instance.restrict(comparison=comparison, budget=budget)
    B = instance.budget
    n = instance.n
    outs = instance.nonbottom
    m = len(outs)
    costs = instance.comparison_costs[outs]
    names = ["budget"]

    A_eq = sparse.csr_matrix((costs, (np.zeros(m, dtype=int), np.arange(m))), shape=(1, m + n * m))
    b_eq = np.array([B])

    label = [_label(instance.comparison_set[j]) for j in outs]
    # revenue rows: one per outcome, summing that outcome's price column
    rev_r = np.repeat(np.arange(m), n)
    rev_c = m + (np.arange(n)[None, :] * m + np.arange(m)[:, None]).ravel()
    rev_v = np.ones(m * n)
    b_rev = alpha / 2.0 * costs / B * n
    names += [f"revenue[{lab}]" for lab in label]
    # supply rows: row m + i*m + k covers y of outcomes voter i weakly prefers to k, plus alpha * p_ik
    ranks = instance.rank_matrix[:, outs]
    ii, kk, jj = np.nonzero(ranks[:, None, :] <= ranks[:, :, None])
    sup_r = m + ii * m + kk
    own = np.arange(n * m)
    rows = np.concatenate([rev_r, sup_r, m + own])
    cols = np.concatenate([rev_c, jj, m + own])
    vals = np.concatenate([rev_v, -np.ones(len(jj)), np.full(n * m, -float(alpha))])
    b_ub = np.concatenate([b_rev, np.full(n * m, -float(alpha))])
    names += [f"supply[{v},{lab}]" for v in instance.voters for lab in label]
    r = m + n * m
    A_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(r, m + n * m))
    upper = np.concatenate([np.full(m, B), np.ones(n * m)])
    return LpModel(instance, float(alpha), float(B), outs, A_eq, b_eq, A_ub, b_ub, upper, names)


@dataclass
class LpSolution:
    """A feasible point. ``y`` and ``p`` are aligned with ``instance.comparison_set``."""

    instance: Instance
    alpha: float
    budget: float
    y: np.ndarray
    p: np.ndarray
    iterations: int
    max_violation: float
    backend: str = "highs"


def _objective(model: LpModel, objective: str) -> np.ndarray:
    c = np.zeros(model.num_vars)
    if objective == "max-prices":
        c[model.m :] = -1.0
    elif objective == "min-prices":
        c[model.m :] = 1.0
    elif objective != "feasibility":
        raise ValueError(f"unknown objective {objective!r}")
    return c


def solve_lp(model: LpModel, tol: float = 1e-8, backend: str = "highs", objective: str = "max-prices") -> LpSolution:
    """Find a feasible point of the model.

    Parameters
    ----------
    model : LpModel
    tol : float
        Maximum absolute constraint violation accepted.
    backend : {"highs", "simplex"}
        ``"simplex"`` uses the dense built-in solver.
    objective : {"max-prices", "min-prices", "feasibility"}
        Secondary objective among feasible points. High prices make each
        voter's reference outcome less demanding.
    """
    c = _objective(model, objective)
    if backend == "highs":
        res = optimize.linprog(
            c,
            A_ub=model.A_ub,
            b_ub=model.b_ub,
            A_eq=model.A_eq,
            b_eq=model.b_eq,
            bounds=np.column_stack([np.zeros(model.num_vars), model.upper]),
            method="highs",
            options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
        )
        if res.status == 1:
            raise LpIterationLimit("LP solver hit its iteration limit")
        if res.status == 2:
            raise LpInfeasibleError("solver reported infeasible")
        if res.status != 0:
            raise LpError(f"LP solver failed: {res.message}")
        z = np.asarray(res.x, dtype=float)
        iters = int(getattr(res, "nit", 0))
    elif backend == "simplex":
        try:
            out = simplex.solve(
                c, model.A_ub.toarray(), model.b_ub, model.A_eq.toarray(), model.b_eq, model.upper, tol=1e-10
            )
        except simplex.Infeasible as e:
            raise LpInfeasibleError(f"solver reported infeasible: {e}") from None
        except simplex.IterationLimit as e:
            raise LpIterationLimit(str(e)) from None
        z, iters = out.x, out.iterations
    else:
        raise ValueError(f"unknown backend {backend!r}")

    z = np.clip(z, 0.0, model.upper)
    viol = model.violation(z)
    if viol > tol:
        raise LpError(f"solution violates the constraints by {viol:.3e} > tol={tol:g}")
    y, p = model.split(z)
    return LpSolution(model.instance, model.alpha, model.budget, y, p, iters, viol, backend)


def solve_restricted(instance: Instance, alpha: float, tol: float = 1e-8, backend: str = "highs") -> LpSolution:
    comp, budget = restrict_instance(instance, alpha)
    return solve_lp(build_lp(instance, alpha, comp, budget), tol=tol, backend=backend)


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def dump_lp(model: LpModel, objective: str = "max-prices") -> str:
    """CPLEX LP text for the model, readable by common solvers."""
    names = model.var_names()
    safe = [f"x{k}" for k in range(len(names))]
    out = io.StringIO()
    out.write(f"\\ LP(alpha={_fmt(model.alpha)}, B={_fmt(model.budget)}), n={model.n}, m={model.m}\n")
    for s, nm in zip(safe, names):
        out.write(f"\\ {s} = {nm}\n")
    c = _objective(model, objective)
    out.write("Minimize\n obj:")
    terms = [f" {'+' if v >= 0 else '-'} {_fmt(abs(v))} {safe[k]}" for k, v in enumerate(c) if v != 0]
    out.write("".join(terms) if terms else " 0 x0")
    out.write("\nSubject To\n")

    def row(name, vec, sense, rhs):
        coo = sparse.coo_matrix(vec)
        parts = [f" {'+' if v >= 0 else '-'} {_fmt(abs(v))} {safe[j]}" for j, v in sorted(zip(coo.col, coo.data))]
        out.write(f" {name}:{''.join(parts)} {sense} {_fmt(rhs)}\n")

    row(model.row_names[0], model.A_eq[0], "=", model.b_eq[0])
    for r in range(model.A_ub.shape[0]):
        nm = model.row_names[1 + r].replace("[", "(").replace("]", ")").replace(",", "_")
        row(nm, model.A_ub[r], "<=", model.b_ub[r])
    out.write("Bounds\n")
    for s, u in zip(safe, model.upper):
        out.write(f" 0 <= {s} <= {_fmt(u)}\n")
    out.write("End\n")
    return out.getvalue()

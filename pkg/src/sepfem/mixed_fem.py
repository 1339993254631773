"""Mixed RT0 x P0 discretization of the Poisson model problem.

The dual form seeks the flux p in the lowest-order Raviart-Thomas space
and a piecewise-constant u with

    (p, q) + (u, div q) = 0          for all RT0 fluxes q,
    (div p, v) = -(f, v)             for all piecewise constants v,

so div p equals minus the elementwise mean of f exactly.  The error
estimator combines an area-weighted flux volume term with tangential
inter-element jumps; the distance between nested solutions is the
H(div) norm of the flux difference, computable exactly because nested
RT0 spaces are inclusion-ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .edges import Connectivity, prolong_rt0, tangential_jump_norms
from .marking import ElementOscillation, IndicatorField
from .mesh import Triangulation
from .quadrature import integrate_many, triangle_rule
from .sparse_direct import solve_lu

__all__ = [
    "SolverError",
    "MixedSolution",
    "assemble_mixed",
    "solve_mixed",
    "eta_mixed",
    "delta_mixed",
    "MixedPoisson",
]

_RESIDUAL_TOL = 1e-10


class SolverError(Exception):
    """Linear solver failed to reach the required residual."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


@dataclass
class MixedSolution:
    conn: Connectivity
    p: np.ndarray          # constant normal trace per edge, against the global normal
    u: np.ndarray          # piecewise-constant multiplier per element
    residual: float
    f_means: np.ndarray    # quadratured elementwise means of the data
    matrices: tuple = field(repr=False, default=None)

    @property
    def div_p(self) -> np.ndarray:
        return np.einsum("ni,ni->n", self.conn.rt_div(), self.conn.local_flux_dofs(self.p))


def assemble_mixed(T: Triangulation, f, rule=None):
    """Assemble the saddle-point blocks A, B and the element load vector.

    A is the RT0 mass matrix on global flux unknowns, B the divergence
    coupling with B[k, e] = +-|E_e| for the edges of element k, and the
    load is the quadrature of f per element (the right-hand side of the
    second equation is its negative).
    """
    rule = rule if rule is not None else triangle_rule(5)
    conn = Connectivity(T)
    n, ne = len(conn.tris), conn.n_edges

    mloc = conn.rt_local_mass()
    sgn = conn.elem_signs
    vals = mloc * sgn[:, :, np.newaxis] * sgn[:, np.newaxis, :]
    rows = np.repeat(conn.elem_edges[:, :, np.newaxis], 3, axis=2)
    cols = np.repeat(conn.elem_edges[:, np.newaxis, :], 3, axis=1)
    A = sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(ne, ne)
    ).tocsr()

    brow = np.repeat(np.arange(n), 3)
    bval = (sgn * conn.elem_edge_lengths).ravel()
    B = sp.coo_matrix(
        (bval, (brow, conn.elem_edges.ravel())), shape=(n, ne)
    ).tocsr()

    load = integrate_many(f, conn.pts, rule)
    return A, B, load, conn


def _solve_saddle(A, B, rhs, method):
    n_e = A.shape[0]
    K = sp.bmat([[A, B.T], [B, None]], format="csc")
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(K.shape[0]), 0.0
    if method == "minres":
        # block-diagonal preconditioner: lumped flux mass and the Schur
        # surrogate diag(B diag(A)^-1 B^T)
        da = A.diagonal()
        schur = np.asarray((B.multiply(B) @ (1.0 / da))).ravel()
        d = np.concatenate((da, schur))
        M = spla.LinearOperator(K.shape, matvec=lambda x: x / d)
        x, info = spla.minres(K, rhs, M=M, rtol=1e-12, maxiter=200 * K.shape[0])
        if info != 0:
            raise SolverError(f"minres did not converge (info={info})")
    elif method == "direct":
        x = solve_lu(K, rhs)
        if x is None:
            x = spla.splu(K).solve(rhs)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = float(np.linalg.norm(K @ x - rhs)) / bnorm
    if res > _RESIDUAL_TOL:
        raise SolverError(f"saddle solve residual {res:.3e} above {_RESIDUAL_TOL:g}")
    return x, res


def solve_mixed(T: Triangulation, f, rule=None, method="direct") -> MixedSolution:
    """Solve the mixed system; the relative residual must meet 1e-10."""
    rule = rule if rule is not None else triangle_rule(5)
    A, B, load, conn = assemble_mixed(T, f, rule)
    rhs = np.concatenate((np.zeros(conn.n_edges), -load))
    x, res = _solve_saddle(A, B, rhs, method)
    p = x[: conn.n_edges]
    u = x[conn.n_edges :]
    return MixedSolution(conn, p, u, res, load / conn.areas, matrices=(A, B))


def eta_mixed(T: Triangulation, sol: MixedSolution) -> IndicatorField:
    """Squared error indicators of the mixed solution.

    eta^2(K) = |K| ||p||_{L2(K)}^2
             + |K|^{1/2} sum_{E in E(K)} ||[p] . t_E||_{L2(E)}^2

    with one-sided traces on boundary edges.  Every term is a polynomial
    integral and is evaluated exactly.
    """
    conn = sol.conn
    d = conn.local_flux_dofs(sol.p)
    vol = conn.areas * np.einsum("ni,nij,nj->n", d, conn.rt_local_mass(), d)
    jumps = tangential_jump_norms(conn, d)
    per_elem = jumps[conn.elem_edges].sum(axis=1)
    values = vol + np.sqrt(conn.areas) * per_elem
    return IndicatorField(T.leaf_ids, values)


def delta_mixed(Tc: Triangulation, Tf: Triangulation, sol_c: MixedSolution, sol_f: MixedSolution) -> float:
    """Squared H(div) distance ||p_f - p_c||^2 between nested solutions.

    The coarse flux is prolonged exactly into the fine RT0 space, so the
    norm is evaluated in one space; non-nested meshes are rejected.
    """
    if not Tf.refines(Tc):
        raise ValueError("delta requires the second mesh to refine the first")
    cf = prolong_rt0(sol_c.conn, sol_c.p, sol_f.conn)
    d = sol_f.p - cf
    conn = sol_f.conn
    dl = conn.local_flux_dofs(d)
    l2 = float(np.einsum("ni,nij,nj->", dl, conn.rt_local_mass(), dl))
    divd = np.einsum("ni,ni->n", conn.rt_div(), dl)
    hdiv = float(np.sum(conn.areas * divd * divd))
    return l2 + hdiv


class MixedPoisson:
    """Problem instance bundling solver, estimator, data terms and distance."""

    kind = "mixed"

    def __init__(self, data_field, quad_degree: int = 5, method: str = "direct"):
        self.field = data_field
        self.rule = triangle_rule(quad_degree)
        self.method = method
        self.oscillation = ElementOscillation(data_field, self.rule)

    def solve(self, T: Triangulation) -> MixedSolution:
        return solve_mixed(T, self.field, self.rule, self.method)

    def eta(self, T: Triangulation, sol: MixedSolution) -> IndicatorField:
        return eta_mixed(T, sol)

    def mu(self, T: Triangulation) -> IndicatorField:
        return self.oscillation.mesh_values2(T)

    def delta(self, Tc, Tf, sol_c, sol_f) -> float:
        return delta_mixed(Tc, Tf, sol_c, sol_f)

    def extras(self, T: Triangulation, sol: MixedSolution) -> dict:
        # the discrete constraint: elementwise div p + mean(f) = 0
        worst = float(np.max(np.abs(sol.div_p + sol.f_means)))
        scale = float(np.max(np.abs(sol.f_means))) or 1.0
        return {"constraint_residual": worst / scale, "solver_residual": sol.residual}

"""Projected-gradient iteration for the optimality system.

One pass of the loop, in coarse coordinates:

    Y = S^-1 (F + D U)
    P = S^-1 (Q_c Y - Yd)
    U <- P_K(U - rho (U + M^-1 D^T P))

S is factorized once per solve and reused by every iteration.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from config.settings import settings
from fem.solve import DirichletSolver, factorize
from homog.basis import identity_basis
from ocp.coarse import CoarseSystem, assemble_coarse
from ocp.problem import FineOperators, OcpProblem, assemble_fine_operators
from ocp.projection import project_K

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30
# increments this many times the first one mean the step size is too large
DIVERGENCE_GROWTH = 1e8


class OcpSolution(BaseModel):
    """Coarse coefficients, their fine-space prolongations and the iteration history."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    Y: np.ndarray
    P: np.ndarray
    U: np.ndarray
    y_fine: np.ndarray
    p_fine: np.ndarray
    u_fine: np.ndarray
    iterations: int
    trace: List[Tuple[int, float, float]]
    converged: bool
    rho: float
    controls: Optional[List[np.ndarray]] = None

    @property
    def increments(self) -> np.ndarray:
        return np.array([row[1] for row in self.trace])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([row[2] for row in self.trace])


def _qnorm(Q, v: np.ndarray) -> float:
    return float(np.sqrt(max(v @ (Q @ v), 0.0)))


def objective(system: CoarseSystem, Y: np.ndarray, U: np.ndarray) -> float:
    """1/2 ||y - y_d||^2 + 1/2 ||u||^2 with y in span(Phi)."""
    tracking = Y @ (system.Q_c @ Y) - 2.0 * (Y @ system.Yd) + system.yd_norm2
    return 0.5 * max(tracking, 0.0) + 0.5 * float(U @ (system.mass_diagonal * U))


def gradient_step(system: CoarseSystem, U: np.ndarray, P: np.ndarray, rho: float) -> np.ndarray:
    return project_K(U - rho * (U + (system.D.T @ P) / system.mass_diagonal), system.mass_diagonal, system.K)


def fixed_point_defect(system: CoarseSystem, solution: OcpSolution, rho: Optional[float] = None) -> float:
    """||U - P_K(U - rho (U + M^-1 D^T P))||_M at the returned iterate."""
    rho = solution.rho if rho is None else rho
    r = solution.U - gradient_step(system, solution.U, solution.P, rho)
    return float(np.sqrt(r @ (system.mass_diagonal * r)))


class ProjectedGradientSolver:
    """Fixed-step projected gradient on a CoarseSystem, with optional step halving."""

    def __init__(
        self,
        rho: Optional[float] = None,
        eps: Optional[float] = None,
        max_iter: Optional[int] = None,
        safeguard: Optional[bool] = None,
        record_controls: bool = False,
    ):
        self.rho = settings.ocp_rho if rho is None else rho
        self.eps = settings.ocp_eps if eps is None else eps
        self.max_iter = settings.ocp_max_iter if max_iter is None else max_iter
        self.safeguard = settings.ocp_step_safeguard if safeguard is None else safeguard
        self.record_controls = record_controls

        if not self.rho > 0:
            raise ValueError(f"Step size rho must be positive, got {self.rho}")
        if not self.eps > 0:
            raise ValueError(f"Tolerance eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    def solve(self, system: CoarseSystem) -> OcpSolution:
        lu = factorize(system.S, "coarse stiffness S")

        def state(U):
            return lu.solve(system.F + system.D @ U)

        def adjoint(Y):
            return lu.solve(system.Q_c @ Y - system.Yd)

        rho = self.rho
        U = np.zeros(system.m)
        Y = state(U)
        P = adjoint(Y)
        J = objective(system, Y, U)
        controls = [U.copy()] if self.record_controls else None
        trace: List[Tuple[int, float, float]] = []
        reference = None
        first_increment = None
        converged = False
        diverged = False
        n = 0

        while n < self.max_iter:
            U_next = gradient_step(system, U, P, rho)
            Y_next = state(U_next)
            J_next = objective(system, Y_next, U_next)

            halvings = 0
            while self.safeguard and J_next > J + 1e-12 * max(1.0, abs(J)) and halvings < MAX_HALVINGS:
                rho *= 0.5
                halvings += 1
                U_next = gradient_step(system, U, P, rho)
                Y_next = state(U_next)
                J_next = objective(system, Y_next, U_next)
            if halvings:
                logger.debug(f"Step halved {halvings} time(s) at iteration {n + 1}, rho={rho:g}")

            increment = _qnorm(system.Q_c, Y_next - Y)
            if first_increment is None:
                first_increment = increment
                reference = _qnorm(system.Q_c, Y_next)

            P_next = adjoint(Y_next)
            finite = all(np.all(np.isfinite(v)) for v in (U_next, Y_next, P_next)) and np.isfinite(J_next)
            if not (finite and np.isfinite(increment)) or increment > DIVERGENCE_GROWTH * first_increment > 0:
                diverged = True
                break

            U, Y, J, P = U_next, Y_next, J_next, P_next
            n += 1
            trace.append((n, increment, J))
            if controls is not None:
                controls.append(U.copy())
            logger.debug(f"Iteration {n}: state increment {increment:.3e}, objective {J:.10g}")

            threshold = self.eps * reference if reference > 0 else self.eps
            if increment < threshold:
                converged = True
                break

        if converged:
            logger.info(f"Projected gradient converged in {n} iterations (N={system.N}, m={system.m})")
        elif diverged:
            logger.warning(
                f"Projected gradient diverged after {n} iterations with rho={rho:g}; "
                f"returning the last finite iterate (try a smaller rho or enable the step safeguard)"
            )
        else:
            logger.warning(
                f"Projected gradient did not converge within {self.max_iter} iterations; "
                f"last increment {trace[-1][1]:.3e}"
            )

        basis = system.basis
        return OcpSolution(
            Y=Y,
            P=P,
            U=U,
            y_fine=basis.prolong(Y),
            p_fine=basis.prolong(P),
            u_fine=np.asarray(system.control_prolongation @ U).ravel(),
            iterations=n,
            trace=trace,
            converged=converged,
            rho=rho,
            controls=controls,
        )


def solve_ocp(
    system: CoarseSystem,
    rho: Optional[float] = None,
    eps: Optional[float] = None,
    max_iter: Optional[int] = None,
    record_controls: bool = False,
    safeguard: Optional[bool] = None,
) -> OcpSolution:
    solver = ProjectedGradientSolver(rho, eps, max_iter, safeguard=safeguard, record_controls=record_controls)
    return solver.solve(system)


def solve_ocp_fine(
    problem: OcpProblem,
    rho: Optional[float] = None,
    eps: Optional[float] = None,
    max_iter: Optional[int] = None,
    fine: Optional[FineOperators] = None,
    record_controls: bool = False,
) -> OcpSolution:
    """Reference solve on the full fine space with fine-cell controls."""
    fine = fine or assemble_fine_operators(problem)
    system = assemble_coarse(problem, identity_basis(problem.mesh, fine.A), fine, control_level="fine")
    return solve_ocp(system, rho, eps, max_iter, record_controls=record_controls)


def auxiliary_states(fine: FineOperators, u_fine: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Fine state and adjoint y(u), p(u) driven by a given fine-cell control."""
    u_fine = np.asarray(u_fine, dtype=float)
    if u_fine.shape != (fine.M_fine.n_rows,):
        raise ValueError(f"Control has {u_fine.size} cells, expected {fine.M_fine.n_rows}")
    solver = DirichletSolver(fine.A)
    y = solver.solve(fine.f_vec + fine.D_fine.full @ u_fine)
    p = solver.solve(fine.Q.full @ y - fine.Qyd)
    return y, p

"""LangGraph orchestration of the convergence sweep and the decay / single-solve runs."""
import logging
import math
import time
from typing import Any, Dict, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph
from pydantic import BaseModel, model_validator

from config.experiment import ExperimentConfig
from fem.assembly import assemble_stiffness
from fem.norms import error_norms, relative_control_error
from homog.basis import CoarseBasis, compute_global_basis, compute_local_basis
from homog.decay import basis_slice, central_measurement, decay_profile, fit_decay_rate
from homog.measurements import build_measurements
from memory.operator_cache import OperatorCache, operator_cache
from mesh.hierarchy import MeshHierarchy, build_hierarchy
from ocp.coarse import assemble_coarse
from ocp.problem import OcpProblem, assemble_fine_operators
from ocp.solver import OcpSolution, solve_ocp, solve_ocp_fine
from tools.export_tool import ExportTool

logger = logging.getLogger(__name__)

NAN = float("nan")


class ErrorRecord(BaseModel):
    """One row of the convergence table; errors are relative to the fine reference."""

    nc: int
    kind: str
    layers: int
    H: float
    coarse_dof: int
    err_y_h1: float = NAN
    err_p_h1: float = NAN
    err_u: float = NAN
    combined: float = NAN
    err_y_l2: float = NAN
    err_y_linf: float = NAN
    err_p_l2: float = NAN
    err_p_linf: float = NAN
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    status: str = "ok"
    message: str = ""

    @model_validator(mode="after")
    def _check_errors(self) -> "ErrorRecord":
        if self.status == "ok":
            parts = (self.err_y_h1, self.err_p_h1, self.err_u)
            if any(not v >= 0 for v in parts):
                raise ValueError(f"relative errors must be nonnegative, got {parts}")
            self.combined = float(sum(parts))
        return self

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields)

    def row(self) -> List[Any]:
        return [getattr(self, name) for name in self.columns()]


class SweepState(TypedDict):
    """State carried through the sweep graph."""
    jobs: List[Dict[str, Any]]
    cursor: int
    current: Optional[Dict[str, Any]]
    context: Optional[Dict[str, Any]]
    basis: Optional[CoarseBasis]
    solution: Optional[OcpSolution]
    started: float
    error: Optional[str]
    records: List[ErrorRecord]
    failures: int


class ExperimentOrchestrator:
    """Drives the (Nc, kind, l) sweep with a LangGraph state machine."""

    def __init__(
        self,
        config: ExperimentConfig,
        cache: Optional[OperatorCache] = None,
        exporter: Optional[ExportTool] = None,
    ):
        self.config = config
        self.cache = cache or operator_cache
        self.exporter = exporter or ExportTool(config.output_dir)
        self.graph = self._build_graph()

    def _build_graph(self) -> StateGraph:
        """Build the sweep workflow."""
        workflow = StateGraph(SweepState)

        # Add nodes
        workflow.add_node("select", self._select_node)
        workflow.add_node("prepare", self._prepare_node)
        workflow.add_node("basis", self._basis_node)
        workflow.add_node("coarse_solve", self._coarse_solve_node)
        workflow.add_node("record", self._record_node)

        # Define edges
        workflow.set_entry_point("select")
        workflow.add_conditional_edges("select", self._has_job, {"prepare": "prepare", "end": END})
        workflow.add_conditional_edges("prepare", self._route("basis"), {"next": "basis", "record": "record"})
        workflow.add_conditional_edges("basis", self._route("coarse_solve"), {"next": "coarse_solve", "record": "record"})
        workflow.add_edge("coarse_solve", "record")
        workflow.add_edge("record", "select")

        return workflow.compile()

    def jobs(self) -> List[Dict[str, Any]]:
        """Sweep rows ordered by (Nc, kind, l)."""
        rows = []
        for nc in sorted(self.config.nc):
            for kind in sorted(self.config.basis):
                for layers in sorted(self.config.layers_for(nc)):
                    rows.append({"nc": nc, "kind": kind, "layers": layers})
        return rows

    # Shared building blocks

    def context(self, nc: int) -> Dict[str, Any]:
        """Mesh, problem, fine operators and fine reference solution for one Nc (cached)."""
        config = self.config
        levels = config.levels_for(nc)
        key = OperatorCache.make_key(
            nc=nc,
            levels=levels,
            domain=config.domain,
            coeff=config.coeff,
            yd=config.yd,
            constraint=config.constraint,
            rho=config.rho,
            eps=config.eps,
            max_iter=config.max_iter,
        )

        def builder():
            return self._build_context(nc, levels)

        return self.cache.get_or_build(key, builder, namespace=self.context_namespace(nc))

    @staticmethod
    def context_namespace(nc: int) -> str:
        return f"context-nc{nc}"

    def release(self, nc: int) -> None:
        """Drop the cached operators and reference of one Nc."""
        self.cache.clear(self.context_namespace(nc))
        logger.debug(f"Released cached fine operators for Nc={nc}")

    def coefficient(self):
        key = OperatorCache.make_key(coeff=self.config.coeff, domain=self.config.domain)
        return self.cache.get_or_build(key, self.config.coefficient, namespace="coefficients")

    def _build_context(self, nc: int, levels: int) -> Dict[str, Any]:
        config = self.config
        mesh = build_hierarchy(config.rectangle(), nc, levels)
        problem = OcpProblem(mesh, self.coefficient(), f=1.0, y_d=config.desired_state(), K=config.constraint_spec())
        fine = assemble_fine_operators(problem)
        reference = solve_ocp_fine(problem, config.rho, config.eps, config.max_iter, fine=fine)
        if not reference.converged:
            logger.warning(f"Fine reference for Nc={nc} did not converge; errors are measured against its last iterate")
        return {"mesh": mesh, "problem": problem, "fine": fine, "reference": reference}

    def localized_basis(self, context: Dict[str, Any], kind: str, layers: int) -> CoarseBasis:
        mesh = context["mesh"]
        measurements = build_measurements(mesh, kind)
        return compute_local_basis(context["fine"].A, measurements, mesh, kind, layers)

    def coarse_solution(self, context: Dict[str, Any], basis: CoarseBasis) -> OcpSolution:
        system = assemble_coarse(context["problem"], basis, context["fine"])
        return solve_ocp(system, self.config.rho, self.config.eps, self.config.max_iter)

    def error_record(
        self, job: Dict[str, Any], context: Dict[str, Any], basis: CoarseBasis, solution: OcpSolution, wall_time: float
    ) -> ErrorRecord:
        mesh, fine, reference = context["mesh"], context["fine"], context["reference"]
        y_l2, y_h1, y_linf = error_norms(reference.y_fine, solution.y_fine, mesh, fine.laplace, fine.Q)
        p_l2, p_h1, p_linf = error_norms(reference.p_fine, solution.p_fine, mesh, fine.laplace, fine.Q)
        u_err = relative_control_error(reference.u_fine, solution.u_fine, fine.M_fine)
        return ErrorRecord(
            nc=job["nc"],
            kind=job["kind"],
            layers=job["layers"],
            H=mesh.H,
            coarse_dof=basis.N,
            err_y_h1=y_h1,
            err_p_h1=p_h1,
            err_u=u_err,
            err_y_l2=y_l2,
            err_y_linf=y_linf,
            err_p_l2=p_l2,
            err_p_linf=p_linf,
            iterations=solution.iterations,
            converged=solution.converged,
            wall_time=wall_time,
        )

    # Graph nodes

    def _select_node(self, state: SweepState) -> SweepState:
        cursor = state["cursor"]
        state["current"] = state["jobs"][cursor] if cursor < len(state["jobs"]) else None
        state["cursor"] = cursor + 1
        state["context"] = None
        state["basis"] = None
        state["solution"] = None
        state["error"] = None
        state["started"] = time.perf_counter()
        if state["current"] is not None:
            logger.info(f"Sweep row {cursor + 1}/{len(state['jobs'])}: {state['current']}")
        return state

    def _prepare_node(self, state: SweepState) -> SweepState:
        try:
            state["context"] = self.context(state["current"]["nc"])
        except (ValueError, RuntimeError) as exc:
            state["error"] = f"prepare: {exc}"
        return state

    def _basis_node(self, state: SweepState) -> SweepState:
        job = state["current"]
        try:
            state["basis"] = self.localized_basis(state["context"], job["kind"], job["layers"])
        except (ValueError, RuntimeError) as exc:
            state["error"] = f"basis: {exc}"
        return state

    def _coarse_solve_node(self, state: SweepState) -> SweepState:
        try:
            state["solution"] = self.coarse_solution(state["context"], state["basis"])
        except (ValueError, RuntimeError) as exc:
            state["error"] = f"coarse_solve: {exc}"
        return state

    def _record_node(self, state: SweepState) -> SweepState:
        job = state["current"]
        wall_time = time.perf_counter() - state["started"]
        record = None
        if state["error"] is None:
            try:
                record = self.error_record(job, state["context"], state["basis"], state["solution"], wall_time)
            except (ValueError, RuntimeError) as exc:
                state["error"] = f"record: {exc}"

        if record is None:
            logger.warning(f"Sweep row {job} failed: {state['error']}")
            context = state["context"]
            H = context["mesh"].H if context else NAN
            record = ErrorRecord(
                nc=job["nc"],
                kind=job["kind"],
                layers=job["layers"],
                H=H,
                coarse_dof=state["basis"].N if state["basis"] is not None else 0,
                wall_time=wall_time,
                status="failed",
                message=state["error"],
            )
            state["failures"] = state["failures"] + 1

        state["records"] = state["records"] + [record]
        jobs, cursor = state["jobs"], state["cursor"]
        if cursor >= len(jobs) or jobs[cursor]["nc"] != job["nc"]:
            self.release(job["nc"])
        return state

    def _has_job(self, state: SweepState) -> str:
        return "prepare" if state["current"] is not None else "end"

    def _route(self, target: str):
        def decide(state: SweepState) -> str:
            return "record" if state["error"] is not None else "next"

        decide.__name__ = f"route_to_{target}"
        return decide

    # Runs

    def run(self) -> List[ErrorRecord]:
        """Run the sweep and write convergence.csv."""
        jobs = self.jobs()
        initial_state: SweepState = {
            "jobs": jobs,
            "cursor": 0,
            "current": None,
            "context": None,
            "basis": None,
            "solution": None,
            "started": 0.0,
            "error": None,
            "records": [],
            "failures": 0,
        }

        # five node visits per row plus the final select
        final_state = self.graph.invoke(initial_state, {"recursion_limit": 5 * len(jobs) + 10})
        records = final_state["records"]
        self.exporter.write_csv("convergence.csv", ErrorRecord.columns(), [r.row() for r in records])
        logger.info(f"Sweep finished: {len(records)} rows, {final_state['failures']} failed")
        return records

    def run_decay(self) -> Dict[str, Dict[str, float]]:
        """Decay profile and slices of the central basis function per (Nc, kind)."""
        config = self.config
        coeff = self.coefficient()
        summary: Dict[str, Dict[str, float]] = {}
        for nc in sorted(config.nc):
            mesh = build_hierarchy(config.rectangle(), nc, config.levels_for(nc))
            A = assemble_stiffness(mesh, coeff)
            for kind in sorted(config.basis):
                tag = f"{kind}_nc{nc}"
                measurements = build_measurements(mesh, kind)
                center = central_measurement(measurements, mesh)
                global_basis = compute_global_basis(A, measurements, indices=[center])

                profile = decay_profile(global_basis, 0, mesh)
                self.exporter.write_basis(f"basis_{tag}_global.csv", global_basis)
                self.exporter.write_array(f"decay_{tag}.csv", ["r", "tail_fraction"], profile)
                self.exporter.write_array(f"slice_{tag}_global.csv", ["x", "abs_phi", "log10_abs_phi"], basis_slice(global_basis, 0, mesh))

                for layers in sorted(config.layers_for(nc)):
                    local = compute_local_basis(A, measurements, mesh, kind, layers, indices=[center])
                    self.exporter.write_array(
                        f"slice_{tag}_l{layers}.csv", ["x", "abs_phi", "log10_abs_phi"], basis_slice(local, 0, mesh)
                    )

                summary[tag] = self._fit_summary(profile, mesh)
        return summary

    def _fit_summary(self, profile: np.ndarray, mesh: MeshHierarchy) -> Dict[str, float]:
        rmax = min(8 * mesh.H, profile[-1, 0])
        try:
            alpha, beta, r2 = fit_decay_rate(profile, 2 * mesh.H, rmax)
        except ValueError as exc:
            logger.warning(f"Decay rate fit skipped: {exc}")
            return {"beta": NAN, "r2": NAN}
        logger.info(f"Decay fit: beta={beta:.4g} (beta*H={beta * mesh.H:.4g}), R^2={r2:.4f}")
        return {"beta": beta, "r2": r2}

    def run_solve(self) -> ErrorRecord:
        """Single (Nc, kind, l) solve; dumps y, p, u and the iteration trace."""
        config = self.config
        nc, kind = config.nc[0], config.basis[0]
        job = {"nc": nc, "kind": kind, "layers": config.layers_for(nc)[0]}
        started = time.perf_counter()

        context = self.context(nc)
        basis = self.localized_basis(context, kind, job["layers"])
        solution = self.coarse_solution(context, basis)
        record = self.error_record(job, context, basis, solution, time.perf_counter() - started)

        tag = f"{kind}_nc{nc}_l{job['layers']}"
        self.exporter.write_vector(f"y_{tag}.csv", solution.y_fine, "node")
        self.exporter.write_vector(f"p_{tag}.csv", solution.p_fine, "node")
        self.exporter.write_vector(f"u_{tag}.csv", solution.u_fine, "cell")
        self.exporter.write_trace(f"trace_{tag}.csv", solution.trace)
        self.exporter.write_mesh(f"mesh_nc{nc}.txt", context["mesh"])
        self.exporter.write_csv(f"errors_{tag}.csv", ErrorRecord.columns(), [record.row()])
        if not math.isfinite(record.combined):
            logger.warning(f"Combined error is not finite for {tag}")
        return record

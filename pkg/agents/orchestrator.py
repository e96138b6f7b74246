"""
Orchestrator Agent - Central controller that routes commands to the task agents
"""
import time
from typing import Any, Callable, Dict
from loguru import logger
from pathlib import Path
import sys
sys.path.append(str(Path(__file__).parent.parent))

from config import RunConfig
from core.errors import ArgumentError, failure_result
from .next_view_agent import NextViewAgent
from .query_agent import QueryAgent
from .reconstruction_agent import ReconstructionAgent
from .repair_agent import RepairAgent
from .scan_agent import ScanAgent


class OrchestratorAgent:
    """Central agent that dispatches CLI commands to the specialized agents"""

    def __init__(self):
        self.reconstruction_agent = ReconstructionAgent()
        self.query_agent = QueryAgent()
        self.repair_agent = RepairAgent()
        self.scan_agent = ScanAgent()
        self.next_view_agent = NextViewAgent()

        self.handlers: Dict[str, Callable[[Any], Dict[str, Any]]] = {
            'reconstruct': self._reconstruct,
            'query': self._query,
            'collide': self._collide,
            'repair': self._repair,
            'scan': self._scan,
            'next-view': self._next_view,
            'levelset': self._levelset,
        }
        logger.info("Orchestrator Agent initialized")

    def process_request(self, command: str, args) -> Dict[str, Any]:
        """
        Run one command

        Args:
            command: Sub-command name
            args: Parsed argument namespace

        Returns:
            Result dictionary with 'success', 'exit_code' and an optional 'summary'
        """
        started = time.perf_counter()
        try:
            handler = self.handlers.get(command)
            if handler is None:
                raise ArgumentError(f"unknown command '{command}'")
            result = handler(args)
        except Exception as e:
            logger.error(f"Error in orchestrator: {e}")
            result = failure_result(e)
        logger.info(f"Command '{command}' finished in {time.perf_counter() - started:.2f}s "
                    f"(exit code {result.get('exit_code', 0)})")
        return result

    def _reconstruct(self, args) -> Dict[str, Any]:
        return self.reconstruction_agent.reconstruct_file(args.input, RunConfig.from_namespace(args), box=args.box)

    def _query(self, args) -> Dict[str, Any]:
        return self.query_agent.query_points(args.prefix, args.points, args.what, args.output)

    def _collide(self, args) -> Dict[str, Any]:
        return self.query_agent.collide(
            args.prefix,
            points_path=args.points,
            box=args.box,
            region_samples=args.region_samples,
            mc_samples=args.mc_samples,
            seed=args.seed,
            trajectory_path=args.trajectory,
            output=args.output,
        )

    def _repair(self, args) -> Dict[str, Any]:
        return self.repair_agent.repair(
            args.prefix,
            args.cloud,
            args.output,
            n_points=args.n_points,
            steps=args.steps,
            proposal_sigma=args.proposal_sigma,
            seed=args.seed,
        )

    def _scan(self, args) -> Dict[str, Any]:
        if args.until_uncertainty is not None:
            return self.scan_agent.scan_until(
                args.mesh,
                args.cameras,
                args.output,
                args.until_uncertainty,
                run=RunConfig.from_namespace(args),
                n_rays=args.rays,
                repeats=args.repeats,
                choose_next=not args.in_order,
                max_scans=args.max_scans,
            )
        return self.scan_agent.scan(args.mesh, args.cameras, args.output, n_rays=args.rays, seed=args.seed)

    def _next_view(self, args) -> Dict[str, Any]:
        return self.next_view_agent.score_cameras(
            args.prefix,
            args.cloud,
            args.cameras,
            repeats=args.repeats,
            seed=args.seed,
            output=args.output,
            box=args.box,
        )

    def _levelset(self, args) -> Dict[str, Any]:
        return self.query_agent.levelset(args.prefix, args.what, args.iso, args.output)

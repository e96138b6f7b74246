"""
Stochastic Poisson Surface Reconstruction - Agent Package

This package contains the task agents behind the command-line interface.

Agents:
- OrchestratorAgent: Central controller that routes commands to the agents below
- ReconstructionAgent: Builds and stores a StochasticField from a point cloud
- QueryAgent: Pointwise queries, collision probabilities and level sets
- RepairAgent: Metropolis-Hastings point repair
- ScanAgent: Synthetic scans of a mesh
- NextViewAgent: Camera scoring by expected uncertainty reduction
"""

__version__ = "1.0.0"

from .orchestrator import OrchestratorAgent
from .reconstruction_agent import ReconstructionAgent
from .query_agent import QueryAgent
from .repair_agent import RepairAgent
from .scan_agent import ScanAgent
from .next_view_agent import NextViewAgent

__all__ = [
    'OrchestratorAgent',
    'ReconstructionAgent',
    'QueryAgent',
    'RepairAgent',
    'ScanAgent',
    'NextViewAgent',
]

"""
Reconstruction Agent - Builds a StochasticField from a point cloud file and stores it
"""
from pathlib import Path
from typing import Any, Dict, Optional, Sequence
from loguru import logger
import sys
sys.path.append(str(Path(__file__).parent.parent))

from config import RunConfig
from core.errors import failure_result
from core.priors import MeanPrior
from core.queries import total_uncertainty
from core.reconstruction import reconstruct
from utils.field_store import FieldStore
from utils.point_cloud_io import PointCloudReader


def prior_metadata(prior: MeanPrior) -> Dict[str, Any]:
    return {
        'kind': prior.kind,
        'alpha': prior.alpha,
        'center': None if prior.center is None else [float(c) for c in prior.center],
    }


class ReconstructionAgent:
    """Agent for running the full stochastic reconstruction"""

    def __init__(self):
        logger.info("Reconstruction Agent initialized")

    def reconstruct_file(
        self,
        input_path: str,
        run: RunConfig,
        box: Optional[Sequence[Sequence[float]]] = None,
    ) -> Dict[str, Any]:
        """
        Reconstruct a cloud file and write the field files under the run's prefix

        Args:
            input_path: `.xyzn` or `.ply` cloud
            run: Run parameters
            box: Optional (lower, upper) region for the reported total uncertainty

        Returns:
            Result dictionary with the field, written files and key=value summary
        """
        try:
            cloud = PointCloudReader(noise_sigma=run.sigma_n).read_cloud(input_path)
            prior = MeanPrior.from_spec(run.prior, cloud.positions, run.alpha, run.prior_center)
            field = reconstruct(cloud, run, prior=prior)
            uncertainty = total_uncertainty(field, box)

            files = FieldStore(binary=run.binary).save(
                field,
                run.output_prefix,
                extra={
                    'prior': prior_metadata(prior),
                    'solver': run.solver,
                    'samples': len(cloud),
                    'source': str(Path(input_path).name),
                },
            )
            logger.info(f"Reconstruction complete: U={uncertainty:.6g}")
            return {
                'success': True,
                'field': field,
                'cloud': cloud,
                'files': files,
                'summary': {
                    'total_uncertainty': uncertainty,
                    'k': field.basis.k,
                    'solver_residual': field.residual,
                },
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error in reconstruction: {e}")
            return failure_result(e)

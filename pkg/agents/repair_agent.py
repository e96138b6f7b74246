"""
Repair Agent - Fills under-sampled regions with points drawn from the surface density
"""
from pathlib import Path
from typing import Any, Dict, Optional
import numpy as np
from loguru import logger
import sys
sys.path.append(str(Path(__file__).parent.parent))

import config
from core.covariance import OrientedPointCloud
from core.errors import failure_result
from core.sampling import mh_repair
from utils.field_store import FieldStore
from utils.point_cloud_io import PointCloudReader
from utils.result_writer import ResultWriter


class RepairAgent:
    """Agent for Metropolis-Hastings point repair"""

    def __init__(self):
        self.store = FieldStore()
        self.reader = PointCloudReader()
        self.writer = ResultWriter()
        logger.info("Repair Agent initialized")

    def repair(
        self,
        prefix: str,
        cloud_path: str,
        output: str,
        n_points: int,
        steps: int = config.MH_STEPS,
        proposal_sigma: Optional[float] = None,
        seed: int = config.DEFAULT_SEED,
    ) -> Dict[str, Any]:
        """
        Sample new surface points and write them as an oriented cloud

        Normals of the new points follow the gradient of the mean field (outward).

        Args:
            prefix: Field prefix
            cloud_path: Cloud the field was built from; chains start at its points
            output: Destination `.xyzn` or `.ply`
            n_points: Points to draw
            steps: MH steps per chain
            proposal_sigma: Random-walk scale, grid spacing by default
            seed: RNG seed

        Returns:
            Result dictionary with the repaired points
        """
        try:
            field = self.store.load(prefix)
            cloud = self.reader.read_cloud(cloud_path)
            points = mh_repair(field, cloud, n_points, steps, proposal_sigma, seed)

            normals = field.mean_gradient(points)
            if field.flip_sign:
                normals = -normals
            degenerate = np.linalg.norm(normals, axis=1) == 0.0
            # flat mean field: point away from the cloud centroid
            normals[degenerate] = points[degenerate] - cloud.centroid()
            repaired = OrientedPointCloud(points, normals, cloud.noise_sigma)

            path = self.writer.write_cloud(repaired, output)
            return {
                'success': True,
                'cloud': repaired,
                'summary': {'repaired_points': len(repaired), 'output': str(path)},
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error in point repair: {e}")
            return failure_result(e)

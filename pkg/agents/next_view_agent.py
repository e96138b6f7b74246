"""
Next-View Agent - Ranks candidate cameras by the expected drop in total uncertainty
"""
from pathlib import Path
from typing import Any, Dict, Optional, Sequence
from loguru import logger
import sys
sys.path.append(str(Path(__file__).parent.parent))

import config
from config import RunConfig
from core.errors import failure_result
from core.priors import MeanPrior
from core.scanning import camera_score
from utils.field_store import FieldStore
from utils.point_cloud_io import PointCloudReader
from utils.result_writer import ResultWriter


class NextViewAgent:
    """Agent for next-best-view camera scoring"""

    def __init__(self):
        self.store = FieldStore()
        self.reader = PointCloudReader()
        self.writer = ResultWriter()
        logger.info("Next-View Agent initialized")

    def score_cameras(
        self,
        prefix: str,
        cloud_path: str,
        cameras_path: str,
        repeats: int = config.CAMERA_REPEATS,
        seed: int = config.DEFAULT_SEED,
        output: Optional[str] = None,
        box: Optional[Sequence[Sequence[float]]] = None,
    ) -> Dict[str, Any]:
        """
        Score every camera of a CSV against a stored field

        The rebuild settings (sigma_g, k, prior, sign) are read back from the field
        metadata so the rebuilt fields are comparable with the stored one.

        Returns:
            Result dictionary with the CameraScore list
        """
        try:
            field = self.store.load(prefix)
            meta = self.store.read_metadata(prefix)
            cloud = self.reader.read_cloud(cloud_path)
            cloud.noise_sigma = field.sigma_n
            cameras = self.reader.read_cameras(cameras_path, field.grid.dim)

            prior_meta = meta.get('prior', {'kind': 'zero'})
            prior = MeanPrior(
                kind=prior_meta.get('kind', 'zero'),
                center=prior_meta.get('center'),
                alpha=prior_meta.get('alpha', config.PRIOR_ALPHA),
            )
            if prior.kind == 'ellipsoid':
                prior = MeanPrior.from_spec('ellipsoid', cloud.positions, prior.alpha, prior.center)
            run = RunConfig(
                sigma_g=field.sigma_g,
                sigma_n=field.sigma_n,
                eigen_k=field.basis.k,
                flip_sign=field.flip_sign,
                solver=meta.get('solver', config.SOLVER_METHOD),
            )

            scores = [
                camera_score(cloud, field, camera, repeats, seed, run=run, prior=prior, camera_index=index, box=box)
                for index, camera in enumerate(cameras)
            ]
            self.writer.write_scores_csv([s.score for s in scores], output)
            best = max(range(len(scores)), key=lambda i: scores[i].score)
            return {
                'success': True,
                'scores': scores,
                'summary': {'best_camera': best},
                'table_on_stdout': output is None,
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error scoring cameras: {e}")
            return failure_result(e)

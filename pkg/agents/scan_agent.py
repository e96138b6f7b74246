"""
Scan Agent - Simulates noisy scans of a mesh from a set of cameras
"""
from pathlib import Path
from typing import Any, Dict, Optional
from loguru import logger
import sys
sys.path.append(str(Path(__file__).parent.parent))

import config
from config import RunConfig
from core.covariance import OrientedPointCloud
from core.errors import failure_result
from core.scanning import scan_until_uncertainty, simulate_scan
from utils.point_cloud_io import PointCloudReader
from utils.result_writer import ResultWriter


class ScanAgent:
    """Agent for synthetic scan acquisition"""

    def __init__(self):
        self.reader = PointCloudReader()
        self.writer = ResultWriter()
        logger.info("Scan Agent initialized")

    def scan(
        self,
        mesh_path: str,
        cameras_path: str,
        output: str,
        n_rays: int = config.SCAN_RAYS,
        seed: int = config.DEFAULT_SEED,
    ) -> Dict[str, Any]:
        """
        Scan the mesh from every camera and write the merged cloud

        Camera i draws its rays from the RNG stream (seed, i).
        """
        try:
            mesh = self.reader.read_mesh(mesh_path)
            cameras = self.reader.read_cameras(cameras_path, 3)
            cloud = OrientedPointCloud.empty(3, max((c.sigma_normal for c in cameras), default=0.0))
            for index, camera in enumerate(cameras):
                cloud = cloud.union(simulate_scan(mesh, camera, n_rays, seed=[seed, index]))
            path = self.writer.write_cloud(cloud, output)
            return {
                'success': True,
                'cloud': cloud,
                'summary': {'scanned_points': len(cloud), 'output': str(path)},
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error in scan simulation: {e}")
            return failure_result(e)

    def scan_until(
        self,
        mesh_path: str,
        cameras_path: str,
        output: str,
        threshold: float,
        run: Optional[RunConfig] = None,
        n_rays: int = config.SCAN_RAYS,
        repeats: int = config.CAMERA_REPEATS,
        choose_next: bool = True,
        max_scans: Optional[int] = None,
    ) -> Dict[str, Any]:
        """
        Scan camera by camera, rebuilding after each scan, until the total uncertainty reaches `threshold`

        Returns:
            Result dictionary; the summary lists the cameras used and the final U
        """
        try:
            run = run or RunConfig()
            mesh = self.reader.read_mesh(mesh_path)
            cameras = self.reader.read_cameras(cameras_path, 3)
            session = scan_until_uncertainty(
                mesh, cameras, threshold, run,
                n_rays=n_rays, seed=run.seed, repeats=repeats, choose_next=choose_next, max_scans=max_scans,
            )
            path = self.writer.write_cloud(session.cloud, output)
            return {
                'success': True,
                'session': session,
                'summary': {
                    'scans': len(session.camera_order),
                    'cameras': ','.join(str(i) for i in session.camera_order),
                    'total_uncertainty': session.uncertainties[-1],
                    'converged': str(session.converged).lower(),
                    'scanned_points': len(session.cloud),
                    'output': str(path),
                },
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error in scan loop: {e}")
            return failure_result(e)

"""
Result emission: query CSVs, camera score tables, point clouds and level-set OBJ files
"""
from pathlib import Path
from typing import List, Optional, TextIO, Union
import sys

import numpy as np
import pandas as pd
import plyfile
import trimesh
from loguru import logger

from core.covariance import OrientedPointCloud
from core.queries import LevelSet

AXES = ('x', 'y', 'z')


class ResultWriter:
    """Write command results in their interchange formats"""

    def write_query_csv(
        self,
        points: np.ndarray,
        values: np.ndarray,
        lo: Optional[np.ndarray] = None,
        hi: Optional[np.ndarray] = None,
        output: Union[str, Path, TextIO, None] = None,
    ) -> pd.DataFrame:
        """
        One row per query point: `x,y[,z],value[,lo,hi]`.

        Args:
            points: (m, dim) query points
            values: Query values, NaN for points outside the grid
            lo, hi: Interval bounds for confidence queries
            output: File path or stream, stdout when omitted

        Returns:
            The written table
        """
        frame = pd.DataFrame(points, columns=list(AXES[:points.shape[1]]))
        frame['value'] = values
        if lo is not None and hi is not None:
            frame['lo'] = lo
            frame['hi'] = hi
        frame.to_csv(output if output is not None else sys.stdout, index=False, float_format=None)
        return frame

    def write_scores_csv(self, scores: List[float], output: Union[str, Path, TextIO, None] = None) -> pd.DataFrame:
        frame = pd.DataFrame({'camera_id': np.arange(len(scores)), 'score': scores})
        frame.to_csv(output if output is not None else sys.stdout, index=False)
        return frame

    def write_trajectory_csv(
        self,
        probabilities: np.ndarray,
        stderrs: np.ndarray,
        output: Union[str, Path, TextIO, None] = None,
    ) -> pd.DataFrame:
        frame = pd.DataFrame({'region': np.arange(len(probabilities)), 'p_collision': probabilities, 'stderr': stderrs})
        frame.to_csv(output if output is not None else sys.stdout, index=False)
        return frame

    def write_cloud(self, cloud: OrientedPointCloud, file_path: Union[str, Path]) -> Path:
        """Write `.xyzn` (x y [z] nx ny [nz]) or ASCII PLY with normals, chosen by suffix"""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix.lower() == '.ply':
            axes = AXES[:cloud.dim]
            dtype = [(a, 'f8') for a in axes] + [('n' + a, 'f8') for a in axes]
            vertex = np.empty(len(cloud), dtype=dtype)
            for i, a in enumerate(axes):
                vertex[a] = cloud.positions[:, i]
                vertex['n' + a] = cloud.normals[:, i]
            plyfile.PlyData([plyfile.PlyElement.describe(vertex, 'vertex')], text=True).write(str(path))
        else:
            data = np.hstack([cloud.positions, cloud.normals])
            with open(path, 'w', encoding='utf-8') as fh:
                header = ' '.join(AXES[:cloud.dim]) + ' ' + ' '.join('n' + a for a in AXES[:cloud.dim])
                fh.write(f"# {header}\n")
                for row in data:
                    fh.write(' '.join(repr(float(v)) for v in row) + '\n')
        logger.info(f"Wrote {len(cloud)} samples to {path}")
        return path

    def write_levelset_obj(self, levelset: LevelSet, file_path: Union[str, Path]) -> Path:
        """Triangle mesh via trimesh in 3D; `v` and `l` records for 2D polylines"""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if levelset.is_empty:
            path.write_text('', encoding='utf-8')
        elif levelset.dim == 3:
            mesh = trimesh.Trimesh(vertices=levelset.vertices, faces=levelset.faces, process=False)
            mesh.export(str(path), file_type='obj', include_normals=False)
        else:
            lines = []
            offset = 1
            for polyline in levelset.polylines:
                lines.extend(f"v {p[0]!r} {p[1]!r} 0.0" for p in polyline)
                lines.append('l ' + ' '.join(str(offset + i) for i in range(len(polyline))))
                offset += len(polyline)
            path.write_text('\n'.join(lines) + ('\n' if lines else ''), encoding='utf-8')
        logger.info(f"Wrote level set to {path}")
        return path

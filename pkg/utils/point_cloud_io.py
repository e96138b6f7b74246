"""
Readers for point clouds, query points, cameras and meshes
"""
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import plyfile
import trimesh
from loguru import logger

from core.covariance import OrientedPointCloud
from core.errors import ArgumentError, InputError
from core.scanning import Camera

CLOUD_EXTENSIONS = ('.xyzn', '.xyz', '.txt', '.ply')
MESH_EXTENSIONS = ('.obj', '.ply', '.stl', '.off')


class PointCloudReader:
    """Load oriented point clouds and auxiliary inputs from disk"""

    def __init__(self, noise_sigma: float = 0.0):
        self.noise_sigma = noise_sigma

    def read_cloud(self, file_path: str) -> OrientedPointCloud:
        """
        Load an oriented point cloud.

        Args:
            file_path: `.xyzn` (x y [z] nx ny [nz] per line) or PLY with nx/ny/nz properties

        Returns:
            OrientedPointCloud with normalized normals

        Raises:
            InputError: missing, empty or malformed file
        """
        path = Path(file_path)
        if not path.is_file():
            raise InputError("file not found", path=str(path))
        file_ext = path.suffix.lower()

        if file_ext == '.ply':
            positions, normals = self._read_ply(path)
        elif file_ext in CLOUD_EXTENSIONS:
            positions, normals = self._read_xyzn(path)
        else:
            raise InputError(f"unsupported point cloud format '{file_ext}'", path=str(path))

        if positions.shape[0] == 0:
            raise InputError("point cloud contains no samples", path=str(path))
        logger.info(f"Loaded {positions.shape[0]} samples ({positions.shape[1]}D) from {path.name}")
        try:
            return OrientedPointCloud(positions, normals, self.noise_sigma)
        except ArgumentError as e:
            raise InputError(str(e), path=str(path)) from e

    def _read_xyzn(self, path: Path):
        rows = []
        width = None
        with open(path, 'r', encoding='utf-8') as fh:
            for line_number, line in enumerate(fh, start=1):
                content = line.split('#', 1)[0].strip()
                if not content:
                    continue
                tokens = content.split()
                if len(tokens) not in (4, 6):
                    raise InputError(
                        f"expected 4 (2D) or 6 (3D) values, found {len(tokens)}", path=str(path), line=line_number
                    )
                if width is None:
                    width = len(tokens)
                elif len(tokens) != width:
                    raise InputError(
                        f"mixed dimensions: expected {width} values, found {len(tokens)}", path=str(path), line=line_number
                    )
                try:
                    values = [float(t) for t in tokens]
                except ValueError:
                    raise InputError(f"cannot parse number in '{content}'", path=str(path), line=line_number)
                if not np.all(np.isfinite(values)):
                    raise InputError("non-finite value", path=str(path), line=line_number)
                if not np.any(values[width // 2:]):
                    raise InputError("zero-length normal", path=str(path), line=line_number)
                rows.append(values)

        if not rows:
            return np.zeros((0, 3)), np.zeros((0, 3))
        data = np.array(rows)
        dim = width // 2
        return data[:, :dim], data[:, dim:]

    def _read_ply(self, path: Path):
        try:
            ply = plyfile.PlyData.read(str(path))
            vertex = ply['vertex'].data
        except Exception as e:
            raise InputError(f"cannot read PLY vertices: {e}", path=str(path))
        names = vertex.dtype.names or ()
        axes = ['x', 'y', 'z'] if 'z' in names else ['x', 'y']
        required = axes + ['n' + a for a in axes]
        missing = [name for name in required if name not in names]
        if missing:
            raise InputError(f"PLY vertex element lacks properties {missing}", path=str(path))
        positions = np.stack([np.asarray(vertex[a], dtype=float) for a in axes], axis=1)
        normals = np.stack([np.asarray(vertex['n' + a], dtype=float) for a in axes], axis=1)
        return positions, normals

    def read_points(self, file_path: str, dim: int) -> np.ndarray:
        """
        Load query points from CSV (`x,y[,z]` per row, optional header).

        Raises:
            InputError: unreadable file or non-numeric rows
        """
        path = Path(file_path)
        frame = self._read_table(path)
        values = frame.apply(pd.to_numeric, errors='coerce')
        if len(values) and values.iloc[0].isna().all():
            values = values.iloc[1:]
        if values.shape[1] < dim:
            raise InputError(f"expected at least {dim} columns, found {values.shape[1]}", path=str(path))
        values = values.iloc[:, :dim]
        bad = values.isna().any(axis=1)
        if bad.any():
            raise InputError("non-numeric coordinate", path=str(path), line=int(values.index[bad.argmax()]) + 1)
        if len(values) == 0:
            raise InputError("no query points", path=str(path))
        return values.to_numpy(dtype=float)

    def read_trajectory(self, file_path: str, dim: int) -> List[np.ndarray]:
        """
        Load regions swept along a path from CSV with a header: `region,x,y[,z]`.

        Rows sharing a region id form one region; regions keep the order of their first row.
        """
        path = Path(file_path)
        axes = list('xyz'[:dim])
        frame = self._read_table(path, header=0)
        missing = [c for c in ['region'] + axes if c not in frame.columns]
        if missing:
            raise InputError(f"trajectory file lacks columns {missing}", path=str(path))
        coords = frame[axes].apply(pd.to_numeric, errors='coerce')
        bad = coords.isna().any(axis=1)
        if bad.any():
            raise InputError("non-numeric coordinate", path=str(path), line=int(coords.index[bad.argmax()]) + 2)
        if len(frame) == 0:
            raise InputError("no trajectory points", path=str(path))
        regions = [coords.loc[rows.index].to_numpy(dtype=float) for _, rows in frame.groupby('region', sort=False)]
        logger.info(f"Loaded trajectory {path.name}: {len(regions)} regions, {len(frame)} points")
        return regions

    def read_cameras(self, file_path: str, dim: int) -> List[Camera]:
        """
        Load cameras from CSV with a header.

        Columns: px,py[,pz],dx,dy[,dz],half_angle and optional sigma_p,sigma_normal.
        """
        path = Path(file_path)
        axes = ['x', 'y', 'z'][:dim]
        frame = self._read_table(path, header=0)
        required = [f'p{a}' for a in axes] + [f'd{a}' for a in axes] + ['half_angle']
        missing = [c for c in required if c not in frame.columns]
        if missing:
            raise InputError(f"camera file lacks columns {missing}", path=str(path))
        cameras = []
        for index, row in frame.iterrows():
            try:
                cameras.append(Camera(
                    position=[float(row[f'p{a}']) for a in axes],
                    direction=[float(row[f'd{a}']) for a in axes],
                    half_angle=float(row['half_angle']),
                    sigma_p=float(row.get('sigma_p', 0.0) or 0.0),
                    sigma_normal=float(row.get('sigma_normal', 0.0) or 0.0),
                ))
            except (ArgumentError, ValueError) as e:
                raise InputError(str(e), path=str(path), line=int(index) + 2)
        if not cameras:
            raise InputError("no cameras", path=str(path))
        return cameras

    def read_mesh(self, file_path: str) -> trimesh.Trimesh:
        """Load a triangle mesh (OBJ v/f records, or any format trimesh reads)"""
        path = Path(file_path)
        if not path.is_file():
            raise InputError("file not found", path=str(path))
        if path.suffix.lower() not in MESH_EXTENSIONS:
            raise InputError(f"unsupported mesh format '{path.suffix}'", path=str(path))
        try:
            mesh = trimesh.load(str(path), force='mesh', process=False)
        except Exception as e:
            raise InputError(f"cannot read mesh: {e}", path=str(path))
        if len(mesh.faces) == 0:
            raise InputError("mesh has no faces", path=str(path))
        logger.info(f"Loaded mesh {path.name}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces")
        return mesh

    @staticmethod
    def _read_table(path: Path, header: Optional[int] = None) -> pd.DataFrame:
        if not path.is_file():
            raise InputError("file not found", path=str(path))
        try:
            return pd.read_csv(path, header=header, comment='#', skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise InputError("file is empty", path=str(path))
        except Exception as e:
            raise InputError(f"cannot read CSV: {e}", path=str(path))

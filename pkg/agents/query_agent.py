"""
Query Agent - Answers statistical queries against a stored StochasticField
"""
from pathlib import Path
from typing import Any, Dict, Optional, Sequence
import numpy as np
from loguru import logger
import sys
sys.path.append(str(Path(__file__).parent.parent))

import config
from core.errors import ArgumentError, failure_result
from core.queries import (
    RegionSamples,
    confidence_interval,
    extract_levelset,
    inside_probability,
    p_inside,
    region_collision_probability,
    surface_density,
    trajectory_collision_probability,
)
from utils.field_store import FieldStore
from utils.point_cloud_io import PointCloudReader
from utils.result_writer import ResultWriter

QUERY_KINDS = {
    'inside': None,
    'surface': None,
    'ci68': 0.68,
    'ci95': 0.95,
    'ci997': 0.997,
}


class QueryAgent:
    """Agent for pointwise, region and level-set queries"""

    def __init__(self):
        self.store = FieldStore()
        self.reader = PointCloudReader()
        self.writer = ResultWriter()
        logger.info("Query Agent initialized")

    def query_points(
        self,
        prefix: str,
        points_path: str,
        what: str,
        output: Optional[str] = None,
    ) -> Dict[str, Any]:
        """
        Evaluate a pointwise query for every row of a points CSV

        Args:
            prefix: Field prefix
            points_path: CSV of query points
            what: inside, surface, ci68, ci95 or ci997
            output: CSV destination, stdout when omitted

        Returns:
            Result dictionary; points outside the grid get NaN and are counted
        """
        try:
            if what not in QUERY_KINDS:
                raise ArgumentError(f"unknown query '{what}', expected one of {', '.join(QUERY_KINDS)}")
            field = self.store.load(prefix)
            points = self.reader.read_points(points_path, field.grid.dim)
            inside = field.grid.contains(points)
            outside = int(np.count_nonzero(~inside))
            if outside:
                logger.warning(f"{outside} query point(s) lie outside the grid; their rows are nan")

            values = np.full(len(points), np.nan)
            lo = hi = None
            level = QUERY_KINDS[what]
            if np.any(inside):
                if what == 'inside':
                    values[inside] = p_inside(field, points[inside])
                elif what == 'surface':
                    values[inside] = surface_density(field, points[inside])
                else:
                    lo, hi = np.full(len(points), np.nan), np.full(len(points), np.nan)
                    lo[inside], hi[inside] = confidence_interval(field, points[inside], level)
                    values[inside] = field.interpolate_mean(points[inside])
            elif level is not None:
                lo, hi = np.full(len(points), np.nan), np.full(len(points), np.nan)

            table = self.writer.write_query_csv(points, values, lo, hi, output)
            return {
                'success': True,
                'table': table,
                'summary': {'outside_points': outside},
                'table_on_stdout': output is None,
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error answering query: {e}")
            return failure_result(e)

    def collide(
        self,
        prefix: str,
        points_path: Optional[str] = None,
        box: Optional[Sequence[Sequence[float]]] = None,
        region_samples: int = 64,
        mc_samples: int = config.MC_SAMPLES,
        seed: int = config.DEFAULT_SEED,
        trajectory_path: Optional[str] = None,
        output: Optional[str] = None,
    ) -> Dict[str, Any]:
        """
        Probability that a region touches the inside of the reconstruction

        The region is the points of a CSV, or `region_samples` uniform points in a box.
        With a trajectory CSV every region along the path is scored and a
        `region,p_collision,stderr` table is written to `output` (stdout by default).
        """
        try:
            field = self.store.load(prefix)
            if trajectory_path is not None:
                return self._collide_trajectory(field, trajectory_path, mc_samples, seed, output)
            if points_path is not None:
                region = RegionSamples.from_points(field.grid, self.reader.read_points(points_path, field.grid.dim))
            elif box is not None:
                rng = np.random.default_rng([seed, 1])
                region = RegionSamples.from_box(field.grid, box[0], box[1], region_samples, rng)
            else:
                raise ArgumentError("collide needs --points or --box")
            probability, stderr = region_collision_probability(field, region, mc_samples, seed)
            logger.info(f"Collision probability {probability:.6f} +/- {stderr:.2e} over {len(region)} region points")
            return {
                'success': True,
                'summary': {'p_collision': probability, 'stderr': stderr},
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error in collision query: {e}")
            return failure_result(e)

    def _collide_trajectory(self, field, trajectory_path: str, mc_samples: int, seed: int, output: Optional[str]) -> Dict[str, Any]:
        regions = [RegionSamples.from_points(field.grid, points)
                   for points in self.reader.read_trajectory(trajectory_path, field.grid.dim)]
        result = trajectory_collision_probability(field, regions, mc_samples, seed)
        table = self.writer.write_trajectory_csv(result.probabilities, result.stderrs, output)
        lower, upper = result.bounds
        summary = {'regions': len(regions), 'worst_region': result.worst_region}
        if result.p_any is not None:
            summary.update({'p_any': result.p_any, 'stderr': result.p_any_stderr})
        else:
            summary.update({'p_any_lower': lower, 'p_any_upper': upper})
        return {
            'success': True,
            'trajectory': result,
            'table': table,
            'summary': summary,
            'table_on_stdout': output is None,
            'exit_code': 0,
        }

    def levelset(self, prefix: str, what: str, iso: Optional[float], output: str) -> Dict[str, Any]:
        """Extract the iso-surface of the mean field or of the inside probability and write it as OBJ"""
        try:
            field = self.store.load(prefix)
            if what == 'mean':
                values, iso = field.mean, 0.0 if iso is None else iso
            elif what == 'inside':
                values, iso = inside_probability(field.mean, field.variance), 0.5 if iso is None else iso
            else:
                raise ArgumentError(f"unknown level-set field '{what}', expected mean or inside")
            levelset = extract_levelset(field.grid, values, iso)
            path = self.writer.write_levelset_obj(levelset, output)
            count = len(levelset.faces) if field.grid.dim == 3 else len(levelset.polylines)
            return {
                'success': True,
                'levelset': levelset,
                'summary': {'levelset': str(path), 'elements': count},
                'exit_code': 0,
            }
        except Exception as e:
            logger.error(f"Error extracting level set: {e}")
            return failure_result(e)


"""
Stochastic Poisson Surface Reconstruction - Command-line entry point

stdout carries machine-readable `key=value` lines or CSV; logs go to stderr, and so
does the `key=value` summary of a command whose CSV went to stdout.
Exit codes: 0 success, 1 usage, 2 input, 3 numerical failure.
"""
import argparse
from pathlib import Path
import sys
from typing import List, Optional, Sequence, Tuple
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add parent directory to path
sys.path.append(str(Path(__file__).parent))

from loguru import logger

import config
from agents.orchestrator import OrchestratorAgent


class UsageErrorParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _box(text: str) -> Tuple[List[float], List[float]]:
    values = _float_list(text)
    if len(values) not in (4, 6):
        raise argparse.ArgumentTypeError("box needs 2*dim numbers: lo_x,lo_y[,lo_z],hi_x,hi_y[,hi_z]")
    half = len(values) // 2
    return values[:half], values[half:]


def setup_logging(level: str = config.LOG_LEVEL, log_file: str = config.LOG_FILE):
    """stderr sink at `level`, plus an optional rotating file sink"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <8} | {name}:{function} - {message}")
    if log_file:
        logger.add(log_file, level="DEBUG", rotation="10 MB")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', default=config.LOG_LEVEL, help='loguru level for stderr')
    common.add_argument('--threads', type=int, default=None, help='worker threads (default: SPSR_THREADS or CPU count)')
    common.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help='RNG seed')

    parser = UsageErrorParser(prog='spsr', description='Stochastic Poisson Surface Reconstruction')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=UsageErrorParser)

    rec = sub.add_parser('reconstruct', parents=[common], help='build a StochasticField from an oriented cloud')
    rec.add_argument('input', help='.xyzn or .ply point cloud')
    rec.add_argument('-o', '--output', dest='output_prefix', default='spsr', help='output file prefix')
    rec.add_argument('--resolution', type=int, default=config.GRID_RESOLUTION, help='nodes per axis')
    rec.add_argument('--padding', type=float, default=config.GRID_PADDING, help='grid padding as a fraction of the extent')
    rec.add_argument('--sigma-g', dest='sigma_g', type=float, default=config.SIGMA_G)
    rec.add_argument('--sigma-n', dest='sigma_n', type=float, default=config.SIGMA_N)
    rec.add_argument('--k', dest='eigen_k', type=int, default=config.EIGEN_K, help='eigenmodes (capped at |O|-1)')
    rec.add_argument('--prior', choices=['zero', 'sphere', 'ellipsoid'], default=config.PRIOR_KIND)
    rec.add_argument('--alpha', type=float, default=config.PRIOR_ALPHA, help='prior strength relative to the data term')
    rec.add_argument('--prior-center', dest='prior_center', type=_float_list, default=None)
    rec.add_argument('--flip-sign', dest='flip_sign', action='store_true', help='negate the mean field')
    rec.add_argument('--solver', choices=['cg', 'bicgstab'], default=config.SOLVER_METHOD)
    rec.add_argument('--binary', action='store_true', help='write .grid.bin payloads')
    rec.add_argument('--box', type=_box, default=None, help='region for the reported total uncertainty')

    query = sub.add_parser('query', parents=[common], help='pointwise queries from a points CSV')
    query.add_argument('prefix')
    query.add_argument('points')
    query.add_argument('--what', choices=['inside', 'surface', 'ci68', 'ci95', 'ci997'], default='inside')
    query.add_argument('-o', '--output', default=None, help='CSV destination (stdout by default)')

    collide = sub.add_parser('collide', parents=[common], help='collision probability of a region')
    collide.add_argument('prefix')
    collide.add_argument('--points', default=None, help='CSV of region points')
    collide.add_argument('--box', type=_box, default=None, help='box region lo...,hi...')
    collide.add_argument('--region-samples', dest='region_samples', type=int, default=64)
    collide.add_argument('--mc-samples', dest='mc_samples', type=int, default=config.MC_SAMPLES)
    collide.add_argument('--trajectory', default=None, help='CSV of region,x,y[,z] rows; scores every region along the path')
    collide.add_argument('-o', '--output', default=None, help='trajectory CSV destination (stdout by default)')

    repair = sub.add_parser('repair', parents=[common], help='Metropolis-Hastings point repair')
    repair.add_argument('prefix')
    repair.add_argument('cloud', help='cloud the field was built from')
    repair.add_argument('-o', '--output', required=True, help='.xyzn or .ply destination')
    repair.add_argument('--n-points', dest='n_points', type=int, default=1000)
    repair.add_argument('--steps', type=int, default=config.MH_STEPS)
    repair.add_argument('--proposal-sigma', dest='proposal_sigma', type=float, default=None)

    scan = sub.add_parser('scan', parents=[common], help='simulate scans of a mesh')
    scan.add_argument('mesh', help='OBJ mesh')
    scan.add_argument('--cameras', required=True, help='camera CSV')
    scan.add_argument('--rays', type=int, default=config.SCAN_RAYS)
    scan.add_argument('-o', '--output', required=True, help='.xyzn or .ply destination')
    scan.add_argument('--until-uncertainty', dest='until_uncertainty', type=float, default=None,
                      help='scan one camera at a time until the total uncertainty is at most this value')
    scan.add_argument('--in-order', dest='in_order', action='store_true', help='use cameras in file order instead of by score')
    scan.add_argument('--max-scans', dest='max_scans', type=int, default=None)
    scan.add_argument('--repeats', type=int, default=config.CAMERA_REPEATS, help='camera score repeats')
    scan.add_argument('--resolution', type=int, default=config.GRID_RESOLUTION, help='nodes per axis for the rebuilds')
    scan.add_argument('--k', dest='eigen_k', type=int, default=config.EIGEN_K, help='eigenmodes for the rebuilds')

    view = sub.add_parser('next-view', parents=[common], help='score candidate cameras')
    view.add_argument('prefix')
    view.add_argument('cloud', help='cloud the field was built from')
    view.add_argument('--cameras', required=True, help='camera CSV')
    view.add_argument('--repeats', type=int, default=config.CAMERA_REPEATS)
    view.add_argument('--box', type=_box, default=None, help='region for total uncertainty')
    view.add_argument('-o', '--output', default=None, help='CSV destination (stdout by default)')

    level = sub.add_parser('levelset', parents=[common], help='extract an iso-surface as OBJ')
    level.add_argument('prefix')
    level.add_argument('--what', choices=['mean', 'inside'], default='mean')
    level.add_argument('--iso', type=float, default=None, help='iso value (0 for mean, 0.5 for inside)')
    level.add_argument('-o', '--output', required=True, help='OBJ destination')

    return parser


def emit_summary(summary: dict, stream=None):
    """One line of space-separated key=value pairs"""
    if not summary:
        return
    stream = stream or sys.stdout
    pairs = [f"{key}={float(value)!r}" if isinstance(value, float) else f"{key}={value}" for key, value in summary.items()]
    stream.write(' '.join(pairs) + '\n')
    stream.flush()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the command and return the process exit code"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.threads is not None:
        config.THREADS = max(1, args.threads)

    result = OrchestratorAgent().process_request(args.command, args)
    if not result.get('success', False):
        sys.stderr.write(f"error: {result.get('error', 'unknown failure')}\n")
        return int(result.get('exit_code', 1))
    # a CSV already on stdout keeps it parseable; the summary then goes to stderr
    emit_summary(result.get('summary', {}), sys.stderr if result.get('table_on_stdout') else None)
    return 0


if __name__ == "__main__":
    sys.exit(main())

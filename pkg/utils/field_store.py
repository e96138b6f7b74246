"""
StochasticField persistence: node grids, the reduced covariance factor and a JSON
metadata document.

Files for a prefix P:
    P.mean.grid, P.var.grid, P.pin.grid   node values (".bin" suffix for binary payloads)
    P.C.bin                               k x k factor and the eigen mode triples
    P.field.meta                          JSON metadata
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
import sys

import numpy as np
from loguru import logger

sys.path.append(str(Path(__file__).parent.parent))

import config
from core.errors import InputError
from core.grid import UniformGrid
from core.poisson import EigenBasis, StochasticField
from core.queries import inside_probability, total_uncertainty

GRID_KINDS = ('mean', 'var', 'pin')


def grid_header(grid: UniformGrid) -> str:
    dims = ' '.join(str(n) for n in grid.dims)
    origin = ' '.join(repr(float(x)) for x in tuple(grid.origin) + (0.0,) * (3 - grid.dim))
    return f"dims {dims}\norigin {origin}\nspacing {grid.spacing!r}\norder x-fastest\n\n"


def write_grid_file(path: Path, grid: UniformGrid, values: np.ndarray, binary: bool = False):
    """Header lines, a blank line, then one value per node (text) or little-endian float64"""
    header = grid_header(grid)
    values = np.asarray(values, dtype=float)
    if binary:
        with open(path, 'wb') as fh:
            fh.write(header.encode('ascii'))
            fh.write(values.astype('<f8').tobytes())
    else:
        with open(path, 'w', encoding='ascii') as fh:
            fh.write(header)
            fh.write('\n'.join(repr(float(v)) for v in values))
            fh.write('\n')


def _parse_header(text: str, path: Path) -> Dict[str, Any]:
    header = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        key, values = tokens[0], tokens[1:]
        try:
            if key == 'dims':
                header['dims'] = tuple(int(v) for v in values)
            elif key == 'origin':
                header['origin'] = tuple(float(v) for v in values)
            elif key == 'spacing':
                header['spacing'] = float(values[0])
            elif key == 'order':
                if values != ['x-fastest']:
                    raise InputError(f"unsupported node order {' '.join(values)}", path=str(path), line=line_number)
            else:
                raise InputError(f"unknown header key '{key}'", path=str(path), line=line_number)
        except (ValueError, IndexError):
            raise InputError(f"malformed header line '{line}'", path=str(path), line=line_number)
    missing = {'dims', 'origin', 'spacing'} - header.keys()
    if missing:
        raise InputError(f"grid header lacks {sorted(missing)}", path=str(path))
    return header


def read_grid_file(path: Path) -> Tuple[Dict[str, Any], np.ndarray]:
    """Inverse of write_grid_file; the payload kind follows the file suffix"""
    path = Path(path)
    if not path.is_file():
        raise InputError("file not found", path=str(path))
    raw = path.read_bytes()
    split = raw.find(b'\n\n')
    if split < 0:
        raise InputError("grid header is not terminated by a blank line", path=str(path))
    header = _parse_header(raw[:split].decode('ascii'), path)
    payload = raw[split + 2:]
    count = int(np.prod(header['dims']))
    if path.suffix == '.bin':
        values = np.frombuffer(payload, dtype='<f8').astype(float)
    else:
        try:
            values = np.array([float(v) for v in payload.decode('ascii').split()])
        except ValueError as e:
            raise InputError(f"malformed grid value: {e}", path=str(path))
    if values.size != count:
        raise InputError(f"expected {count} values, found {values.size}", path=str(path))
    return header, values


def write_factor_file(path: Path, C: np.ndarray, modes: np.ndarray):
    """`k <int>` line, k*k little-endian float64 row-major, then k lines of `M N Ntilde`"""
    k = C.shape[0]
    with open(path, 'wb') as fh:
        fh.write(f"k {k}\n".encode('ascii'))
        fh.write(np.ascontiguousarray(C, dtype='<f8').tobytes(order='C'))
        fh.write(''.join(f"{m[0]} {m[1]} {m[2]}\n" for m in modes).encode('ascii'))


def read_factor_file(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise InputError("file not found", path=str(path))
    raw = path.read_bytes()
    newline = raw.find(b'\n')
    tokens = raw[:newline].decode('ascii', errors='replace').split()
    if len(tokens) != 2 or tokens[0] != 'k' or not tokens[1].isdigit():
        raise InputError("factor file must start with 'k <int>'", path=str(path), line=1)
    k = int(tokens[1])
    start, stop = newline + 1, newline + 1 + 8 * k * k
    if len(raw) < stop:
        raise InputError(f"factor payload truncated, expected {k * k} values", path=str(path))
    C = np.frombuffer(raw[start:stop], dtype='<f8').astype(float).reshape(k, k)
    lines = raw[stop:].decode('ascii').split('\n')
    modes = [line.split() for line in lines if line.strip()]
    if len(modes) != k or any(len(m) != 3 for m in modes):
        raise InputError(f"expected {k} mode lines of three integers", path=str(path))
    return C, np.array(modes, dtype=np.int64)


class FieldStore:
    """Save and reload StochasticFields under a file prefix"""

    def __init__(self, binary: bool = False):
        self.binary = binary

    @staticmethod
    def paths(prefix: str, binary: bool = False) -> Dict[str, Path]:
        suffix = '.bin' if binary else ''
        files = {kind: Path(f"{prefix}.{kind}.grid{suffix}") for kind in GRID_KINDS}
        files['factor'] = Path(f"{prefix}.C.bin")
        files['meta'] = Path(f"{prefix}.field.meta")
        return files

    def save(self, field: StochasticField, prefix: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
        """
        Write every file needed to reload the field.

        Args:
            field: Field to store
            prefix: Output prefix
            extra: Additional metadata entries

        Returns:
            Mapping from file kind to path
        """
        files = self.paths(prefix, self.binary)
        Path(prefix).parent.mkdir(parents=True, exist_ok=True)
        grid = field.grid
        probability = inside_probability(field.mean, field.variance)

        write_grid_file(files['mean'], grid, field.mean, self.binary)
        write_grid_file(files['var'], grid, field.variance, self.binary)
        write_grid_file(files['pin'], grid, probability, self.binary)
        write_factor_file(files['factor'], field.C, field.basis.mode_triples)

        meta = {
            'format_version': config.FIELD_FORMAT_VERSION,
            'grid': {
                'dims': list(grid.dims),
                'origin': list(grid.origin) + [0.0] * (3 - grid.dim),
                'spacing': grid.spacing,
                'kernel_width': grid.kernel_width,
            },
            'binary': self.binary,
            'sigma_g': field.sigma_g,
            'sigma_n': field.sigma_n,
            'k': field.basis.k,
            'flip_sign': field.flip_sign,
            'variance_offset': field.variance_offset,
            'solver_residual': field.residual,
            'laplacian_sign': config.LAPLACIAN_SIGN_CONVENTION,
            'inside_convention': 'f <= 0',
            'total_uncertainty': total_uncertainty(field),
        }
        meta.update(extra or {})
        files['meta'].write_text(json.dumps(meta, indent=2), encoding='utf-8')
        logger.info(f"Field saved under prefix {prefix}")
        return files

    def read_metadata(self, prefix: str) -> Dict[str, Any]:
        meta_path = self.paths(prefix)['meta']
        if not meta_path.is_file():
            raise InputError("field metadata not found", path=str(meta_path))
        try:
            return json.loads(meta_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise InputError(f"malformed field metadata: {e}", path=str(meta_path), line=e.lineno)

    def load(self, prefix: str) -> StochasticField:
        """
        Rebuild a StochasticField from its files; values round-trip bitwise.

        Raises:
            InputError: missing or inconsistent files
        """
        meta = self.read_metadata(prefix)
        meta_path = self.paths(prefix)['meta']
        try:
            grid_meta = meta['grid']
            dims = tuple(grid_meta['dims'])
            grid = UniformGrid(
                shape=dims,
                origin=tuple(grid_meta['origin']),
                spacing=grid_meta['spacing'],
                kernel_width=grid_meta.get('kernel_width'),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"malformed field metadata: {e}", path=str(meta_path))

        files = self.paths(prefix, bool(meta.get('binary', False)))
        values = {}
        for kind in ('mean', 'var'):
            header, values[kind] = read_grid_file(files[kind])
            if tuple(header['dims']) != grid.dims:
                raise InputError(f"grid dims {header['dims']} disagree with metadata {grid.dims}", path=str(files[kind]))
        C, modes = read_factor_file(files['factor'])
        basis = EigenBasis.from_modes(grid, modes)

        logger.info(f"Field loaded from prefix {prefix}: {grid.dims} nodes, k={basis.k}")
        return StochasticField(
            grid=grid,
            mean=values['mean'],
            variance=values['var'],
            C=C,
            basis=basis,
            variance_offset=float(meta.get('variance_offset', 0.0)),
            sigma_g=float(meta.get('sigma_g', config.SIGMA_G)),
            sigma_n=float(meta.get('sigma_n', config.SIGMA_N)),
            flip_sign=bool(meta.get('flip_sign', False)),
            residual=float(meta.get('solver_residual', 0.0)),
        )

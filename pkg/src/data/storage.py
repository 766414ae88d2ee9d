import base64
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.config.settings import settings
from src.core.control import PolyController
from src.core.kronalg import KronVector, check_symmetric
from src.core.problem import DegreeStats, ValueFunction
from src.data.schemas import ArrayRecord, CoefficientFile, DegreeStatsRecord
from src.utils.exceptions import AsymmetricCoefficientError, ModelError
from src.utils.logger import logger

_DTYPE = np.dtype("<f8")
SYMMETRY_RTOL = 1e-12


class CoefficientStore:
    """Reads and writes value functions and controllers as JSON containers."""

    @staticmethod
    def _encode(
        arrays: List[Tuple[str, np.ndarray]],
        sidecar: Path,
        threshold: int,
    ) -> Tuple[List[ArrayRecord], bool]:
        records = []
        offset = 0
        fh = None
        try:
            for name, a in arrays:
                raw = np.ascontiguousarray(a, dtype=_DTYPE).tobytes()
                if a.size <= threshold:
                    records.append(ArrayRecord(
                        name=name, shape=list(a.shape), encoding="base64",
                        data=base64.b64encode(raw).decode("ascii"),
                    ))
                    continue
                if fh is None:
                    fh = open(sidecar, "wb")
                fh.write(raw)
                records.append(ArrayRecord(
                    name=name, shape=list(a.shape), encoding="sidecar",
                    offset=offset, length=len(raw),
                ))
                offset += len(raw)
        finally:
            if fh is not None:
                fh.close()
        return records, fh is not None

    @staticmethod
    def _decode(record: ArrayRecord, sidecar: Optional[Path]) -> np.ndarray:
        if record.encoding == "base64":
            raw = base64.b64decode(record.data)
        else:
            if sidecar is None or not sidecar.exists():
                raise ModelError(f"Array '{record.name}' needs the missing sidecar {sidecar}")
            with open(sidecar, "rb") as fh:
                fh.seek(record.offset)
                raw = fh.read(record.length)
        expected = int(np.prod(record.shape, dtype=np.int64)) * _DTYPE.itemsize
        if len(raw) != expected:
            raise ModelError(
                f"Array '{record.name}' has {len(raw)} bytes, expected {expected} for shape {record.shape}"
            )
        return np.frombuffer(raw, dtype=_DTYPE).reshape(record.shape).astype(float)

    @staticmethod
    def _write(
        path: Union[str, Path],
        kind: str,
        n: int,
        m: Optional[int],
        d: int,
        arrays: List[Tuple[str, np.ndarray]],
        stats: List[DegreeStats],
        meta: Optional[Dict[str, Any]],
        sidecar_threshold: Optional[int],
    ) -> Path:
        path = Path(path)
        threshold = settings.sidecar_threshold if sidecar_threshold is None else sidecar_threshold
        sidecar = path.with_suffix(".bin")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            records, used_sidecar = CoefficientStore._encode(arrays, sidecar, threshold)
            doc = CoefficientFile(
                kind=kind,
                n=n,
                m=m,
                d=d,
                version=settings.app_version,
                created_at=datetime.now(timezone.utc).isoformat(),
                sidecar=sidecar.name if used_sidecar else None,
                arrays=records,
                stats=[DegreeStatsRecord(degree=s.degree, residual=s.residual, seconds=s.seconds) for s in stats],
                meta=meta or {},
            )
            path.write_text(doc.model_dump_json(indent=1), encoding="utf-8")
        except OSError as e:
            logger.error(f"Error writing coefficient file {path}: {str(e)}")
            raise ModelError(f"Failed to write coefficient file {path}: {str(e)}")
        logger.info(f"Wrote {kind} file {path}" + (f" with sidecar {sidecar.name}" if used_sidecar else ""))
        return path

    @staticmethod
    def _read(path: Union[str, Path], kind: str) -> Tuple[CoefficientFile, List[np.ndarray]]:
        path = Path(path)
        if not path.exists():
            raise ModelError(f"Coefficient file not found: {path}")
        try:
            doc = CoefficientFile.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            logger.error(f"Invalid coefficient file {path}: {str(e)}")
            raise ModelError(f"Invalid coefficient file {path}: {str(e)}")
        except (OSError, UnicodeDecodeError) as e:
            logger.error(f"Error reading coefficient file {path}: {str(e)}")
            raise ModelError(f"Failed to read coefficient file {path}: {str(e)}")
        if doc.kind != kind:
            raise ModelError(f"{path} holds a {doc.kind}, expected a {kind}")
        sidecar = path.parent / doc.sidecar if doc.sidecar else None
        try:
            arrays = [CoefficientStore._decode(r, sidecar) for r in doc.arrays]
        except (ValueError, OSError) as e:
            if isinstance(e, ModelError):
                raise
            logger.error(f"Corrupt array data in {path}: {str(e)}")
            raise ModelError(f"Corrupt array data in {path}: {str(e)}")
        return doc, arrays

    @staticmethod
    def save_value_function(
        path: Union[str, Path],
        value: ValueFunction,
        meta: Optional[Dict[str, Any]] = None,
        sidecar_threshold: Optional[int] = None,
    ) -> Path:
        """
        Write v_2..v_d with their synthesis diagnostics.

        Args:
            path: Target JSON file; large arrays go to the same stem with .bin
            value: Value function to store
            meta: Extra metadata (model description, tolerances)
            sidecar_threshold: Element count above which arrays leave the JSON

        Returns:
            Path of the JSON file
        """
        arrays = [(f"v{v.k}", v.data) for v in value.coeffs]
        return CoefficientStore._write(
            path, "value", value.n, None, value.d, arrays, value.stats, meta, sidecar_threshold
        )

    @staticmethod
    def load_value_function(path: Union[str, Path]) -> ValueFunction:
        """Read a value function written by save_value_function, bit for bit."""
        doc, arrays = CoefficientStore._read(path, "value")
        if len(arrays) != doc.d - 1:
            raise ModelError(f"{path} declares degree {doc.d} but holds {len(arrays)} coefficients")
        try:
            coeffs = [KronVector(a.reshape(-1), doc.n, k) for k, a in enumerate(arrays, start=2)]
            stats = [DegreeStats(s.degree, s.residual, s.seconds) for s in doc.stats]
            value = ValueFunction(doc.n, coeffs, stats)
        except ValueError as e:
            raise ModelError(f"Inconsistent value function in {path}: {str(e)}")
        for v in value.coeffs:
            tol = SYMMETRY_RTOL * max(1.0, float(np.abs(v.data).max(initial=0.0)))
            if not check_symmetric(v, tol):
                raise AsymmetricCoefficientError(f"Coefficient v{v.k} in {path} is not symmetric")
        return value

    @staticmethod
    def save_controller(
        path: Union[str, Path],
        ctrl: PolyController,
        meta: Optional[Dict[str, Any]] = None,
        sidecar_threshold: Optional[int] = None,
    ) -> Path:
        arrays = [(f"K{j}", K) for j, K in enumerate(ctrl.gains, start=1)]
        return CoefficientStore._write(
            path, "controller", ctrl.n, ctrl.m, ctrl.degree, arrays, [], meta, sidecar_threshold
        )

    @staticmethod
    def load_controller(path: Union[str, Path]) -> PolyController:
        doc, arrays = CoefficientStore._read(path, "controller")
        try:
            ctrl = PolyController(arrays)
        except ValueError as e:
            raise ModelError(f"Inconsistent controller in {path}: {str(e)}")
        if ctrl.n != doc.n or ctrl.m != doc.m or ctrl.degree != doc.d:
            raise ModelError(
                f"{path} declares (n={doc.n}, m={doc.m}, degree {doc.d}) but holds "
                f"(n={ctrl.n}, m={ctrl.m}, degree {ctrl.degree})"
            )
        return ctrl

    @staticmethod
    def read_meta(path: Union[str, Path]) -> Dict[str, Any]:
        """Metadata block of a coefficient file without decoding the arrays."""
        path = Path(path)
        try:
            raw = path.read_text(encoding="utf-8")
            return CoefficientFile.model_validate_json(raw).meta
        except (OSError, ValidationError) as e:
            raise ModelError(f"Cannot read metadata from {path}: {str(e)}")

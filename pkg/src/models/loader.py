"""Read and write polynomial control problems in the JSON model format."""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError

from src.core.problem import PolyCost, PolyDynamics
from src.models.schemas import MatrixBlock, ModelFile, VectorBlock
from src.utils.exceptions import ModelError, ShapeError
from src.utils.logger import logger


def _matrix_block(block: MatrixBlock, shape: Tuple[int, int], name: str):
    if block.dense is not None:
        return np.asarray(block.dense, dtype=float)
    rows, cols = shape
    if not block.coords:
        return sp.csr_matrix(shape)
    r, c, v = (np.asarray(a) for a in zip(*block.coords))
    if r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols:
        raise ShapeError(f"{name} coordinates fall outside a {rows}x{cols} block")
    return sp.csr_matrix((v.astype(float), (r.astype(int), c.astype(int))), shape=shape)


def _vector_block(block: VectorBlock, length: int, name: str):
    if block.dense is not None:
        return np.asarray(block.dense, dtype=float)
    if not block.coords:
        return sp.csr_matrix((length, 1))
    idx, v = (np.asarray(a) for a in zip(*block.coords))
    if idx.min() < 0 or idx.max() >= length:
        raise ShapeError(f"{name} index outside 0..{length - 1}")
    return sp.csr_matrix((v.astype(float), (idx.astype(int), np.zeros(idx.size, dtype=int))), shape=(length, 1))


def build_problem(doc: ModelFile) -> Tuple[PolyDynamics, PolyCost]:
    """Turn a validated model document into dynamics and cost."""
    n, m = doc.n, doc.m
    A = np.asarray(doc.A, dtype=float)
    B = np.asarray(doc.B, dtype=float)
    if A.shape != (n, n):
        raise ShapeError(f"A must be {n}x{n}, got {A.shape}")
    if B.shape != (n, m):
        raise ShapeError(f"B must be {n}x{m}, got {B.shape}")
    F = {int(p): _matrix_block(blk, (n, n ** int(p)), f"F_{p}") for p, blk in doc.F.items()}
    G = {int(p): _matrix_block(blk, (n, m * n ** int(p)), f"G_{p}") for p, blk in doc.G.items()}
    q = {int(p): _vector_block(blk, n ** int(p), f"q_{p}") for p, blk in doc.q.items()}
    dyn = PolyDynamics(A=A, B=B, F=F, G=G)
    cost = PolyCost(Q=doc.Q, R=doc.R, q=q)
    if cost.n != n or cost.m != m:
        raise ShapeError(f"Q and R must be {n}x{n} and {m}x{m}, got {cost.Q.shape} and {cost.R.shape}")
    return dyn, cost


def load_model(path: Union[str, Path]) -> Tuple[PolyDynamics, PolyCost]:
    """
    Load a polynomial control problem from a JSON model file.

    Args:
        path: Path to the model file

    Returns:
        (dynamics, cost)

    Raises:
        ModelError: If the file is missing, malformed or fails validation
        ShapeError: If a coefficient block has the wrong shape
    """
    path = Path(path)
    if not path.exists():
        raise ModelError(f"Model file not found: {path}")
    try:
        doc = ModelFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        logger.error(f"Invalid model file {path}: {str(e)}")
        raise ModelError(f"Invalid model file {path}: {str(e)}")
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Error reading model file {path}: {str(e)}")
        raise ModelError(f"Failed to read model file {path}: {str(e)}")

    dyn, cost = build_problem(doc)
    logger.info(f"Loaded model {path.name}: n={dyn.n}, m={dyn.m}, degree {dyn.degree}")
    return dyn, cost


def _block_doc(M) -> Dict[str, Any]:
    if sp.issparse(M):
        coo = sp.coo_matrix(M)
        order = np.lexsort((coo.col, coo.row))
        return {"coords": [
            (int(coo.row[i]), int(coo.col[i]), float(coo.data[i])) for i in order
        ]}
    return {"dense": np.asarray(M).tolist()}


def _vector_doc(v) -> Dict[str, Any]:
    if sp.issparse(v):
        coo = sp.coo_matrix(v)
        order = np.argsort(coo.row, kind="stable")
        return {"coords": [(int(coo.row[i]), float(coo.data[i])) for i in order]}
    return {"dense": np.asarray(v).reshape(-1).tolist()}


def model_document(dyn: PolyDynamics, cost: PolyCost, meta: Optional[Dict[str, Any]] = None) -> ModelFile:
    return ModelFile(
        n=dyn.n,
        m=dyn.m,
        A=dyn.A.tolist(),
        B=dyn.B.tolist(),
        F={str(p): MatrixBlock(**_block_doc(Fp)) for p, Fp in dyn.F.items()},
        G={str(p): MatrixBlock(**_block_doc(Gp)) for p, Gp in dyn.G.items()},
        Q=cost.Q.tolist(),
        R=cost.R.tolist(),
        q={str(p): VectorBlock(**_vector_doc(qp)) for p, qp in cost.q.items()},
        meta=meta or {},
    )


def save_model(
    path: Union[str, Path],
    dyn: PolyDynamics,
    cost: PolyCost,
    meta: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write dynamics and cost as a JSON model file; load_model reads it back exactly.

    Sparse blocks are written as sorted coordinate lists, dense ones row-major.
    """
    path = Path(path)
    doc = model_document(dyn, cost, meta)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(doc.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        logger.error(f"Error writing model file {path}: {str(e)}")
        raise ModelError(f"Failed to write model file {path}: {str(e)}")
    logger.info(f"Saved model to {path}")
    return path

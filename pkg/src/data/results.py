from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.sim.simulate import Trajectory
from src.utils.exceptions import ModelError
from src.utils.logger import logger

FLOAT_FORMAT = "%.17g"


class ResultWriter:
    """Writes trajectories, sweep tables and JSON documents."""

    @staticmethod
    def trajectory_frame(traj: Trajectory, states: Optional[np.ndarray] = None) -> pd.DataFrame:
        """
        Tabulate a trajectory as t, x1..xn, u1..um, J.

        Args:
            traj: Simulated trajectory
            states: Replacement state samples (e.g. unshifted coordinates)

        Returns:
            DataFrame with one row per sample
        """
        X = traj.states if states is None else np.asarray(states)
        columns = {"t": traj.times}
        columns.update({f"x{i + 1}": X[:, i] for i in range(X.shape[1])})
        columns.update({f"u{j + 1}": traj.inputs[:, j] for j in range(traj.m)})
        columns["J"] = traj.accumulated_cost
        return pd.DataFrame(columns)

    @staticmethod
    def write_trajectory(
        path: Union[str, Path],
        traj: Trajectory,
        states: Optional[np.ndarray] = None,
    ) -> Path:
        path = Path(path)
        df = ResultWriter.trajectory_frame(traj, states)
        ResultWriter._write_csv(path, df)
        logger.info(f"Wrote trajectory CSV {path}: {len(df)} rows")
        return path

    @staticmethod
    def write_table(path: Union[str, Path], rows: List[Dict]) -> Path:
        """Write sweep rows, one per controller/parameter cell."""
        path = Path(path)
        df = pd.DataFrame(rows)
        ResultWriter._write_csv(path, df)
        logger.info(f"Wrote table CSV {path}: {len(df)} rows")
        return path

    @staticmethod
    def read_csv(path: Union[str, Path]) -> pd.DataFrame:
        path = Path(path)
        if not path.exists():
            raise ModelError(f"File not found: {path}")
        try:
            return pd.read_csv(path, float_precision="round_trip")
        except (OSError, ValueError) as e:
            logger.error(f"Error reading CSV {path}: {str(e)}")
            raise ModelError(f"Failed to read CSV {path}: {str(e)}")

    @staticmethod
    def write_json(path: Union[str, Path], doc: BaseModel) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(doc.model_dump_json(indent=2), encoding="utf-8")
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise ModelError(f"Failed to write {path}: {str(e)}")
        return path

    @staticmethod
    def _write_csv(path: Path, df: pd.DataFrame) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            logger.error(f"Error writing CSV {path}: {str(e)}")
            raise ModelError(f"Failed to write CSV {path}: {str(e)}")

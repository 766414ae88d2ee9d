"""
Script to create sample model files for trying the command-line tool.
Run this script to generate models/f8.json and models/duffing.json
"""

from pathlib import Path

import numpy as np

from src.core.problem import PolyCost, PolyDynamics
from src.models.benchmarks import aircraft_f8
from src.models.loader import save_model

out = Path("models")

# F-8 aircraft, the same model as `--model aircraft`
dyn, cost = aircraft_f8()
save_model(out / "f8.json", dyn, cost, meta={"name": "F-8 Crusader stall recovery"})

# Damped Duffing oscillator x1' = x2, x2' = -x1 - 0.5 x2 - x1^3 + u
F3 = np.zeros((2, 8))
F3[1, 0] = -1.0  # x1^3
duffing = PolyDynamics(
    A=np.array([[0.0, 1.0], [-1.0, -0.5]]),
    B=np.array([[0.0], [1.0]]),
    F={3: F3},
)
save_model(
    out / "duffing.json",
    duffing,
    PolyCost(Q=np.eye(2), R=np.eye(1)),
    meta={"name": "damped Duffing oscillator"},
)

print(f"✅ Sample models written to {out}/")
print("   - f8.json: 3 states, 1 input, cubic drift")
print("   - duffing.json: 2 states, 1 input, cubic drift")
print("\nTry:")
print(f"   python -m src.main synthesize --model {out}/duffing.json --degree 4 --out runs/duffing")

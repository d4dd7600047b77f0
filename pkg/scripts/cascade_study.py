"""Oscillation cascades of computed and synthetic trajectories with their Hoelder fits.

Usage: python3 scripts/cascade_study.py
"""

import sys
import warnings
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import trajectories as tj  # noqa: E402
from paraharnack.core_fields import TruncationWarning  # noqa: E402
from paraharnack.harnack_lab import run_battery  # noqa: E402
from paraharnack.oscillation_lab import holder_fit, oscillation_cascade  # noqa: E402

warnings.simplefilter("ignore", TruncationWarning)


def show(name, rep, C=None):
    alpha, _ = holder_fit(rep, C=C)
    print(f"{name}: alpha_fit={alpha:.4f} delta={rep.delta_witness:.4f} "
          f"r_admissible={rep.r_admissible} alpha_admissible={rep.alpha_admissible}")
    print("  M_k", " ".join(f"{m:.4g}" for m in rep.M_k))


def main():
    C = run_battery("fractional", N=256)["ratio_cap"]
    print(f"fractional battery ratio cap C = {C:.5f}")
    show("synthetic beta=0.5", oscillation_cascade(tj.synthetic_holder(), 0.5, 0.5, anchor=((0.0,), 0.0)))
    show("local sphere", oscillation_cascade(tj.local_sphere(), mode="local"))
    show("local small", oscillation_cascade(tj.local_small(), mode="local"))
    for s in (0.25, 0.5, 0.75):
        show(f"fractional s={s}", oscillation_cascade(tj.fractional_small(s), 0.5, s, anchor=((0.0,), 0.0)), C=C)


if __name__ == "__main__":
    main()

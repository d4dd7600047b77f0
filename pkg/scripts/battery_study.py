"""Harnack battery ratios under spatial refinement for each theorem.

Usage: python3 scripts/battery_study.py
"""

import warnings

from paraharnack.core_fields import TruncationWarning
from paraharnack.harnack_lab import run_battery

warnings.simplefilter("ignore", TruncationWarning)


def main():
    for theorem in ("local", "fractional", "master"):
        print(f"{theorem}:")
        for N in (128, 256, 512):
            res = run_battery(theorem, N=N)
            tails = [rep.tail for rep in res["reports"].values()]
            print(f"  N={N:4d} ratio_cap={res['ratio_cap']:.6f} max_tail={max(tails):.3g}")
            for mid, rep in res["reports"].items():
                print(f"    {mid:24s} ratio={rep.ratio:.6f} audit={rep.residual_audit:+.2e}")


if __name__ == "__main__":
    main()

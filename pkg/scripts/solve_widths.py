#!/usr/bin/env python3
"""Solve the per-stage channel widths for the model zoo.

Each architecture fixes its early stage widths (s1, 2*s1, 4*s1) and this
script scans the final-stage width until the closed-form parameter count
lands within +/-2% of the target budget.  The winning widths are frozen
into `lightcnn.zoo` as constants; rerun this script if the recipes change.

Usage: python3 scripts/solve_widths.py
"""

BUDGETS = {"140": 140_000, "340": 340_000, "590": 590_000}
NUM_CLASSES = 10

# conv kind sequences per recipe; pools sit after conv #2, #4, #6
RECIPES = {
    "custom590_3x3": ["c3"] * 8,
    "custom590_dw": ["c3", "c3", "dw", "c3", "dw", "c3"] + ["dw"] * 6,
    "custom340_3x3": ["c3"] * 7,
    "custom340_dw": ["c3", "c3", "dw", "c3", "dw", "c3"] + ["dw"] * 5,
    "custom140_3x3": ["c3"] * 7,
    "custom140_dw": ["c3", "c3", "dw", "c3", "dw", "c3"] + ["dw"] * 3,
}

# one starting width for every budget keeps the 28x28 stage cheap; the
# budget differences land in the 4x4 stage where FLOPs are negligible
STAGE_START = {"140": 16, "340": 16, "590": 16}


def widths_for(kinds, s1, s4):
    """Stage widths: convs 1-2 -> s1, 3-4 -> 2*s1, 5-6 -> 4*s1, rest -> s4."""
    n = len(kinds)
    out = []
    for i in range(n):
        if i < 2:
            out.append(s1)
        elif i < 4:
            out.append(2 * s1)
        elif i < 6:
            out.append(4 * s1)
        else:
            out.append(s4)
    return out


def param_count(kinds, widths, k=NUM_CLASSES):
    total = 0
    cin = 1
    for kind, cout in zip(kinds, widths):
        if kind == "c3":
            total += 9 * cin * cout + cout
        else:  # dw: per-channel 3x3 (+bias) then 1x1 pointwise (+bias)
            total += 9 * cin + cin + cin * cout + cout
        cin = cout
    total += cin * k + k  # GAP -> dense classifier
    return total


def solve(name, kinds, budget, s1):
    best = None
    for s4 in range(8, 2048):
        n = param_count(kinds, widths_for(kinds, s1, s4))
        err = abs(n - budget) / budget
        if best is None or err < best[1]:
            best = (s4, err, n)
    return best


def main():
    for name, kinds in RECIPES.items():
        tag = name[6:9]
        budget = BUDGETS[tag]
        s1 = STAGE_START[tag]
        s4, err, n = solve(name, kinds, budget, s1)
        w = widths_for(kinds, s1, s4)
        print(f"{name:15s} s1={s1:3d} s4={s4:4d} params={n:7d} "
              f"({100 * err:+.2f}% off {budget}) widths={w}")


if __name__ == "__main__":
    main()

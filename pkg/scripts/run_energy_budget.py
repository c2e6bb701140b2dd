#!/usr/bin/env python3
"""Forward run with the per-step energy ledger written to CSV.

Quick look at conservation (TypeII) or decay (TypeIII) without a config
file; the defaults reproduce the conservation acceptance setup.
"""

import argparse
from pathlib import Path

from gnplate.dynamics import ZERO_SOURCES, assemble, make_initial_state, run, write_energy_csv
from gnplate.grid import Grid
from gnplate.material import MaterialParams, ModelType


def default_material(model: str) -> MaterialParams:
    zero = model == "TypeII"
    return MaterialParams(
        lam=1.0, mu=1.0, d1=0.1, d2=0.1, c=1.0, kappa=0.2, r=1.0,
        k1=1.0, h1=1.0, hbar1=0.2,
        k2=0.0 if zero else 0.5, h2=0.0 if zero else 0.5,
        hbar2=0.0 if zero else 0.1,
        rho=1.0, T0=1.0, half_thickness=0.5,
        model_type=ModelType.from_string(model),
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=("TypeII", "TypeIII"), default="TypeII")
    ap.add_argument("--n", type=int, default=32, help="interior nodes per side")
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--out", default="out/energy.csv")
    args = ap.parse_args()

    grid = Grid(1.0, 1.0, args.n, args.n)
    params = default_material(args.model)
    matrices = assemble(params, grid)
    U0 = make_initial_state(grid, preset="gaussian_bump", target_field="w",
                            center=(0.5, 0.5), width=0.12)
    _, report = run(U0, matrices, ZERO_SOURCES, args.dt, args.t_end)

    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_energy_csv(report, path)
    print(f"E0(0) = {report.E0[0]:.6e}  E0(T) = {report.E0[-1]:.6e}")
    print(f"max relative drift     {report.max_drift():.3e}")
    print(f"max balance residual   {report.max_balance_residual_rel():.3e}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

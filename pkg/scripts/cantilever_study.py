#!/usr/bin/env python3
"""Static cantilever study: simulated tip position vs analytic references.

Sweeps tip loads from the linear regime into large deflection, comparing the
corotational static solution against the small-deflection formula FL^3/(3EI)
and the elastica ODE solved independently by shooting.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cablefem.beam import MaterialParams, straight_model
from cablefem.constraints import FixedNodeSpec
from cablefem.engine import Engine, StepInputs
from cablefem.scenario import MATERIAL_PRESETS
from cablefem.solver import SolverSettings


def elastica_tip(load, ei, length):
    def shoot(k0):
        sol = solve_ivp(lambda s, y: [y[1], -load / ei * np.cos(y[0])],
                        [0.0, length], [0.0, k0], rtol=1e-10, atol=1e-12,
                        dense_output=True)
        return sol, sol.y[1, -1]

    k0 = brentq(lambda k: shoot(k)[1], 0.0, 5.0 * load * length / ei, xtol=1e-14)
    sol, _ = shoot(k0)
    s = np.linspace(0.0, length, 2001)
    theta = sol.sol(s)[0]
    return np.trapezoid(np.cos(theta), s), np.trapezoid(np.sin(theta), s)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=31)
    parser.add_argument("--length", type=float, default=0.07)
    parser.add_argument("--material", choices=sorted(MATERIAL_PRESETS), default="a")
    parser.add_argument("--loads", type=float, nargs="+",
                        default=[0.005, 0.01, 0.05, 0.2, 0.55, 1.0])
    args = parser.parse_args()

    material = MaterialParams(**MATERIAL_PRESETS[args.material])
    ei = material.young_modulus * material.bending_inertia
    model = straight_model(args.nodes, args.length, material)
    engine = Engine(model, fixed_specs=[FixedNodeSpec(0)], settings=SolverSettings())

    print(f"{'P [N]':>8s} {'fem tip z':>12s} {'linear z':>12s} {'elastica z':>12s} "
          f"{'d/L':>7s} {'vs elastica':>12s}")
    for load in args.loads:
        f = np.zeros(model.dof_count)
        f[-4] = load
        x, _, _ = engine.run_static(StepInputs(applied_force=f), tol=1e-10,
                                    max_frames=20000)
        tip = x.positions()[-1]
        linear = load * args.length**3 / (3.0 * ei)
        ex, ez = elastica_tip(load, ei, args.length)
        err = np.hypot(tip[0] - ex, tip[2] - ez) / args.length
        print(f"{load:8.3f} {tip[2]:12.6e} {linear:12.6e} {ez:12.6e} "
              f"{ez / args.length:7.3f} {err:12.3e}")


if __name__ == "__main__":
    main()

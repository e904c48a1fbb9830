"""Local stability of the Van der Pol closed loops at the origin.

Near the origin the input box is inactive, so each controller is a smooth
state feedback and the sampled closed loop ``x -> x_next`` has a Jacobian.
This script estimates it by central differences through the full solve and
prints its eigenvalues. A spectral radius above one means the controller
cannot hold the origin, whatever the settling threshold.

    python3 scripts/vdp_linearization.py
"""

import numpy as np

from lifted_nmpc.mpc import ShootingObjective, truth_step
from lifted_nmpc.scenario import preset
from lifted_nmpc.solver import SolverOptions, minimize_box


def closed_loop_map(scenario, controller, x):
    cfg = scenario.config
    opts = SolverOptions(max_iterations=2000, grad_tolerance=1e-12)
    obj = ShootingObjective(scenario.plant(), cfg, x, controller)
    v = minimize_box(obj, np.zeros(obj.size), obj.bounds(), opts).v_star
    spec = cfg.hold(controller)
    x_next, _ = truth_step(scenario.plant(), x, spec, v[: spec.size], cfg.fine_substeps)
    return x_next, v[: spec.size]


def main():
    s = preset("vdp")
    eps = 1e-4
    for controller in ("conventional", "lifted"):
        J = np.zeros((2, 2))
        K = np.zeros((s.config.hold(controller).size, 2))
        for i, e in enumerate(np.eye(2)):
            xp, up = closed_loop_map(s, controller, eps * e)
            xm, um = closed_loop_map(s, controller, -eps * e)
            J[:, i] = (xp - xm) / (2 * eps)
            K[:, i] = (up - um) / (2 * eps)
        eig = np.linalg.eigvals(J)
        print(f"{controller:>12}: first-input gain {np.round(K[0], 4)}, "
              f"closed-loop eigenvalues {np.round(eig, 5)}, spectral radius {np.abs(eig).max():.4f}")


if __name__ == "__main__":
    main()

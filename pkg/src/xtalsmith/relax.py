"""Structure relaxation: FIRE descent over atomic positions and cell strain.

The cell degrees of freedom enter as a strain applied on top of the current
lattice, scaled by the atom count so stress- and force-derived gradients are
comparable. Uphill moves are rejected (positions restored, velocity reset),
which keeps the energy non-increasing across accepted steps; rejected moves
still count toward the step cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculator import Calculator, EvaluationError
from .core import CrystalStructure, Lattice, cart_to_frac

DEFAULT_MAX_STEPS = 100
DEFAULT_FMAX = 0.05  # eV/A


class RelaxationError(RuntimeError):
    """Evaluation failed mid-run; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: list):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class TrajectoryFrame:
    structure: CrystalStructure
    energy: float
    fmax: float


@dataclass
class RelaxResult:
    structure: CrystalStructure
    trajectory: list[TrajectoryFrame] = field(default_factory=list)
    converged: bool = False
    n_steps: int = 0

    @property
    def energy(self) -> float:
        return self.trajectory[-1].energy

    @property
    def energy_per_atom(self) -> float:
        return self.energy / self.structure.n_sites


def _forces_vector(
    forces: np.ndarray, stress: np.ndarray, volume: float, cell_factor: float,
    relax_cell: bool,
) -> np.ndarray:
    if not relax_cell:
        return forces.reshape(-1)
    strain_force = -(volume * stress) / cell_factor
    return np.concatenate([forces.reshape(-1), strain_force.reshape(-1)])


def _generalized_fmax(
    forces: np.ndarray, stress: np.ndarray, volume: float, cell_factor: float,
    relax_cell: bool,
) -> float:
    fm = float(np.max(np.linalg.norm(forces, axis=1)))
    if relax_cell:
        fm = max(fm, float(np.max(np.linalg.norm(volume * stress / cell_factor, axis=1))))
    return fm


def relax(
    calc: Calculator,
    s: CrystalStructure,
    max_steps: int = DEFAULT_MAX_STEPS,
    fmax: float = DEFAULT_FMAX,
    relax_cell: bool = True,
    maxstep: float = 0.2,
) -> RelaxResult:
    """Minimize energy; returns (structure, trajectory, converged) bundle.

    Stops at the force criterion (max per-atom force and, when the cell
    relaxes, the scaled stress gradient both below ``fmax``) or at the step
    cap, whichever comes first.
    """
    n = s.n_sites
    cell_factor = float(n)
    ndof = 3 * n + (9 if relax_cell else 0)

    # FIRE parameters
    dt, dt_max = 0.1, 1.0
    n_min, f_inc, f_dec = 5, 1.1, 0.5
    alpha_start, f_alpha = 0.1, 0.99
    alpha = alpha_start
    steps_since_reset = 0

    current = s
    trajectory: list[TrajectoryFrame] = []
    try:
        energy, forces, stress = calc.evaluate(current)
    except EvaluationError as exc:
        raise RelaxationError(str(exc), trajectory) from exc
    volume = current.volume
    fm = _generalized_fmax(forces, stress, volume, cell_factor, relax_cell)
    trajectory.append(TrajectoryFrame(current, energy, fm))
    if fm <= fmax:
        return RelaxResult(current, trajectory, converged=True, n_steps=0)

    velocity = np.zeros(ndof)
    steps = 0
    converged = False
    while steps < max_steps:
        steps += 1
        g = _forces_vector(forces, stress, volume, cell_factor, relax_cell)

        power = float(np.dot(g, velocity))
        if power > 0.0:
            vnorm = np.linalg.norm(velocity)
            gnorm = np.linalg.norm(g)
            if gnorm > 0:
                velocity = (1.0 - alpha) * velocity + alpha * vnorm * g / gnorm
            if steps_since_reset > n_min:
                dt = min(dt * f_inc, dt_max)
                alpha *= f_alpha
            steps_since_reset += 1
        else:
            velocity[:] = 0.0
            dt *= f_dec
            alpha = alpha_start
            steps_since_reset = 0

        velocity = velocity + dt * g
        dq = dt * velocity
        # clamp per-atom displacement and strain increments
        datoms = dq[: 3 * n].reshape(n, 3)
        norms = np.linalg.norm(datoms, axis=1)
        big = norms > maxstep
        if np.any(big):
            datoms[big] *= (maxstep / norms[big])[:, None]
        if relax_cell:
            deps = dq[3 * n :].reshape(3, 3) / cell_factor
            deps = 0.5 * (deps + deps.T)
            lim = np.max(np.abs(deps))
            if lim > 0.05:
                deps *= 0.05 / lim
            new_lattice = Lattice.from_matrix(
                current.lattice.matrix @ (np.eye(3) + deps)
            )
        else:
            new_lattice = current.lattice
        new_cart = current.frac_array @ new_lattice.matrix + datoms
        candidate = CrystalStructure.build(
            current.species, cart_to_frac(new_cart, new_lattice), new_lattice
        )

        try:
            e_new, f_new, s_new = calc.evaluate(candidate)
        except EvaluationError as exc:
            raise RelaxationError(str(exc), trajectory) from exc

        if e_new > energy + 1e-12 * max(1.0, abs(energy)):
            # uphill: reject the move and restart the dynamics more carefully
            velocity[:] = 0.0
            dt *= f_dec
            alpha = alpha_start
            steps_since_reset = 0
            continue

        current, energy, forces, stress = candidate, e_new, f_new, s_new
        volume = current.volume
        fm = _generalized_fmax(forces, stress, volume, cell_factor, relax_cell)
        trajectory.append(TrajectoryFrame(current, energy, fm))
        if fm <= fmax:
            converged = True
            break

    return RelaxResult(current, trajectory, converged=converged, n_steps=steps)

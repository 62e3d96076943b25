"""Energy/force/stress calculators behind a pluggable interface.

The built-in calculator is a shifted Lennard-Jones pair potential with
radii derived from covalent radii; it stands in for machine-learned force
fields at desk scale. External calculators can be attached through the
line-delimited JSON subprocess protocol (:class:`SubprocessCalculator`).

Conventions: energy in eV; forces are -dE/d(cartesian positions) in eV/A;
stress is (1/V) dE/d(strain), symmetric, in eV/A^3.
"""

from __future__ import annotations

import json
import math
import subprocess
from itertools import product

import numpy as np

from .core import CrystalStructure
from .elements import get_element

#: Pair separation below which evaluation refuses to continue (angstrom).
OVERLAP_DISTANCE = 0.1


class EvaluationError(RuntimeError):
    """Calculator could not produce a finite result for this structure."""


class Calculator:
    """Interface: evaluate(structure) -> (energy, forces, stress)."""

    #: False for calculators that must be called from one thread at a time.
    thread_safe: bool = True

    def evaluate(
        self, s: CrystalStructure
    ) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError


class PairPotentialCalculator(Calculator):
    """Shifted 12-6 pair potential over periodic images.

    sigma_ij = radius_scale * (r_cov_i + r_cov_j); the potential is shifted
    so it vanishes continuously at the cutoff.
    """

    thread_safe = True

    def __init__(
        self,
        epsilon: float = 0.2,
        radius_scale: float = 0.9,
        cutoff: float = 6.0,
    ):
        self.epsilon = float(epsilon)
        self.radius_scale = float(radius_scale)
        self.cutoff = float(cutoff)

    def _sigma(self, sym_a: str, sym_b: str) -> float:
        return self.radius_scale * (
            get_element(sym_a).covalent_radius + get_element(sym_b).covalent_radius
        )

    def _image_shifts(self, lattice_matrix: np.ndarray) -> np.ndarray:
        inv = np.linalg.inv(lattice_matrix)
        # plane spacing along axis i is 1/|inv column i|
        reach = [
            int(math.ceil(self.cutoff * float(np.linalg.norm(inv[:, i])))) for i in range(3)
        ]
        grid = [range(-n, n + 1) for n in reach]
        return np.array(list(product(*grid)), dtype=float)

    def evaluate(self, s: CrystalStructure):
        L = s.lattice.matrix
        cart = s.cart_coords
        n = len(cart)
        int_shifts = self._image_shifts(L)
        shifts = int_shifts @ L
        # half-space of image shifts for periodic self-pairs
        lex = (
            (int_shifts[:, 0] > 0)
            | ((int_shifts[:, 0] == 0) & (int_shifts[:, 1] > 0))
            | (
                (int_shifts[:, 0] == 0)
                & (int_shifts[:, 1] == 0)
                & (int_shifts[:, 2] > 0)
            )
        )
        rc = self.cutoff
        eps4 = 4.0 * self.epsilon

        energy = 0.0
        forces = np.zeros((n, 3))
        virial = np.zeros((3, 3))

        def accumulate(d, sig):
            """Energy/virial terms for unordered pairs; returns per-pair force sums."""
            nonlocal energy, virial
            r2 = np.einsum("gk,gk->g", d, d)
            within = r2 < rc * rc
            if not np.any(within):
                return None
            r = np.sqrt(r2[within])
            if float(np.min(r)) < OVERLAP_DISTANCE:
                raise EvaluationError(
                    f"interatomic distance {float(np.min(r)):.4f} A below "
                    f"{OVERLAP_DISTANCE} A"
                )
            sr6 = (sig / r) ** 6
            sr12 = sr6 * sr6
            src6 = (sig / rc) ** 6
            phi = eps4 * (sr12 - sr6) - eps4 * (src6 * src6 - src6)
            dphi = -6.0 * eps4 * (2.0 * sr12 - sr6) / r
            energy += float(np.sum(phi))
            dw = d[within]
            u = dw / r[:, None]
            virial += np.einsum("p,pa,pb->ab", dphi, dw, u)
            return np.sum(dphi[:, None] * u, axis=0)

        for i in range(n):
            # periodic self-pairs (i, i + t), one image per unordered pair;
            # their force contributions cancel exactly
            accumulate(shifts[lex], self._sigma(s.species[i], s.species[i]))
            for j in range(i + 1, n):
                d = cart[j] + shifts - cart[i]
                fsum = accumulate(d, self._sigma(s.species[i], s.species[j]))
                if fsum is not None:
                    forces[i] += fsum
                    forces[j] -= fsum
        stress = virial / s.volume
        return energy, forces, 0.5 * (stress + stress.T)


class SubprocessCalculator(Calculator):
    """Drives an external calculator over line-delimited JSON.

    Request per evaluation: ``{"structure": {...}}``; the child answers one
    line ``{"energy": E, "forces": [[...]], "stress": [[...]]}`` or
    ``{"error": "..."}``. The child process stays alive across calls.
    """

    thread_safe = False

    def __init__(self, command: list[str], timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def evaluate(self, s: CrystalStructure):
        import selectors

        proc = self._ensure()
        request = json.dumps({"structure": s.as_dict()})
        try:
            proc.stdin.write(request + "\n")
            proc.stdin.flush()
            sel = selectors.DefaultSelector()
            sel.register(proc.stdout, selectors.EVENT_READ)
            if not sel.select(timeout=self.timeout):
                proc.kill()
                self._proc = None
                raise EvaluationError(
                    f"calculator subprocess timed out after {self.timeout}s"
                )
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluationError(f"calculator subprocess failed: {exc}") from exc
        if not line:
            raise EvaluationError("calculator subprocess closed its stdout")
        reply = json.loads(line)
        if "error" in reply:
            raise EvaluationError(str(reply["error"]))
        return (
            float(reply["energy"]),
            np.asarray(reply["forces"], dtype=float),
            np.asarray(reply["stress"], dtype=float),
        )

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
        self._proc = None


def serve_stdin(calc: Calculator, stdin=None, stdout=None) -> None:
    """Run the subprocess-protocol server loop over stdio (used by the CLI)."""
    import sys

    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            structure = CrystalStructure.from_dict(req["structure"])
            energy, forces, stress = calc.evaluate(structure)
            reply = {
                "energy": energy,
                "forces": forces.tolist(),
                "stress": stress.tolist(),
            }
        except Exception as exc:  # protocol: errors go back as JSON
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()

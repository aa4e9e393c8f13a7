"""
Constructive local existence by Picard iteration.

Each iterate solves the linear system obtained by freezing the transport
velocity, the chemotactic gradient, the consumption density and the
buoyancy source at the previous iterate.  Trajectories live on a uniform
time mesh and frozen coefficients are interpolated linearly between mesh
points.  The residual between successive iterates is

    sup_j ( ||drho(t_j)||_2 + ||dc(t_j)||_2 + ||domega(t_j)||_2 ).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .model import Model, Params, State
from .timestepper import IFRK3, BlowUpError, BlowUpReport

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Spectral samples of (rho, c, omega) at t_j = j * dt, j = 0..nt.

    ``data`` has shape (nt + 1, 3, n, n // 2 + 1).
    """

    grid: Grid
    dt: float
    data: np.ndarray

    @property
    def nt(self) -> int:
        return self.data.shape[0] - 1

    @property
    def T(self) -> float:
        return self.nt * self.dt

    def at(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d = self.data[j]
        return d[0], d[1], d[2]

    def interp(self, j: int, theta: float):
        """Linear interpolation at t_j + theta * dt."""
        if theta == 0.0:
            return self.at(j)
        if theta == 1.0:
            return self.at(j + 1)
        d = (1.0 - theta) * self.data[j] + theta * self.data[j + 1]
        return d[0], d[1], d[2]

    def state(self, j: int) -> State:
        return State.from_spectral(self.grid, j * self.dt, self.at(j))

    def distance(self, other: "Trajectory") -> float:
        g = self.grid
        w = g.weights
        diff = self.data - other.data
        per = np.sqrt(g.area * np.sum(w * (diff.real**2 + diff.imag**2), axis=(-2, -1)))
        return float(per.sum(axis=1).max())

    @classmethod
    def constant(cls, state: State, T: float, dt: float) -> "Trajectory":
        nt = _mesh_size(T, dt)
        hats = np.stack(state.spectral())
        return cls(state.grid, T / nt, np.repeat(hats[None], nt + 1, axis=0))


def _mesh_size(T: float, dt: float) -> int:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    return max(1, int(round(T / dt)))


def linear_advance(prev: Trajectory, data: State, params: Params) -> Trajectory:
    """Solve the frozen-coefficient linear system over the mesh of ``prev``."""
    g = prev.grid
    model = Model(g, params)
    stepper = IFRK3(g, (params.nu_rho, params.nu_c, params.nu_u))
    dt = prev.dt
    out = np.empty_like(prev.data)
    hats = data.spectral()
    out[0] = np.stack(hats)
    for j in range(prev.nt):

        def N(v, offset, j=j):
            return model.linear_nonlinear_frozen(v, prev.interp(j, offset / dt))

        hats = stepper.step(hats, dt, N)
        hats[2][0, 0] = 0.0
        for name, h in zip(("rho", "c", "omega"), hats):
            if not np.all(np.isfinite(h)):
                raise BlowUpError(BlowUpReport((j + 1) * dt, name, float("nan"), "non-finite Picard iterate"))
        out[j + 1] = np.stack(hats)
    return Trajectory(g, dt, out)


@dataclass
class PicardResult:
    trajectory: Trajectory
    residuals: list[float]
    converged: bool
    iterations: int
    contracting: bool
    message: str
    ratios: list[float] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        r = self.ratios[1:]
        return max(r) if r else 0.0


def picard_run(
    data: State,
    params: Params,
    T: float = 0.1,
    dt: float = 1e-3,
    tol: float = 1e-10,
    max_iter: int = 30,
) -> PicardResult:
    """Iterate :func:`linear_advance` from the constant-in-time extension of ``data``.

    Contraction is declared when every ratio resid[n+1] / resid[n] for
    n >= 2 is below one.  ``ratios[i]`` holds resid[i+2] / resid[i+1].
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 2:
        raise ValueError("max_iter must be at least 2")
    prev = Trajectory.constant(data, T, dt)
    residuals: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            new = linear_advance(prev, data, params)
        except BlowUpError as err:
            log.warning("picard iterate %d diverged: %s", it, err)
            residuals.append(math.inf)
            break
        res = new.distance(prev)
        residuals.append(res)
        log.info("picard iteration %d: residual %.3e", it, res)
        prev = new
        if not math.isfinite(res):
            break
        if res < tol:
            converged = True
            break
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(residuals[:-1], residuals[1:])]
    finite = all(math.isfinite(r) for r in residuals)
    contracting = finite and all(r < 1.0 for r in ratios[1:])
    if contracting and converged:
        msg = f"converged in {it} iterations (residual {residuals[-1]:.3e})"
    elif contracting:
        msg = f"contracting but not converged after {it} iterations (residual {residuals[-1]:.3e})"
    elif not finite:
        msg = f"non-contraction: iterate {it} diverged on T={T:g}; reduce T"
    else:
        worst = max(ratios[1:]) if len(ratios) > 1 else float("nan")
        msg = (
            f"non-contraction: residual ratio reached {worst:.3g} >= 1 on T={T:g}; "
            "reduce T (the local existence time shrinks as the initial energy grows)"
        )
    return PicardResult(prev, residuals, converged, it, contracting, msg, ratios)

"""
Integrating-factor Runge-Kutta time stepping.

Diffusion is integrated exactly per mode through exp(-nu |k|^2 dt); the
explicit terms are advanced by Kutta's three-stage third-order scheme in
the integrating-factor variables, which is a quadrature of the Duhamel
integral.  Only non-negative exponents appear, so stiff modes never
overflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

import numpy as np

from .grid import Grid
from .model import Model, Params, SpectralTriple, State

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-8
TAIL_THRESHOLD = 1e-4


@dataclass(frozen=True)
class StepControl:
    cfl: float = 0.4
    dt_max: float = 1e-2
    dt_min: float = 1e-6
    t_end: float = 1.0
    sample_interval: float = 0.1
    dt_fixed: float | None = None

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if self.dt_fixed is not None and not self.dt_fixed > 0:
            raise ValueError("dt_fixed must be positive")


@dataclass
class BlowUpReport:
    time: float
    field: str
    tail_fraction: float
    reason: str

    def __str__(self):
        return (
            f"{self.reason} at t={self.time:.6g} in field '{self.field}' "
            f"(tail fraction {self.tail_fraction:.3e})"
        )


class BlowUpError(RuntimeError):
    def __init__(self, report: BlowUpReport):
        super().__init__(str(report))
        self.report = report


class Observer(Protocol):
    def __call__(self, state: State, dt: float) -> None: ...


NonlinearFn = Callable[[np.ndarray, np.ndarray, np.ndarray], SpectralTriple]


class IFRK3:
    """Integrating-factor RK3 stepper for three diffusing fields."""

    def __init__(self, grid: Grid, diffusivities: tuple[float, float, float]):
        self.grid = grid
        self.nus = diffusivities
        self._cache_dt = None
        self._factors = None

    def factors(self, dt: float):
        if dt != self._cache_dt:
            ksq = self.grid.ksq
            self._factors = [
                (np.exp(-nu * ksq * dt), np.exp(-nu * ksq * (0.5 * dt))) if nu > 0 else (None, None)
                for nu in self.nus
            ]
            self._cache_dt = dt
        return self._factors

    def step(self, u: SpectralTriple, dt: float, N: Callable[[SpectralTriple, float], SpectralTriple]) -> SpectralTriple:
        """Advance ``u`` by ``dt``; ``N(stage_values, stage_offset)`` gives explicit terms."""
        fac = self.factors(dt)

        def apply(E, a):
            return a if E is None else E * a

        k1 = N(u, 0.0)
        ua = tuple(apply(Eh, x + (0.5 * dt) * n) for (E, Eh), x, n in zip(fac, u, k1))
        k2 = N(ua, 0.5 * dt)
        ub = tuple(
            apply(E, x - dt * n1) + (2.0 * dt) * apply(Eh, n2)
            for (E, Eh), x, n1, n2 in zip(fac, u, k1, k2)
        )
        k3 = N(ub, dt)
        return tuple(
            apply(E, x + (dt / 6.0) * n1) + (dt / 6.0) * (4.0 * apply(Eh, n2) + n3)
            for (E, Eh), x, n1, n2, n3 in zip(fac, u, k1, k2, k3)
        )


def _stepper(grid: Grid, params: Params) -> IFRK3:
    return IFRK3(grid, (params.nu_rho, params.nu_c, params.nu_u))


def step_hat(
    model: Model,
    stepper: IFRK3,
    hats: SpectralTriple,
    dt: float,
    nonlinear: NonlinearFn | None = None,
) -> SpectralTriple:
    nl = nonlinear or model.nonlinear
    out = stepper.step(hats, dt, lambda v, _s: nl(*v))
    out[2][0, 0] = 0.0
    return out


def step(state: State, params: Params, dt: float, nonlinear: NonlinearFn | None = None) -> State:
    """One IF-RK3 step of size ``dt``.

    ``nonlinear`` replaces the explicit terms (a test hook; pass a function
    returning zeros to isolate the diffusion propagator).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = state.grid
    model = Model(g, params)
    out = step_hat(model, _stepper(g, params), state.spectral(), dt, nonlinear)
    _check_finite(g, out, state.t + dt)
    return State.from_spectral(g, state.t + dt, out)


def max_speed(grid: Grid, hats: SpectralTriple) -> float:
    """Largest of max|u|, max|grad c| on the grid."""
    _, c_h, om_h = hats
    u1h, u2h = grid.biot_savart(om_h)
    u = np.sqrt(grid._inv(u1h) ** 2 + grid._inv(u2h) ** 2)
    gc = np.sqrt(grid._inv(grid.ik1 * c_h) ** 2 + grid._inv(grid.ik2 * c_h) ** 2)
    return float(max(u.max(), gc.max()))


def cfl_dt_from_speed(speed: float, dx: float, control: StepControl) -> float:
    dt = control.cfl * dx / max(speed, EPS_FLOOR)
    return max(min(dt, control.dt_max), control.dt_min)


def cfl_dt(state: State, params: Params, control: StepControl) -> float:
    g = state.grid
    return cfl_dt_from_speed(max_speed(g, state.spectral()), g.dx, control)


def tail_fraction_hat(grid: Grid, hats: Iterable[np.ndarray]) -> float:
    """Share of the combined L2 energy in modes with |k| > (2/3) k_nyquist."""
    w = grid.weights
    tail = grid.radial_tail
    tot = 0.0
    hi = 0.0
    for h in hats:
        e = w * (h.real**2 + h.imag**2)
        tot += float(e.sum())
        hi += float(e[tail].sum())
    return hi / tot if tot > 0 else 0.0


def _check_finite(grid: Grid, hats: SpectralTriple, t: float) -> None:
    for name, h in zip(("rho", "c", "omega"), hats):
        if not np.all(np.isfinite(h)):
            raise BlowUpError(BlowUpReport(t, name, float("nan"), "non-finite values"))


def _check_tail(grid: Grid, hats: SpectralTriple, t: float, threshold: float) -> None:
    frac = tail_fraction_hat(grid, hats)
    if frac > threshold:
        # blame the field holding the most high-band energy
        w = grid.weights
        tail = grid.radial_tail
        energy = [float((w * np.abs(h) ** 2)[tail].sum()) for h in hats]
        worst = ("rho", "c", "omega")[int(np.argmax(energy))]
        raise BlowUpError(BlowUpReport(t, worst, frac, "under-resolution: spectral tail above threshold"))


def _clip(grid: Grid, hats: SpectralTriple) -> SpectralTriple:
    rho = np.maximum(grid._inv(hats[0]), 0.0)
    c = np.maximum(grid._inv(hats[1]), 0.0)
    return grid._fwd(rho), grid._fwd(c), hats[2]


def integrate(
    state0: State,
    params: Params,
    control: StepControl,
    observers: Iterable[Observer] = (),
    nonlinear: NonlinearFn | None = None,
    tail_threshold: float = TAIL_THRESHOLD,
) -> State:
    """Advance ``state0`` to ``control.t_end``.

    ``control.t_end`` is an absolute time.  Observers are called with
    ``(state, dt)`` at the start and every ``control.sample_interval`` after
    it; steps are shortened to land on sample times and on ``t_end``.  Raises :class:`BlowUpError` when a field goes
    non-finite or the spectral tail exceeds ``tail_threshold``.
    """
    g = state0.grid
    observers = list(observers)
    model = Model(g, params)
    stepper = _stepper(g, params)
    hats = state0.spectral()
    t = float(state0.t)
    t_end = float(control.t_end)
    for obs in observers:
        obs(state0, 0.0)
    if t_end <= t:
        return state0

    n_samples = int(math.floor((t_end - t) / control.sample_interval + 1e-9))
    sample_times = [t + (i + 1) * control.sample_interval for i in range(n_samples)]
    if not sample_times or sample_times[-1] < t_end - 1e-12:
        sample_times.append(t_end)
    next_idx = 0
    last_dt = 0.0
    nsteps = 0
    while next_idx < len(sample_times):
        target = sample_times[next_idx]
        if control.dt_fixed is not None:
            dt = control.dt_fixed
        else:
            dt = cfl_dt_from_speed(max_speed(g, hats), g.dx, control)
        hit = False
        if t + dt >= target - 1e-12 * max(1.0, abs(target)):
            dt = target - t
            hit = True
        if dt <= 0:
            hit = True
        else:
            hats = step_hat(model, stepper, hats, dt, nonlinear)
            t = target if hit else t + dt
            last_dt = dt
            nsteps += 1
            if params.clip_negative:
                hats = _clip(g, hats)
            _check_finite(g, hats, t)
            _check_tail(g, hats, t, tail_threshold)
        if hit:
            next_idx += 1
            if observers:
                st = State.from_spectral(g, t, hats)
                for obs in observers:
                    obs(st, last_dt)
    log.debug("integrated to t=%g in %d steps", t, nsteps)
    return State.from_spectral(g, t, hats)

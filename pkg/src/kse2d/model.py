"""
Right-hand sides of the chemotaxis-Euler system in vorticity form.

    rho_t = -div(u rho) + nu_rho Lap(rho) - div(rho grad c)
    c_t   = -div(u c)   + nu_c   Lap(c)   - c rho
    w_t   = -div(u w)   + curl(rho' grad phi) + nu_u Lap(w)

with u = grad^perp Lap^{-1} w and rho' = rho - mean(rho).  The sensitivity
is fixed to 1 and the consumption rate to c.  ``nu_u = 0`` is the Euler
coupling, ``nu_u > 0`` the Navier-Stokes one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .grid import Grid

SpectralTriple = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class Params:
    """Physical and numerical parameters.

    ``gravity`` is the constant part of grad(phi).  ``phi_perturbation`` is
    an optional callable ``phi(x1, x2)`` returning a smooth periodic
    potential whose gradient is added to it.
    """

    nu_rho: float = 1.0
    nu_c: float = 1.0
    nu_u: float = 0.0
    gravity: tuple[float, float] = (0.0, -1.0)
    phi_perturbation: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    m: int = 3
    dealias_on: bool = True
    couplings: bool = True
    clip_negative: bool = False

    def __post_init__(self):
        if not self.nu_rho > 0:
            raise ValueError(f"nu_rho must be positive, got {self.nu_rho}")
        if not self.nu_c > 0:
            raise ValueError(f"nu_c must be positive, got {self.nu_c}")
        if not self.nu_u >= 0:
            raise ValueError(f"nu_u must be non-negative, got {self.nu_u}")
        if self.m < 3:
            raise ValueError(f"Sobolev index m must be >= 3, got {self.m}")
        if len(self.gravity) != 2 or not all(np.isfinite(self.gravity)):
            raise ValueError("gravity must be a finite 2-vector")
        object.__setattr__(self, "gravity", (float(self.gravity[0]), float(self.gravity[1])))

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class State:
    """Cell density, chemical concentration and vorticity at time ``t``."""

    grid: Grid
    t: float
    rho: np.ndarray
    c: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name in ("rho", "c", "omega"):
            a = getattr(self, name)
            if np.shape(a) != self.grid.shape:
                raise ValueError(f"{name} has shape {np.shape(a)}, expected {self.grid.shape}")
            object.__setattr__(self, name, _frozen(a))

    @classmethod
    def from_spectral(cls, grid: Grid, t: float, hats: SpectralTriple) -> "State":
        return cls(grid, t, *(grid.inverse(h) for h in hats))

    def spectral(self) -> SpectralTriple:
        g = self.grid
        om = g.forward(self.omega)
        om[0, 0] = 0.0
        return g.forward(self.rho), g.forward(self.c), om

    def fields(self) -> dict[str, np.ndarray]:
        return {"rho": self.rho, "c": self.c, "omega": self.omega}


class Model:
    """Spectral evaluation of the coupled right-hand sides on one grid.

    All methods take and return coefficient arrays in the grid's half
    layout.  ``nonlinear`` returns only the explicitly treated terms; the
    diffusion rates per field are in ``diffusivities``.
    """

    def __init__(self, grid: Grid, params: Params):
        self.grid = grid
        self.params = params
        self.diffusivities = (params.nu_rho, params.nu_c, params.nu_u)
        g1, g2 = params.gravity
        # curl(rho' g) for the constant part of grad(phi), as a spectral multiplier
        self._buoyancy = g2 * grid.ik1 - g1 * grid.ik2
        self._dphi = None
        if params.phi_perturbation is not None:
            x1, x2 = grid.mesh
            ph = grid.forward(params.phi_perturbation(x1, x2))
            self._dphi = (grid.inverse(grid.ik1 * ph), grid.inverse(grid.ik2 * ph))
        self._mask = grid.dealias_mask if params.dealias_on else None

    def _trunc(self, F: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return F
        F[~self._mask] = 0.0
        return F

    def product_hat(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dealiased coefficients of the pointwise product of two real fields."""
        return self._trunc(self.grid._fwd(a * b))

    def velocity_hat(self, om_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.biot_savart(om_h)

    def buoyancy_hat(self, rho_h: np.ndarray) -> np.ndarray:
        """curl(rho' grad phi) = grad^perp rho . grad phi, zero mean."""
        out = self._buoyancy * rho_h
        if self._dphi is not None:
            g = self.grid
            rp = g._inv(rho_h) - rho_h[0, 0].real
            f1 = self.product_hat(rp, self._dphi[0])
            f2 = self.product_hat(rp, self._dphi[1])
            out = out + g.ik1 * f2 - g.ik2 * f1
        out[0, 0] = 0.0
        return out

    def nonlinear(self, rho_h: np.ndarray, c_h: np.ndarray, om_h: np.ndarray) -> SpectralTriple:
        g = self.grid
        if not self.params.couplings:
            z = np.zeros(g.spectral_shape, dtype=complex)
            return z, z.copy(), z.copy()
        u1h, u2h = self.velocity_hat(om_h)
        inv = g._inv
        rho, c, om = inv(rho_h), inv(c_h), inv(om_h)
        u1, u2 = inv(u1h), inv(u2h)
        c1, c2 = inv(g.ik1 * c_h), inv(g.ik2 * c_h)
        # rho is transported by u and drifts with grad c: one combined flux
        f1 = self.product_hat(u1 + c1, rho)
        f2 = self.product_hat(u2 + c2, rho)
        n_rho = -g.divergence(f1, f2)
        n_c = -g.divergence(self.product_hat(u1, c), self.product_hat(u2, c))
        n_c -= self.product_hat(c, rho)
        n_om = -g.divergence(self.product_hat(u1, om), self.product_hat(u2, om))
        n_om += self.buoyancy_hat(rho_h)
        n_om[0, 0] = 0.0
        return n_rho, n_c, n_om

    def linear_nonlinear_frozen(
        self,
        new: SpectralTriple,
        frozen: SpectralTriple,
    ) -> SpectralTriple:
        """Explicit terms of the linearised system with frozen coefficients.

        ``new`` is the unknown (rho, c, omega) and ``frozen`` the previous
        iterate at the same time.  The frozen velocity transports all three
        unknowns, the frozen grad c drives the flux of the new rho, the
        frozen rho consumes the new c and forces the new vorticity.
        """
        g = self.grid
        if not self.params.couplings:
            z = np.zeros(g.spectral_shape, dtype=complex)
            return z, z.copy(), z.copy()
        rho_h, c_h, om_h = new
        frho_h, fc_h, fom_h = frozen
        inv = g._inv
        u1h, u2h = self.velocity_hat(fom_h)
        u1, u2 = inv(u1h), inv(u2h)
        c1, c2 = inv(g.ik1 * fc_h), inv(g.ik2 * fc_h)
        frho = inv(frho_h)
        rho, c, om = inv(rho_h), inv(c_h), inv(om_h)
        n_rho = -g.divergence(self.product_hat(u1 + c1, rho), self.product_hat(u2 + c2, rho))
        n_c = -g.divergence(self.product_hat(u1, c), self.product_hat(u2, c))
        n_c -= self.product_hat(c, frho)
        n_om = -g.divergence(self.product_hat(u1, om), self.product_hat(u2, om))
        n_om += self.buoyancy_hat(frho_h)
        n_om[0, 0] = 0.0
        return n_rho, n_c, n_om

    def full_rhs(self, rho_h: np.ndarray, c_h: np.ndarray, om_h: np.ndarray) -> SpectralTriple:
        g = self.grid
        n_rho, n_c, n_om = self.nonlinear(rho_h, c_h, om_h)
        nr, nc, nu = self.diffusivities
        return (
            n_rho - nr * g.ksq * rho_h,
            n_c - nc * g.ksq * c_h,
            n_om - nu * g.ksq * om_h,
        )

    def pressure_rhs_hat(self, rho_h: np.ndarray, om_h: np.ndarray) -> np.ndarray:
        """Coefficients of div(rho' grad phi) - div(u . grad u)."""
        g = self.grid
        g1, g2 = self.params.gravity
        rp = rho_h.copy()
        rp[0, 0] = 0.0
        src = (g1 * g.ik1 + g2 * g.ik2) * rp
        if self._dphi is not None:
            rpp = g._inv(rp)
            src = src + g.divergence(self.product_hat(rpp, self._dphi[0]), self.product_hat(rpp, self._dphi[1]))
        u1h, u2h = self.velocity_hat(om_h)
        u1, u2 = g._inv(u1h), g._inv(u2h)
        # div(u . grad u) = d_i d_j (u_i u_j) for divergence-free u
        s11, s12, s22 = self.product_hat(u1, u1), self.product_hat(u1, u2), self.product_hat(u2, u2)
        adv = g.ik1 * g.ik1 * s11 + 2.0 * g.ik1 * g.ik2 * s12 + g.ik2 * g.ik2 * s22
        out = src - adv
        out[0, 0] = 0.0
        out[g.nyquist] = 0.0
        return out


# -- field-level API -------------------------------------------------------------


def velocity(state: State, params: Params | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean divergence-free velocity recovered from the vorticity."""
    g = state.grid
    om = g.forward(state.omega)
    u1h, u2h = g.biot_savart(om)
    return g.inverse(u1h), g.inverse(u2h)


def _rhs(state: State, params: Params) -> SpectralTriple:
    model = Model(state.grid, params)
    return model.full_rhs(*state.spectral())


def rhs_rho(state: State, params: Params) -> np.ndarray:
    return state.grid.inverse(_rhs(state, params)[0])


def rhs_c(state: State, params: Params) -> np.ndarray:
    return state.grid.inverse(_rhs(state, params)[1])


def rhs_omega(state: State, params: Params) -> np.ndarray:
    return state.grid.inverse(_rhs(state, params)[2])


def pressure_recover(state: State, params: Params) -> np.ndarray:
    """Zero-mean pressure solving Lap p = div(rho' grad phi) - div(u . grad u)."""
    g = state.grid
    model = Model(g, params)
    rho_h, _, om_h = state.spectral()
    src = model.pressure_rhs_hat(rho_h, om_h)
    return g.inverse(-src * g.inv_ksq)


def pressure_residual(state: State, params: Params) -> float:
    """Relative L2 residual of the pressure Poisson equation."""
    g = state.grid
    model = Model(g, params)
    rho_h, _, om_h = state.spectral()
    src = model.pressure_rhs_hat(rho_h, om_h)
    p_h = g.forward(pressure_recover(state, params))
    res = g.spectral_l2_sq(g.laplacian(p_h) - src)
    ref = g.spectral_l2_sq(src)
    return float(np.sqrt(res / ref)) if ref > 0 else float(np.sqrt(res))

"""
Parametric Lyapunov-based tracking controller.

For a gain vector ``K`` with strictly positive entries the law drives the tracking error
``x`` to the origin, with the Lyapunov function

    V = K1 G41 (1 - cos x1) + (x2^2 + x3^2 + (x4 - xi)^2 + x5^2 + x6^2) / 2

where ``xi(x1, x3, t)`` is a virtual control for ``x4``. All partial derivatives of
``xi`` (including its explicit time dependence through the reference longitude) are
computed in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import (
    MU_EARTH,
    SINGULAR_TOL,
    SingularityError,
    _as_psi,
    _as_x,
    _coefficients,
    _h_column,
)

N_GAINS = 5


@dataclass(frozen=True)
class Gains:
    K: tuple[float, float, float, float, float]

    def __init__(self, K):
        vals = tuple(float(k) for k in np.asarray(K, dtype=float).ravel())
        if len(vals) != N_GAINS:
            raise ValueError(f"expected {N_GAINS} gains, got {len(vals)}")
        if not all(math.isfinite(k) and k > 0 for k in vals):
            raise ValueError(f"all gains must be finite and strictly positive, got {vals}")
        object.__setattr__(self, "K", vals)

    def as_array(self) -> np.ndarray:
        return np.array(self.K)


@dataclass(frozen=True)
class ControlOutput:
    u_r: float
    u_theta: float
    u_h: float
    xi: float
    xi_dot: float
    V: float
    gradVH: float

    @property
    def u(self) -> np.ndarray:
        return np.array([self.u_r, self.u_theta, self.u_h])


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _xi_parts(x, Lr, ref, K, mu):
    """xi and its partials w.r.t. x1, x3 and time (through the reference longitude)."""
    pr, eXr, eYr = ref[0], ref[1], ref[2]
    F12, F13, F33, F42, F43, G22, G41, zx, zy, a = _coefficients(x[1], x[2], Lr, pr, eXr, eYr, mu)
    n = math.sqrt(mu / pr**3)
    x1 = x[0]
    x3 = x[2]
    s1 = math.sin(x1)
    c1 = math.cos(x1)
    K1, K3 = K[0], K[2]

    num = K1 * G41 * F13 * s1 - F33 * x3 + K3 * G41 * x3
    xi = num / F12
    dF12 = 2.0 * n * a  # d/dx3 and d/dzeta_x of F12 coincide
    xi_x1 = K1 * G41 * F13 * c1 / F12
    num_x3 = K1 * G41 * n * s1 - n * zy * x3 - F33 + K3 * G41
    xi_x3 = (num_x3 - xi * dF12) / F12
    num_zx = 2.0 * n * (K1 * G41 * s1 - zy * x3)
    xi_zx = (num_zx - xi * dF12) / F12
    xi_zy = -F13 * x3 / F12
    # d zeta_x / dt = -Lr_dot zeta_y ; d zeta_y / dt = Lr_dot zeta_x
    Lr_dot = n * (1.0 + zx) ** 2
    xi_t = Lr_dot * (zx * xi_zy - zy * xi_zx)
    return xi, xi_x1, xi_x3, xi_t


@njit(cache=True, nogil=True)
def _lyapunov(x, Lr, ref, K, mu):
    xi = _xi_parts(x, Lr, ref, K, mu)[0]
    G41 = math.sqrt(ref[0] / mu)
    e4 = x[3] - xi
    return K[0] * G41 * (1.0 - math.cos(x[0])) + 0.5 * (
        x[1] * x[1] + x[2] * x[2] + e4 * e4 + x[4] * x[4] + x[5] * x[5]
    )


@njit(cache=True, nogil=True)
def _lyapunov_gradient(x, Lr, ref, K, mu, out):
    xi, xi_x1, xi_x3, xi_t = _xi_parts(x, Lr, ref, K, mu)
    G41 = math.sqrt(ref[0] / mu)
    e4 = x[3] - xi
    out[0] = K[0] * G41 * math.sin(x[0]) - e4 * xi_x1
    out[1] = x[1]
    out[2] = x[2] - e4 * xi_x3
    out[3] = e4
    out[4] = x[4]
    out[5] = x[5]


@njit(cache=True, nogil=True)
def _control(x, Lr, ref, K, mu, full_xi_dot, hcol):
    """Evaluate the control law; returns (ur, ut, uh, xi, xi_dot, V, gradVH).

    With ``full_xi_dot`` the radial channel cancels the total derivative of xi,
    including its normal-thrust contribution; otherwise only the part along the
    uh-free flow is cancelled, which makes dV/dt sign-definite.
    """
    pr, eXr, eYr, hXr, hYr = ref[0], ref[1], ref[2], ref[3], ref[4]
    F12, F13, F33, F42, F43, G22, G41, zx, zy, a = _coefficients(x[1], x[2], Lr, pr, eXr, eYr, mu)
    xi, xi_x1, xi_x3, xi_t = _xi_parts(x, Lr, ref, K, mu)
    K1, K2, K3, K4, K5 = K[0], K[1], K[2], K[3], K[4]
    s1 = math.sin(x[0])
    e4 = x[3] - xi

    _h_column(x, Lr, G22, hXr, hYr, hcol)
    dV1 = K1 * G41 * s1 - e4 * xi_x1
    gradVH = dV1 * hcol[0] + x[4] * hcol[4] + x[5] * hcol[5]
    uh = -K5 / G41 * gradVH

    x1_dot_drift = F12 * x[1] + F13 * x[2]
    x3_dot = -F33 * x[2] - F12 * x[3]
    xi_dot_drift = xi_x1 * x1_dot_drift + xi_x3 * x3_dot + xi_t
    xi_dot = xi_dot_drift + xi_x1 * hcol[0] * uh

    cancel = xi_dot if full_xi_dot else xi_dot_drift
    ur = -(F43 * x[2] - cancel) / G41 - K4 * e4
    ut = -(K1 * G41 * F12 * s1 + F42 * e4 + K2 * G41 * x[1]) / G22

    V = K1 * G41 * (1.0 - math.cos(x[0])) + 0.5 * (
        x[1] * x[1] + x[2] * x[2] + e4 * e4 + x[4] * x[4] + x[5] * x[5]
    )
    return ur, ut, uh, xi, xi_dot, V, gradVH


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _gain_array(K) -> np.ndarray:
    if isinstance(K, Gains):
        return K.as_array()
    return Gains(K).as_array()


def _prepare(x, psi_r, mu):
    x = _as_x(x)
    psi_r = _as_psi(psi_r)
    a = _coefficients(x[1], x[2], psi_r[0], psi_r[1], psi_r[2], psi_r[3], mu)[-1]
    if abs(a) < SINGULAR_TOL:
        raise SingularityError(f"F12 vanishes: x3 + 1 + zeta_X^r = {a:.3e}")
    return x, psi_r


def xi(x, psi_r, K, mu: float = MU_EARTH) -> float:
    """Virtual control for ``x4``."""
    x, psi_r = _prepare(x, psi_r, mu)
    return float(_xi_parts(x, psi_r[0], psi_r[1:], _gain_array(K), mu)[0])


def xi_dot(x, psi_r, K, u_h: float, mu: float = MU_EARTH) -> float:
    """Total time derivative of ``xi`` along the tracking dynamics with normal thrust ``u_h``.

    ``xi`` depends on ``x1``, ``x3`` and, through the reference longitude, on time; it
    does not depend on ``x2``, so the transverse thrust never enters.
    """
    x, psi_r = _prepare(x, psi_r, mu)
    Kv = _gain_array(K)
    ref = psi_r[1:]
    _, xi_x1, xi_x3, xi_t = _xi_parts(x, psi_r[0], ref, Kv, mu)
    F12, F13, F33, _, _, G22, _, _, _, _ = _coefficients(x[1], x[2], psi_r[0], ref[0], ref[1], ref[2], mu)
    hcol = np.empty(6)
    _h_column(x, psi_r[0], G22, ref[3], ref[4], hcol)
    x1_dot = F12 * x[1] + F13 * x[2] + hcol[0] * u_h
    x3_dot = -F33 * x[2] - F12 * x[3]
    return float(xi_x1 * x1_dot + xi_x3 * x3_dot + xi_t)


def lyapunov(x, psi_r, K, mu: float = MU_EARTH) -> float:
    x, psi_r = _prepare(x, psi_r, mu)
    return float(_lyapunov(x, psi_r[0], psi_r[1:], _gain_array(K), mu))


def lyapunov_gradient(x, psi_r, K, mu: float = MU_EARTH) -> np.ndarray:
    """Row vector dV/dx at fixed reference longitude."""
    x, psi_r = _prepare(x, psi_r, mu)
    out = np.empty(6)
    _lyapunov_gradient(x, psi_r[0], psi_r[1:], _gain_array(K), mu, out)
    return out


def control(x, psi_r, K, mu: float = MU_EARTH, full_xi_dot: bool = False) -> ControlOutput:
    """Evaluate the stabilizing law at error ``x`` relative to reference ``psi_r``.

    Raises ``ValueError`` for non-positive gains and :class:`SingularityError` when a
    coefficient denominator vanishes.
    """
    Kv = _gain_array(K)
    x, psi_r = _prepare(x, psi_r, mu)
    if abs(x[1] + 1.0) < SINGULAR_TOL:
        raise SingularityError("H is singular: x2 + 1 = 0")
    out = _control(x, psi_r[0], psi_r[1:], Kv, mu, full_xi_dot, np.empty(6))
    return ControlOutput(*(float(v) for v in out))

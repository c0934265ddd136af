"""
Equinoctial orbital mechanics.

Element vectors are ordered ``[L, p, eX, eY, hX, hY]`` (true longitude, semi-parameter,
eccentricity vector, inclination vector). The tracking error ``x`` is the six-vector
obtained from a chaser state and a reference state through the nonlinear change of
coordinates implemented in :func:`to_error_coords`.

Scalar kernels (prefixed ``_``) are compiled with numba and shared by the episode
simulator; the public functions validate inputs and raise on singular geometry.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np
from numba import njit

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6378.137  # km, equatorial

# denominators closer to zero than this are treated as singular
SINGULAR_TOL = 1e-12


class SingularityError(ArithmeticError):
    """A coefficient denominator vanished (rectilinear / degenerate geometry)."""


class DomainError(ValueError):
    """State outside the domain of a coordinate transformation."""


@dataclass(frozen=True)
class GravConstants:
    mu: float = MU_EARTH
    earth_radius: float = R_EARTH

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class EquinoctialState:
    """Six equinoctial elements; ``L`` in rad, ``p`` in km, the rest dimensionless."""

    L: float
    p: float
    eX: float = 0.0
    eY: float = 0.0
    hX: float = 0.0
    hY: float = 0.0

    def __post_init__(self):
        vals = astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite equinoctial state {vals}")
        if not self.p > 0:
            raise DomainError(f"semi-parameter must be positive, got {self.p}")
        if self.eX**2 + self.eY**2 >= 1.0:
            raise DomainError("only elliptic orbits are supported (eX^2 + eY^2 < 1)")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, arr) -> EquinoctialState:
        return cls(*(float(v) for v in arr))

    @property
    def eccentricity(self) -> float:
        return math.hypot(self.eX, self.eY)


@dataclass(frozen=True)
class KeplerianElements:
    """Classical elements. Angles in radians, ``a`` in km."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    nu: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"semi-major axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise DomainError(f"eccentricity must lie in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= math.pi:
            raise DomainError(f"inclination must lie in [0, pi], got {self.i}")


@dataclass(frozen=True)
class CartesianState:
    r: np.ndarray  # km
    v: np.ndarray  # km/s


@dataclass(frozen=True)
class CoefficientSet:
    F12: float
    F13: float
    F33: float
    F42: float
    F43: float
    G22: float
    G41: float
    zeta_x: float
    zeta_y: float


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _ref_zeta(Lr, eXr, eYr):
    c = math.cos(Lr)
    s = math.sin(Lr)
    return c * eXr + s * eYr, s * eXr - c * eYr


@njit(cache=True, nogil=True)
def _ref_longitude_rate(Lr, pr, eXr, eYr, mu):
    w = 1.0 + eXr * math.cos(Lr) + eYr * math.sin(Lr)
    return math.sqrt(mu / pr**3) * w * w


@njit(cache=True, nogil=True)
def _coefficients(x2, x3, Lr, pr, eXr, eYr, mu):
    """Return (F12, F13, F33, F42, F43, G22, G41, zeta_x, zeta_y) and the raw denominator."""
    zx, zy = _ref_zeta(Lr, eXr, eYr)
    n = math.sqrt(mu / pr**3)
    a = x3 + 1.0 + zx
    F12 = n * a * a
    F13 = n * (x3 + 2.0 + 2.0 * zx)
    F42 = n * (x2 + 2.0) * a * a * a
    F33 = F13 * zy
    F43 = F13 * zx
    G41 = math.sqrt(pr / mu)
    if abs(a) < 1e-12:
        G22 = math.inf
    else:
        G22 = G41 / a
    return F12, F13, F33, F42, F43, G22, G41, zx, zy, a


@njit(cache=True, nogil=True)
def _h_column(x, Lr, G22, hXr, hYr, out):
    """Fill ``out`` with the normal-acceleration column H(x, psi_r)."""
    L = x[0] + Lr
    hx = x[4] + hXr
    hy = x[5] + hYr
    cL = math.cos(L)
    sL = math.sin(L)
    scale = G22 / (x[1] + 1.0)
    half_s2 = 0.5 * (1.0 + hx * hx + hy * hy)
    out[0] = scale * (hx * sL - hy * cL)
    out[1] = 0.0
    out[2] = 0.0
    out[3] = 0.0
    out[4] = scale * half_s2 * cL
    out[5] = scale * half_s2 * sL


@njit(cache=True, nogil=True)
def _error_rate(x, Lr, ref, ur, ut, uh, mu, out):
    """Transformed tracking-error dynamics; ``ref = [pr, eXr, eYr, hXr, hYr]``."""
    pr, eXr, eYr, hXr, hYr = ref[0], ref[1], ref[2], ref[3], ref[4]
    F12, F13, F33, F42, F43, G22, G41, zx, zy, a = _coefficients(
        x[1], x[2], Lr, pr, eXr, eYr, mu
    )
    _h_column(x, Lr, G22, hXr, hYr, out)
    h1 = out[0]
    h5 = out[4]
    h6 = out[5]
    out[0] = F12 * x[1] + F13 * x[2] + h1 * uh
    out[1] = G22 * ut
    out[2] = -F33 * x[2] - F12 * x[3]
    out[3] = F42 * x[1] + (F12 + F43) * x[2] + G41 * ur
    out[4] = h5 * uh
    out[5] = h6 * uh


@njit(cache=True, nogil=True)
def _to_error(psi, psi_r, out):
    pr = psi_r[1]
    p = psi[1]
    zx, zy = _ref_zeta(psi_r[0], psi_r[2], psi_r[3])
    L = psi[0]
    c = math.cos(L)
    s = math.sin(L)
    rx = c * psi[2] + s * psi[3]  # R(L) [eX, -eY], first row
    ry = s * psi[2] - c * psi[3]
    rho = pr / p
    out[0] = psi[0] - psi_r[0]
    out[1] = math.sqrt(p / pr) - 1.0
    out[2] = rho * rx - (p - pr) / p - zx
    out[3] = math.sqrt(rho) * ry - zy
    out[4] = psi[4] - psi_r[4]
    out[5] = psi[5] - psi_r[5]


@njit(cache=True, nogil=True)
def _from_error(x, psi_r, out):
    pr = psi_r[1]
    zx, zy = _ref_zeta(psi_r[0], psi_r[2], psi_r[3])
    L = x[0] + psi_r[0]
    q = x[1] + 1.0
    p = pr * q * q
    rho = 1.0 / (q * q)
    rx = (x[2] + zx + 1.0 - rho) / rho
    ry = (x[3] + zy) / math.sqrt(rho)
    c = math.cos(L)
    s = math.sin(L)
    # [eX, -eY] = R(-L) [rx, ry]
    out[0] = L
    out[1] = p
    out[2] = c * rx + s * ry
    out[3] = -(-s * rx + c * ry)
    out[4] = x[4] + psi_r[4]
    out[5] = x[5] + psi_r[5]


@njit(cache=True, nogil=True)
def _position(psi, mu):
    L, p, f, g, h, k = psi[0], psi[1], psi[2], psi[3], psi[4], psi[5]
    cL = math.cos(L)
    sL = math.sin(L)
    w = 1.0 + f * cL + g * sL
    r = p / w
    s2 = 1.0 + h * h + k * k
    al2 = h * h - k * k
    pos = np.empty(3)
    pos[0] = r / s2 * (cL + al2 * cL + 2.0 * h * k * sL)
    pos[1] = r / s2 * (sL - al2 * sL + 2.0 * h * k * cL)
    pos[2] = 2.0 * r / s2 * (h * sL - k * cL)
    return pos


@njit(cache=True, nogil=True)
def _velocity(psi, mu):
    L, p, f, g, h, k = psi[0], psi[1], psi[2], psi[3], psi[4], psi[5]
    cL = math.cos(L)
    sL = math.sin(L)
    s2 = 1.0 + h * h + k * k
    al2 = h * h - k * k
    sc = -math.sqrt(mu / p) / s2
    vel = np.empty(3)
    vel[0] = sc * (sL + al2 * sL - 2.0 * h * k * cL + g - 2.0 * f * h * k + al2 * g)
    vel[1] = sc * (-cL + al2 * cL + 2.0 * h * k * sL - f + 2.0 * g * h * k + al2 * f)
    vel[2] = -2.0 * sc * (h * cL + k * sL + f * h + g * k)
    return vel


@njit(cache=True, nogil=True)
def _distance(x, psi_r, mu, work):
    _from_error(x, psi_r, work)
    d = _position(work, mu) - _position(psi_r, mu)
    return math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _as_psi(psi) -> np.ndarray:
    if isinstance(psi, EquinoctialState):
        return psi.as_array()
    arr = np.asarray(psi, dtype=float)
    if arr.shape != (6,):
        raise ValueError(f"expected 6 equinoctial elements, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite equinoctial state {arr}")
    return arr


def _as_x(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (6,):
        raise ValueError(f"expected a 6-vector error state, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite error state {arr}")
    return arr


def unforced_rate(psi, mu: float = MU_EARTH) -> np.ndarray:
    """Drift vector field f(psi): only the true longitude moves."""
    psi = _as_psi(psi)
    out = np.zeros(6)
    out[0] = _ref_longitude_rate(psi[0], psi[1], psi[2], psi[3], mu)
    return out


def control_influence(psi, mu: float = MU_EARTH) -> np.ndarray:
    """Input matrix g(psi) mapping ``[u_r, u_theta, u_h]`` (km/s^2) to element rates."""
    L, p, eX, eY, hX, hY = _as_psi(psi)
    cL, sL = math.cos(L), math.sin(L)
    zeta = eX * cL + eY * sL
    w = 1.0 + zeta
    if abs(w) < SINGULAR_TOL:
        raise SingularityError("1 + zeta_X = 0: rectilinear geometry")
    qx = eX + (2.0 + zeta) * cL
    qy = eY + (2.0 + zeta) * sL
    eta = hX * sL - hY * cL
    half_s2 = 0.5 * (1.0 + hX * hX + hY * hY)
    g = np.array(
        [
            [0.0, 0.0, eta],
            [0.0, 2.0 * p, 0.0],
            [w * sL, qx, -eta * eY],
            [-w * cL, qy, eta * eX],
            [0.0, 0.0, half_s2 * cL],
            [0.0, 0.0, half_s2 * sL],
        ]
    )
    return math.sqrt(p) / (math.sqrt(mu) * w) * g


def element_rate(psi, u, mu: float = MU_EARTH) -> np.ndarray:
    """Full Gauss variational equations ``f(psi) + g(psi) u``."""
    return unforced_rate(psi, mu) + control_influence(psi, mu) @ np.asarray(u, dtype=float)


def _eccentric_from_true(nu, e):
    return 2.0 * math.atan2(math.sqrt(1.0 - e) * math.sin(nu / 2), math.sqrt(1.0 + e) * math.cos(nu / 2))


def _solve_kepler(M, e, tol=1e-15):
    # M in [-pi, pi); starting from pi-side guess is robust for high e
    E = M + e * math.sin(M) if e < 0.8 else math.copysign(math.pi, M)
    for _ in range(60):
        dE = (E - e * math.sin(E) - M) / (1.0 - e * math.cos(E))
        E -= dE
        if abs(dE) < tol:
            break
    return E


def propagate_reference(psi_r0, t: float, mu: float = MU_EARTH) -> EquinoctialState:
    """Advance an unforced orbit by ``t`` seconds.

    Solved in closed form through Kepler's equation; the longitude is kept unwrapped so
    that it grows continuously with time.
    """
    psi = _as_psi(psi_r0)
    if t == 0:
        return EquinoctialState.from_array(psi)
    L0, p, eX, eY = psi[0], psi[1], psi[2], psi[3]
    e = math.hypot(eX, eY)
    varpi = math.atan2(eY, eX) if e > 0 else 0.0
    a = p / (1.0 - e * e)
    n_mean = math.sqrt(mu / a**3)

    nu0 = L0 - varpi
    rev0 = math.floor((nu0 + math.pi) / (2.0 * math.pi))
    E0 = _eccentric_from_true(nu0 - 2.0 * math.pi * rev0, e)
    M = E0 - e * math.sin(E0) + 2.0 * math.pi * rev0 + n_mean * t

    turns = math.floor((M + math.pi) / (2.0 * math.pi))
    Mw = M - 2.0 * math.pi * turns
    E = _solve_kepler(Mw, e)
    nu = 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(E / 2), math.sqrt(1.0 - e) * math.cos(E / 2))
    L = nu + varpi + 2.0 * math.pi * turns
    out = psi.copy()
    out[0] = L
    return EquinoctialState.from_array(out)


def coefficients(x, psi_r, mu: float = MU_EARTH) -> CoefficientSet:
    """Scalar coefficients of the transformed tracking dynamics at (x, psi_r)."""
    x = _as_x(x)
    psi_r = _as_psi(psi_r)
    F12, F13, F33, F42, F43, G22, G41, zx, zy, a = _coefficients(
        x[1], x[2], psi_r[0], psi_r[1], psi_r[2], psi_r[3], mu
    )
    if abs(a) < SINGULAR_TOL:
        raise SingularityError(f"x3 + 1 + zeta_X^r = {a:.3e}: G22 is singular")
    return CoefficientSet(F12, F13, F33, F42, F43, G22, G41, zx, zy)


def to_error_coords(psi, psi_r) -> np.ndarray:
    """Map a chaser state and a reference state to the tracking error ``x``."""
    psi = _as_psi(psi)
    psi_r = _as_psi(psi_r)
    if not psi[1] > 0 or not psi_r[1] > 0:
        raise DomainError("semi-parameters must be positive")
    out = np.empty(6)
    _to_error(psi, psi_r, out)
    return out


def from_error_coords(x, psi_r) -> EquinoctialState:
    """Closed-form inverse of :func:`to_error_coords`."""
    x = _as_x(x)
    psi_r = _as_psi(psi_r)
    if not x[1] > -1.0:
        raise DomainError(f"x2 = {x[1]} <= -1 has no preimage")
    out = np.empty(6)
    _from_error(x, psi_r, out)
    return EquinoctialState.from_array(out)


def error_dynamics(x, psi_r, u, mu: float = MU_EARTH) -> np.ndarray:
    """Time derivative of the tracking error under acceleration ``u = [u_r, u_theta, u_h]``."""
    x = _as_x(x)
    psi_r = _as_psi(psi_r)
    ur, ut, uh = (float(v) for v in u)
    coefficients(x, psi_r, mu)  # singularity check
    if abs(x[1] + 1.0) < SINGULAR_TOL:
        raise SingularityError("x2 + 1 = 0")
    out = np.empty(6)
    _error_rate(x, psi_r[0], psi_r[1:], ur, ut, uh, mu, out)
    return out


def keplerian_to_equinoctial(kep: KeplerianElements) -> EquinoctialState:
    if abs(kep.i - math.pi) < SINGULAR_TOL:
        raise SingularityError("retrograde equatorial orbit: tan(i/2) is unbounded")
    lon_peri = kep.argp + kep.raan
    t = math.tan(kep.i / 2)
    return EquinoctialState(
        L=kep.raan + kep.argp + kep.nu,
        p=kep.a * (1.0 - kep.e**2),
        eX=kep.e * math.cos(lon_peri),
        eY=kep.e * math.sin(lon_peri),
        hX=t * math.cos(kep.raan),
        hY=t * math.sin(kep.raan),
    )


def equinoctial_to_keplerian(psi) -> KeplerianElements:
    """Inverse of :func:`keplerian_to_equinoctial`; angles wrapped to [0, 2pi)."""
    L, p, eX, eY, hX, hY = _as_psi(psi)
    e = math.hypot(eX, eY)
    tan_half = math.hypot(hX, hY)
    raan = math.atan2(hY, hX) % (2 * math.pi)
    lon_peri = math.atan2(eY, eX)
    argp = (lon_peri - raan) % (2 * math.pi)
    nu = (L - lon_peri) % (2 * math.pi)
    return KeplerianElements(
        a=p / (1.0 - e * e), e=e, i=2.0 * math.atan(tan_half), raan=raan, argp=argp, nu=nu
    )


def equinoctial_to_cartesian(psi, mu: float = MU_EARTH) -> CartesianState:
    psi = _as_psi(psi)
    return CartesianState(r=_position(psi, mu), v=_velocity(psi, mu))


def output_distance(x, psi_r, mu: float = MU_EARTH) -> float:
    """Inertial distance (km) between the chaser encoded by ``x`` and the reference."""
    x = _as_x(x)
    psi_r = _as_psi(psi_r)
    if not x[1] > -1.0:
        raise DomainError(f"x2 = {x[1]} <= -1 cannot be inverted")
    return float(_distance(x, psi_r, mu, np.empty(6)))

"""Closed-form elastic and inelastic scattering predictions.

Elastic side: retarded spin susceptibilities chi_xx, chi_xy in several
approximation families (bare two-level, ladder/RPA, Callan-Symanzik log
improvement, the combined form, and the single-bath control model), the
photon S-matrix built from them, and the renormalized gap Delta_R.

Inelastic side: tree-level 1 -> 3 photon conversion densities for the four
outgoing channel combinations, their symmetrized-amplitude construction,
and adaptive totals over the three-photon phase space.

Energies are passed explicitly; defaults put Delta = 1 and omega_c = 10.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import AccuracyError, DomainError, ParameterError, PoleError

__all__ = [
    "FAMILIES",
    "delta_r_frustrated",
    "delta_r_unfrustrated",
    "rg_flow",
    "susceptibility",
    "elastic_smatrix",
    "elastic_probabilities",
    "InelasticParams",
    "inelastic_density",
    "inelastic_amplitude_symmetrized",
    "total_inelastic",
    "PROCESSES",
]

FAMILIES = ("free", "rpa", "cs", "full", "unfrustrated")
PROCESSES = ("xxx", "yyy", "xxy", "xyy")

_POLE_REL = 1e-9


def delta_r_frustrated(alpha: float, omega_c: float, delta: float = 1.0) -> float:
    """Renormalized gap: root of x (1 + 2 alpha ln(omega_c / x)) = delta.

    Plain bisection on (0, delta]; the left bracket has a negative residual
    because x ln(1/x) -> 0.  alpha = 0 returns delta exactly.
    """
    if delta <= 0 or omega_c <= delta:
        raise DomainError(f"need 0 < delta < omega_c, got delta={delta}, omega_c={omega_c}")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        return delta

    def residual(x):
        return x * (1.0 + 2.0 * alpha * math.log(omega_c / x)) - delta

    lo, hi = 1e-14 * delta, delta
    if residual(lo) >= 0 or residual(hi) < 0:
        raise DomainError("bisection bracket lost; parameters outside validity range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def delta_r_unfrustrated(alpha_t: float, omega_c: float, delta: float = 1.0) -> float:
    """Renormalized gap of the single-bath control model.

    delta * (delta / omega_c) ** (alpha_t / (1 - alpha_t)); the power law
    only makes sense below the alpha_t = 1 localization point.
    """
    if delta <= 0 or omega_c <= delta:
        raise DomainError(f"need 0 < delta < omega_c, got delta={delta}, omega_c={omega_c}")
    if not 0.0 <= alpha_t < 1.0:
        raise DomainError(f"alpha_t must lie in [0, 1), got {alpha_t}")
    return delta * (delta / omega_c) ** (alpha_t / (1.0 - alpha_t))


def rg_flow(alpha0: float, h0: float, l):
    """Flow of (alpha, h) with scale parameter l >= 0.

    alpha(l) = alpha0 / (1 + 2 alpha0 l)
    h(l) = exp(l) h0 / (1 + 2 alpha0 l)

    Solves dalpha/dl = -2 alpha^2 and dh/dl = h (1 - 2 alpha) with the
    initial condition at l = 0.  l may be an array.
    """
    if alpha0 < 0:
        raise ParameterError(f"alpha0 must be >= 0, got {alpha0}")
    l = np.asarray(l, dtype=float)
    if np.any(l < 0):
        raise ParameterError("flow parameter l must be >= 0")
    denom = 1.0 + 2.0 * alpha0 * l
    return alpha0 / denom, np.exp(l) * h0 / denom


def _check_omega(omega, omega_c):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0) or np.any(omega > omega_c):
        raise DomainError("omega must lie in (0, omega_c]")
    return omega


def susceptibility(family: str, omega, alpha: float, delta: float = 1.0,
                   omega_c: float = 10.0):
    """Retarded susceptibilities (chi_xx, chi_xy) on the real axis.

    Families:
      free          bare two-level system, real poles at omega = delta
      rpa           ladder resummation of the bath vertex
      cs            log-improved (running gap), still undamped
      full          ladder + log improvement combined
      unfrustrated  single-bath control model (chi_xy = 0; alpha means
                    the total alpha_t)

    chi_yy = chi_xx and chi_yx = -chi_xy throughout, so only the two
    independent components are returned.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; choose from {FAMILIES}")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    w = _check_omega(omega, omega_c)
    d2 = delta * delta

    if family == "free":
        den = w * w - d2
        _guard_poles(den, d2)
        return 0.5 * delta / den + 0j, 0.5j * w / den

    if family == "rpa":
        pa = math.pi * alpha
        den = (1.0 + pa * pa) * w * w + 2j * pa * delta * w - d2
        _guard_poles(den, d2)
        return 0.5 * (delta - 1j * pa * w) / den, 0.5j * w / den

    log = np.log(omega_c / w)
    run = 1.0 + 2.0 * alpha * log

    if family == "cs":
        den = (w * run) ** 2 - d2
        _guard_poles(den, d2)
        return 0.5 * delta / den + 0j, 0.5j * w * run / den

    if family == "full":
        pa = math.pi * alpha
        den = d2 - w * w * (pa * pa + run * run) - 2j * pa * delta * w
        _guard_poles(den, d2)
        return 0.5 * (-delta + 1j * pa * w) / den, -0.5j * w * run / den

    # unfrustrated: alpha plays the role of the total coupling alpha_t
    pa = math.pi * alpha
    pw = (w / omega_c) ** alpha
    den = d2 * pw * pw - w * w - 1j * pa * delta * w * pw
    _guard_poles(den, d2)
    chi_xx = -0.5 * delta * pw / den
    return chi_xx, np.zeros_like(chi_xx) * 1j


def _guard_poles(den, scale):
    if np.any(np.abs(den) < _POLE_REL * scale):
        raise PoleError("susceptibility evaluated on top of a pole")


def elastic_smatrix(family: str, omega, alpha: float, delta: float = 1.0,
                    omega_c: float = 10.0):
    """Single-photon S-matrix elements (t_xx, r_xx, t_yx).

    Frustrated families: r_ab = -2j pi alpha omega chi_ab with
    chi_yx = -chi_xy, and t_xx = 1 + r_xx, t_yx = r_yx (no forward delta
    in the cross channel).  Unfrustrated: the single extracted amplitude
    fills all three slots as (t11, r11, t21) with r11 = t21.
    """
    w = np.asarray(omega, dtype=float)
    chi_xx, chi_xy = susceptibility(family, w, alpha, delta, omega_c)
    if family == "unfrustrated":
        r11 = -1j * math.pi * alpha * w * chi_xx
        return 1.0 + r11, r11, r11
    r_xx = -2j * math.pi * alpha * w * chi_xx
    r_yx = +2j * math.pi * alpha * w * chi_xy
    return 1.0 + r_xx, r_xx, r_yx


def elastic_probabilities(family: str, omega, alpha: float, delta: float = 1.0,
                          omega_c: float = 10.0) -> dict:
    """|t_xx|^2, |r_xx|^2, |t_yx|^2 and the elastic deficit gamma.

    gamma = 1 - |t_xx|^2 - |r_xx|^2 - 2 |t_yx|^2 counts the probability
    leaving the one-photon sector (zero through second order in alpha for
    the frustrated families, by construction of the S-matrix).
    """
    t_xx, r_xx, t_yx = elastic_smatrix(family, omega, alpha, delta, omega_c)
    p_t = np.abs(t_xx) ** 2
    p_r = np.abs(r_xx) ** 2
    p_c = np.abs(t_yx) ** 2
    return {
        "t_xx": p_t,
        "r_xx": p_r,
        "t_yx": p_c,
        "gamma": 1.0 - p_t - p_r - 2.0 * p_c,
    }


@dataclass(frozen=True)
class InelasticParams:
    """Couplings and regularization for the 1 -> 3 conversion densities.

    With renormalized=True the gap entering the amplitudes is shifted to
    the dressed value (with alpha and omega_c fixing it), and eta > 0 moves
    the propagator poles off the real axis: Delta -> Delta_R - i eta / 2.
    eta=None picks the default width 2 pi alpha Delta_R.
    """

    alpha: float
    delta: float = 1.0
    omega_c: float = 10.0
    eta: float | None = None
    renormalized: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.delta <= 0 or self.omega_c <= self.delta:
            raise DomainError("need 0 < delta < omega_c")
        if self.eta is not None and self.eta < 0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")

    @property
    def delta_r(self) -> float:
        return delta_r_frustrated(self.alpha, self.omega_c, self.delta)

    @property
    def eta_value(self) -> float:
        if self.eta is not None:
            return self.eta
        return 2.0 * math.pi * self.alpha * self.delta_r

    @property
    def effective_delta(self) -> complex:
        base = self.delta_r if self.renormalized else self.delta
        return base - 0.5j * self.eta_value


def _check_onshell(process, w1, w2, w3, w, params):
    if process not in PROCESSES:
        raise ParameterError(f"unknown process {process!r}; choose from {PROCESSES}")
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    w3 = np.asarray(w3, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w1 <= 0) or np.any(w2 <= 0) or np.any(w3 <= 0):
        raise DomainError("all outgoing energies must be positive")
    if np.any(np.abs(w1 + w2 + w3 - w) > 1e-12 * np.maximum(w, 1.0)):
        raise ParameterError("outgoing energies must sum to the incoming energy")
    d = params.effective_delta
    if d.imag == 0.0:
        pole = d.real
        for arr in (w1, w2, w3, w):
            if np.any(np.abs(arr - pole) < 1e-6):
                raise PoleError(
                    "density evaluated within 1e-6 of the undamped pole; "
                    "set eta > 0"
                )
    return w1, w2, w3, w, d


def inelastic_density(process: str, w1, w2, w3, w, params: InelasticParams):
    """Differential 1 -> 3 conversion probability density.

    Closed forms: with N_xxx = 3 D^4 - D^2 (w^2 - w1 w2 - w2 w3 - w1 w3)
    + w w1 w2 w3 and the product of pole factors
    P = (w^2 - D^2)(w1^2 - D^2)(w2^2 - D^2)(w3^2 - D^2),

      density_xxx = (alpha^4 omega_c^4 / 16) w w1 w2 w3 |D|^2 |N_xxx / P|^2
      density_yyy = density_xxx * w^2 / |D|^2
      density_xxy = density_xxx * w3^2 / |D|^2   (w3 is the odd photon)
      density_xyy uses its own numerator (w1 is the odd photon):
      N_xyy = D^4 + D^2 (w^2 - w (w2 + w3) - w2^2 - 3 w2 w3 - w3^2)
              + w2 w3 (w2 + w3)^2 - w w1 (w2^2 - w2 w3 + w3^2)

    All four equal |symmetrized amplitude combination|^2; the tests rebuild
    them from inelastic_amplitude_symmetrized.
    """
    w1, w2, w3, w, d = _check_onshell(process, w1, w2, w3, w, params)
    pref = (params.alpha**4) * (params.omega_c**4) / 16.0 * w * w1 * w2 * w3
    d2 = d * d
    poles = (w * w - d2) * (w1 * w1 - d2) * (w2 * w2 - d2) * (w3 * w3 - d2)
    if process == "xyy":
        num = (
            d2 * d2
            + d2 * (w * w - w * (w2 + w3) - w2 * w2 - 3.0 * w2 * w3 - w3 * w3)
            + w2 * w3 * (w2 + w3) ** 2
            - w * w1 * (w2 * w2 - w2 * w3 + w3 * w3)
        )
        return pref * np.abs(d * num / poles) ** 2
    num = 3.0 * d2 * d2 - d2 * (w * w - w1 * w2 - w2 * w3 - w1 * w3) + w * w1 * w2 * w3
    base = np.abs(num / poles) ** 2
    if process == "xxx":
        return pref * abs(d) ** 2 * base
    if process == "yyy":
        return pref * w * w * base
    return pref * w3 * w3 * base  # xxy


def inelastic_amplitude_symmetrized(process: str, w1, w2, w3, w,
                                    params: InelasticParams):
    """Density rebuilt term by term from the bare 1 -> 3 amplitude.

    The unsymmetrized amplitude is

      f(a1, a2, a3; a) = (alpha^2 omega_c^2 / 4) sqrt(w w1 w2 w3)
                         (2 D - a1 - a3) / ((a - D)(a1 - D)(a3 - D)(a2 + D))

    and each channel combination sums six argument orders / sign flips
    with channel-dependent signs, divided by four.  Slow but independent
    of the closed forms; used as their oracle.
    """
    w1, w2, w3, w, d = _check_onshell(process, w1, w2, w3, w, params)

    def f(a1, a2, a3, a):
        return (2.0 * d - a1 - a3) / ((a - d) * (a1 - d) * (a3 - d) * (a2 + d))

    terms = np.array([
        f(w1, w3, w2, w),
        f(w1, w2, w3, w),
        f(w2, w1, w3, w),
        f(-w2, -w1, -w3, -w),
        f(-w1, -w2, -w3, -w),
        f(-w1, -w3, -w2, -w),
    ])
    signs = {
        "xxx": (+1, +1, +1, +1, +1, +1),
        "yyy": (-1, -1, -1, +1, +1, +1),
        "xyy": (-1, -1, +1, +1, -1, -1),
        "xxy": (-1, +1, +1, -1, -1, +1),
    }[process]
    combo = sum(s * t for s, t in zip(signs, terms)) / 4.0
    pref = (params.alpha**2) * (params.omega_c**2) / 4.0
    return pref**2 * w * w1 * w2 * w3 * np.abs(combo) ** 2


def total_inelastic(process: str, omega: float, params: InelasticParams,
                    omega_min: float | None = None, rel_tol: float = 1e-4) -> float:
    """Total 1 -> 3 conversion probability into one outgoing channel.

    Integrates the density over the simplex w1, w2 >= omega_min,
    w1 + w2 <= omega - omega_min and divides by the identical-particle
    symmetry factor (6 for xxx/yyy, 2 for xxy/xyy).  Adaptive quadrature
    at relative tolerance rel_tol; failure to reach it raises
    AccuracyError carrying the best estimate.
    """
    if process not in PROCESSES:
        raise ParameterError(f"unknown process {process!r}; choose from {PROCESSES}")
    if params.eta_value <= 0:
        raise ParameterError("total_inelastic needs eta > 0 to tame the poles")
    if omega_min is None:
        omega_min = 1e-3 * params.delta
    if omega_min <= 0:
        raise ParameterError(f"omega_min must be > 0, got {omega_min}")
    if omega <= 3.0 * omega_min:
        raise DomainError(
            f"no three-photon phase space: omega = {omega} <= 3 omega_min"
        )
    if omega > params.omega_c:
        raise DomainError("omega must not exceed omega_c")
    sym = 6.0 if process in ("xxx", "yyy") else 2.0

    def integrand(y, x):
        return inelastic_density(process, x, y, omega - x - y, omega, params)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.dblquad(
                integrand,
                omega_min,
                omega - 2.0 * omega_min,
                omega_min,
                lambda x: omega - omega_min - x,
                epsabs=1e-14,
                epsrel=rel_tol,
            )
        except integrate.IntegrationWarning as exc:
            raise AccuracyError(
                f"phase-space quadrature did not converge: {exc}", estimate=None
            ) from exc
    if err > 10.0 * rel_tol * max(abs(val), 1e-30) and err > 1e-12:
        raise AccuracyError(
            f"phase-space quadrature error {err:.2e} exceeds tolerance",
            estimate=val / sym,
        )
    return val / sym

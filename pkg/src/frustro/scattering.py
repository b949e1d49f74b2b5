"""One wavepacket scattering experiment, end to end.

Pipeline: ground state (two-site DMRG) -> add one photon as a chain-site
superposition -> Trotter evolution to t_inf -> read off elastic amplitudes
and photon numbers.  The packet always enters on the first chain
internally; `species="y"` relabels the outputs, which is exact because the
Hamiltonian treats the two chains symmetrically.  Amplitude fields are
therefore named from the incoming chain's point of view: t_xx is
same-species transmission, r_xx same-species reflection, t_yx cross
transmission (the cross reflection equals t_yx by construction, since the
second chain is reached only through the scatterer).

Timing: the packet needs |x0|/omega_c to reach the scatterer and the
excited spin needs several lifetimes to decay, but everything must stay
short of the time when outgoing photons pile up at the far end of the
finite chains.  t_inf is the decay-based target capped by that echo
budget; a stability flag (re-extraction at 1.1 t_inf) measures what the
compromise cost.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytics
from .bath import (
    ModeTransform,
    SpectralDensity,
    chain_coefficients_stieltjes,
    eigen_transform,
    gaussian_profile,
    mode_transform,
    wavepacket_chain_weights,
)
from .errors import ParameterError, ResolutionError, TruncationError
from .lattice import LatticeModel, boson_ops, build_model, to_gate_layers, to_mpo
from .mps import (
    GroundStateResult,
    MatrixProductState,
    apply_operator_train,
    dmrg,
    evolve,
    transition_vector,
)

__all__ = [
    "WavepacketSpec",
    "ScatterConfig",
    "ScatteringRecord",
    "build_setup",
    "ground_state",
    "elastic_amplitudes",
    "photon_numbers",
    "gamma_from_elastic",
    "run_scattering",
    "save_record",
    "load_record",
    "record_csv",
]

_MASK_RELATIVE = 0.05
_BOUNDARY_FRACTION = 0.1
_BOUNDARY_LIMIT = 1e-3
_FOCK_LIMIT = 1e-3


@dataclass(frozen=True)
class WavepacketSpec:
    """Incoming Gaussian packet c(k) = N exp(-(k-k0)^2/2s^2 - i k x0).

    x0 < 0 places the packet |x0| (in 1/omega_c travel units) away from
    the scatterer, moving toward it.
    """

    species: str
    k0: float
    sigma_k: float
    x0: float

    def __post_init__(self):
        if self.species not in ("x", "y"):
            raise ParameterError(f"species must be x or y, got {self.species}")
        if not 0.0 < self.k0 < 1.0:
            raise ParameterError(f"k0 must lie in (0, 1), got {self.k0}")
        if self.sigma_k <= 0:
            raise ParameterError(f"sigma_k must be > 0, got {self.sigma_k}")
        if self.x0 >= 0:
            raise ParameterError(f"x0 must be < 0 (incoming), got {self.x0}")

    @property
    def sigma_sites(self) -> float:
        """Packet width in chain sites."""
        return math.sqrt(self.k0 * (1.0 - self.k0)) / (2.0 * self.sigma_k)

    @property
    def center_site(self) -> float:
        """Initial packet center in chain sites, measured from the head."""
        return abs(self.x0) * math.sqrt(self.k0 * (1.0 - self.k0))

    def velocity(self, omega_c: float) -> float:
        """Packet speed in chain sites per unit time."""
        return omega_c * math.sqrt(self.k0 * (1.0 - self.k0))


@dataclass(frozen=True)
class ScatterConfig:
    """Everything one run needs; alpha means the total coupling for the
    parallel variant (each chain then carries alpha/2)."""

    alpha: float
    k0: float
    sigma_k: float
    species: str = "x"
    variant: str = "frustrated"
    delta: float = 1.0
    omega_c: float = 10.0
    length: int = 150
    boson_dim: int = 4
    chi: int = 30
    dt: float = 0.01
    x0: float | None = None
    t_inf: float | None = None
    sweeps: int = 20
    gs_tol: float = 1e-9
    eps: float = 1e-10
    max_discard: float = 0.05
    capture_tol: float = 1e-3

    def __post_init__(self):
        if self.variant not in ("frustrated", "parallel"):
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.species not in ("x", "y"):
            raise ParameterError(f"species must be x or y, got {self.species}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.variant == "parallel" and self.alpha >= 1.0:
            raise ParameterError("parallel variant needs alpha < 1")
        if not 0.0 < self.k0 < 1.0:
            raise ParameterError(f"k0 must lie in (0, 1), got {self.k0}")
        if self.sigma_k <= 0:
            raise ParameterError(f"sigma_k must be > 0, got {self.sigma_k}")
        for name in ("delta", "omega_c", "dt"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")
        if self.length < 8:
            raise ParameterError("length must be at least 8")
        if self.boson_dim < 2 or self.chi < 2:
            raise ParameterError("boson_dim and chi must be at least 2")
        if self.x0 is not None and self.x0 >= 0:
            raise ParameterError(f"x0 must be < 0, got {self.x0}")
        if self.t_inf is not None and self.t_inf <= 0:
            raise ParameterError(f"t_inf must be > 0, got {self.t_inf}")
        if not 0.0 < self.capture_tol <= 0.05:
            raise ParameterError(
                f"capture_tol must lie in (0, 0.05], got {self.capture_tol}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScatterConfig":
        return cls(**data)


@dataclass
class ScatteringRecord:
    """Everything one run produced, JSON round-trippable.

    Per-k arrays cover the amplitude-resolved band only (|c_k| above
    0.05 max).  For species "y" the amplitude names keep their structure
    (same-species transmission and reflection, cross transmission) while
    the photon-number fields follow the physical chains.
    """

    species: str
    variant: str
    alpha: float
    delta: float
    omega_c: float
    length: int
    boson_dim: int
    chi: int
    dt: float
    k0: float
    sigma_k: float
    x0: float
    t_inf: float
    gs_energy: float
    eta: float
    capture: float
    k: np.ndarray
    c_abs2: np.ndarray
    t_xx: np.ndarray
    r_xx: np.ndarray
    t_yx: np.ndarray
    gamma_k: np.ndarray
    p_transmit: float
    p_reflect: float
    p_cross: float
    gamma_total: float
    gamma_counts: float
    n_elastic_x: float
    n_elastic_y: float
    n_inelastic_x: float
    n_inelastic_y: float
    discarded: float
    norm_drift: float
    max_bond: int
    n_steps: int
    flags: dict = field(default_factory=dict)

    def validate(self):
        """Enforce the record invariants; raises TruncationError."""
        total = (np.abs(self.t_xx) ** 2 + np.abs(self.r_xx) ** 2
                 + 2.0 * np.abs(self.t_yx) ** 2)
        if np.any(total > 1.0 + 0.02):
            raise TruncationError(
                f"per-k probability sum reaches {float(np.max(total)):.4f}")
        incoming_elastic = self.n_elastic_x if self.species == "x" \
            else self.n_elastic_y
        if incoming_elastic < 0.5 - 1e-9:
            raise TruncationError(
                f"incoming-species elastic number {incoming_elastic:.4f} < 1/2")
        for name in ("n_elastic_x", "n_elastic_y",
                     "n_inelastic_x", "n_inelastic_y"):
            if getattr(self, name) < -0.02:
                raise TruncationError(
                    f"{name} = {getattr(self, name):.4f} below -0.02")

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, np.ndarray):
                if np.iscomplexobj(val):
                    out[key] = [[float(z.real), float(z.imag)] for z in val]
                else:
                    out[key] = [float(x) for x in val]
            elif isinstance(val, (np.floating, np.integer)):
                out[key] = val.item()
            else:
                out[key] = val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScatteringRecord":
        kwargs = dict(data)
        for key in ("k", "c_abs2", "gamma_k"):
            kwargs[key] = np.asarray(kwargs[key], dtype=float)
        for key in ("t_xx", "r_xx", "t_yx"):
            pairs = np.asarray(kwargs[key], dtype=float)
            kwargs[key] = pairs[:, 0] + 1j * pairs[:, 1]
        return cls(**kwargs)


# ------------------------------------------------------------ model setup


def build_setup(config: ScatterConfig) -> tuple[LatticeModel, ModeTransform]:
    """Chain coefficients, lattice model, and band transform for a config."""
    per_chain = config.alpha if config.variant == "frustrated" \
        else config.alpha / 2.0
    density = SpectralDensity(alpha=per_chain, omega_c=config.omega_c)
    coeffs = chain_coefficients_stieltjes(density, config.length)
    model = build_model(coeffs, coeffs, delta=config.delta,
                        d=config.boson_dim, variant=config.variant)
    return model, mode_transform(coeffs)


def ground_state(config: ScatterConfig,
                 model: LatticeModel | None = None) -> GroundStateResult:
    """DMRG ground state of the configured lattice."""
    if model is None:
        model, _ = build_setup(config)
    return dmrg(to_mpo(model), model.dims, chi_max=config.chi,
                sweeps=config.sweeps, tol=config.gs_tol)


def _renormalized_splitting(config: ScatterConfig) -> float:
    if config.variant == "frustrated":
        return analytics.delta_r_frustrated(config.alpha, config.omega_c,
                                            config.delta)
    return analytics.delta_r_unfrustrated(config.alpha, config.omega_c,
                                          config.delta)


def resolve_geometry(config: ScatterConfig) -> tuple[float, float, dict]:
    """Pick x0 and t_inf (honoring overrides) and report the budget.

    The launch distance balances separation from the scatterer against the
    spectral capture limit near the far end; t_inf targets travel time plus
    ten spin lifetimes but is capped so that even the 1.1 t_inf stability
    extraction stays inside the echo budget.
    """
    probe = WavepacketSpec(species="x", k0=config.k0, sigma_k=config.sigma_k,
                           x0=-1.0)
    sig_n = probe.sigma_sites
    vel = probe.velocity(config.omega_c)
    scale = math.sqrt(config.k0 * (1.0 - config.k0))
    if config.x0 is not None:
        x0 = config.x0
        if abs(x0) * scale < 1.5 * sig_n:
            warnings.warn(
                f"launch site {abs(x0) * scale:.0f} is within 1.5 sigma "
                f"({sig_n:.1f} sites) of the scatterer; extraction may be "
                "degraded", stacklevel=2)
    else:
        # 4.5 sigma of clearance at the far end keeps the projection
        # shortfall below 1e-3 (the truncation tail decays roughly
        # exponentially in the margin, slower than a Gaussian), and 5.2
        # sigma to the outermost 10% of sites keeps the boundary monitor
        # quiet for the initial tail as well.
        n_star = min(6.0 * sig_n,
                     (config.length - 2) - 4.5 * sig_n,
                     0.9 * config.length - 5.2 * sig_n)
        if n_star < 1.5 * sig_n:
            raise ResolutionError(
                f"chain of {config.length} sites cannot hold a packet "
                f"{sig_n:.1f} sites wide away from both ends; increase "
                "length or pass x0 and capture_tol explicitly")
        x0 = -n_star / scale
    n_star = abs(x0) * scale
    t_hit = abs(x0) / config.omega_c
    delta_r = _renormalized_splitting(config)
    if config.alpha > 0:
        t_life = 10.0 / (2.0 * math.pi * config.alpha * delta_r)
    else:
        t_life = 0.0
    t_wanted = 2.0 * t_hit + t_life
    t_echo = t_hit + max((config.length - 2) - 2.0 * sig_n, 1.0) / vel
    info = {"t_hit": t_hit, "t_life": t_life, "t_echo": t_echo,
            "n_star": n_star, "sigma_sites": sig_n, "t_inf_capped": False}
    if config.t_inf is not None:
        t_inf = config.t_inf
    else:
        t_inf = min(t_wanted, t_echo / 1.1)
        info["t_inf_capped"] = t_inf < t_wanted - 1e-12
    if t_inf >= t_echo + 1e-9:
        raise ResolutionError(
            f"t_inf {t_inf:.1f} exceeds the boundary echo budget {t_echo:.1f}")
    if t_inf < 1.6 * t_hit:
        raise ResolutionError(
            f"t_inf {t_inf:.1f} leaves no time past the arrival at {t_hit:.1f}")
    return x0, t_inf, info


# ------------------------------------------------------------- extraction


def elastic_amplitudes(gs: GroundStateResult, psi: MatrixProductState,
                       model: LatticeModel, mt: ModeTransform,
                       wp: WavepacketSpec, t: float):
    """Per-k elastic amplitudes on the amplitude-resolved band.

    The amplitudes live on the exact eigen-grid of the truncated chain:
    there the band-to-chain transform is unitary and a decoupled chain
    advances each node by exactly exp(-i omega_c k t), so the phase rewind
    holds at any t instead of dephasing with the finite-size level spacing.
    The division reference is the launched packet as the chain actually
    holds it (the projected weights synthesized back), making the free case
    exact and the probabilities relative to the real incoming flux.

    Returns (k, c, qweights, t_same, r_same, t_cross) with the band mask
    applied: only nodes where |c_k| > 0.05 max|c_k| are kept, everything
    else is dropped rather than divided into noise.  qweights are the
    quadrature weights of the kept nodes, for packet averages.
    """
    d = model.dims[0]
    b, _, _ = boson_ops(d)
    v_in = transition_vector(gs.state, psi, b, model.chain_sites("x"))
    v_out = transition_vector(gs.state, psi, b, model.chain_sites("y"))
    et = eigen_transform(mt.coeffs)
    m_in = et.synthesize(v_in)
    m_out = et.synthesize(v_out)
    w = mt.project(gaussian_profile(mt, wp.k0, wp.sigma_k, wp.x0))
    c = et.synthesize(w)
    mask = np.abs(c) > _MASK_RELATIVE * np.max(np.abs(c))
    if not np.any(mask):
        raise ResolutionError("packet has no support on the band grid")
    phase = np.exp(1j * (gs.energy + et.omega()[mask]) * t)
    ratio_in = phase * m_in[mask] / (2.0 * c[mask])
    ratio_out = phase * m_out[mask] / (2.0 * c[mask])
    t_same = ratio_in + 0.5
    r_same = ratio_in - 0.5
    t_cross = ratio_out
    return et.nodes[mask], c[mask], et.weights[mask], t_same, r_same, t_cross


def photon_numbers(gs: GroundStateResult, psi: MatrixProductState,
                   model: LatticeModel, incoming: str = "x"):
    """Elastic and inelastic photon numbers per chain.

    Row-orthonormality of the band transform collapses the k-integrals to
    chain sums: n_elastic = (1/2) sum_n |v_n|^2 plus 1/2 on the incoming
    chain for the free odd combination; n_inelastic is half the occupation
    growth not accounted for by the elastic transition amplitudes.
    """
    d = model.dims[0]
    b, _, num = boson_ops(d)
    out = {}
    gs_work = gs.state.copy()
    psi_work = psi.copy()
    for species in ("x", "y"):
        sites = model.chain_sites(species)
        v = transition_vector(gs.state, psi, b, sites)
        occ_psi = sum(psi_work.site_expectation(num, s).real for s in sites)
        occ_gs = sum(gs_work.site_expectation(num, s).real for s in sites)
        elastic_sum = float(np.sum(np.abs(v) ** 2))
        n_el = 0.5 * elastic_sum + (0.5 if species == incoming else 0.0)
        n_inel = 0.5 * (occ_psi - occ_gs - elastic_sum)
        out[species] = (n_el, n_inel)
    for species, (n_el, n_inel) in out.items():
        if n_el < -0.02 or n_inel < -0.02:
            raise TruncationError(
                f"photon number for chain {species} fell below -0.02 "
                f"(elastic {n_el:.4f}, inelastic {n_inel:.4f})")
    return out["x"][0], out["y"][0], out["x"][1], out["y"][1]


def gamma_from_elastic(k, c, t_same, r_same, t_cross, weights=None):
    """Per-k inelastic deficit and its packet average.

    gamma(k) = 1 - |t|^2 - |r|^2 - 2|t_cross|^2, clipped to
    [-0.02, 0.52]; the clip is flagged, not silently hidden.  The packet
    average integrates |c_k|^2 gamma(k) over the masked band (the band
    carries all but a fraction ~1e-3 of the packet).
    """
    gamma = 1.0 - np.abs(t_same) ** 2 - np.abs(r_same) ** 2 \
        - 2.0 * np.abs(t_cross) ** 2
    in_range = bool(np.all(gamma >= -0.02) and np.all(gamma <= 0.52))
    gamma = np.clip(gamma, -0.02, 0.52)
    if weights is None:
        # trapezoid on the masked nodes: fallback when quadrature weights
        # are not at hand (the integrand is smooth)
        total = float(np.trapezoid(np.abs(c) ** 2 * gamma, k))
    else:
        total = float(np.sum(weights * np.abs(c) ** 2 * gamma))
    return gamma, total, in_range


# ---------------------------------------------------------------- the run


def run_scattering(config: ScatterConfig,
                   ground: GroundStateResult | None = None) -> ScatteringRecord:
    """Run one experiment and return the validated record.

    A precomputed ground state may be passed in (it must match the model
    parameters; energies are not re-derived).  The packet is simulated on
    the first chain; species "y" relabels chain quantities afterwards,
    exact by the x<->y symmetry of the model.
    """
    model, mt = build_setup(config)
    x0, t_inf, budget = resolve_geometry(config)
    wp = WavepacketSpec(species=config.species, k0=config.k0,
                        sigma_k=config.sigma_k, x0=x0)
    gs = ground if ground is not None else ground_state(config, model)
    if gs.state.dims != model.dims:
        raise ParameterError("ground state does not match the model lattice")

    w = wavepacket_chain_weights(mt, wp, tol=config.capture_tol)
    capture = float(np.sum(np.abs(w) ** 2))
    _, bdag, num = boson_ops(config.boson_dim)
    ops = {site: w[n] * bdag for n, site in enumerate(model.chain_sites("x"))}
    psi, eta = apply_operator_train(gs.state, ops, chi_max=2 * config.chi)

    layers = to_gate_layers(model, config.dt)
    n_steps = max(1, int(round(t_inf / config.dt)))
    t1 = n_steps * config.dt
    monitor_state = {"boundary": 0.0, "fock": 0.0}
    n_edge = max(1, int(math.ceil(_BOUNDARY_FRACTION * config.length)))
    edge_sites = (model.chain_sites("x")[-n_edge:]
                  + model.chain_sites("y")[-n_edge:])
    top = np.diag(np.eye(config.boson_dim)[-1])

    def monitor(state, step, t):
        worst_edge = max(state.site_expectation(num, s).real
                         for s in edge_sites)
        worst_fock = max(state.site_expectation(top, s).real
                         for s in model.chain_sites("x")
                         + model.chain_sites("y"))
        monitor_state["boundary"] = max(monitor_state["boundary"], worst_edge)
        monitor_state["fock"] = max(monitor_state["fock"], worst_fock)

    every = max(50, n_steps // 10)
    info = evolve(psi, layers, n_steps, chi_max=config.chi, eps=config.eps,
                  max_discard=config.max_discard, monitor=monitor,
                  monitor_every=every)

    k, c, qw, t_same, r_same, t_cross = elastic_amplitudes(
        gs, psi, model, mt, wp, t1)
    n_el_x, n_el_y, n_in_x, n_in_y = photon_numbers(gs, psi, model,
                                                    incoming="x")
    gamma_k, gamma_total, gamma_ok = gamma_from_elastic(
        k, c, t_same, r_same, t_cross, weights=qw)
    gamma_counts = (n_in_x + n_in_y) / 3.0

    # stability: push on by ten percent and re-read the amplitudes
    extra = max(1, int(round(0.1 * t_inf / config.dt)))
    info2 = evolve(psi, layers, extra, chi_max=config.chi, eps=config.eps,
                   max_discard=config.max_discard)
    t2 = t1 + extra * config.dt
    _, _, _, t_same2, r_same2, t_cross2 = elastic_amplitudes(
        gs, psi, model, mt, wp, t2)
    stability = max(float(np.max(np.abs(t_same2 - t_same))),
                    float(np.max(np.abs(r_same2 - r_same))),
                    float(np.max(np.abs(t_cross2 - t_cross))))

    band_mass = float(np.sum(qw * np.abs(c) ** 2))
    avg = qw * np.abs(c) ** 2 / band_mass
    p_transmit = float(np.sum(avg * np.abs(t_same) ** 2))
    p_reflect = float(np.sum(avg * np.abs(r_same) ** 2))
    p_cross = float(np.sum(avg * np.abs(t_cross) ** 2))

    if config.species == "y":
        n_el_x, n_el_y = n_el_y, n_el_x
        n_in_x, n_in_y = n_in_y, n_in_x

    flags = {
        "boundary_occupation": monitor_state["boundary"],
        "boundary_ok": monitor_state["boundary"] < _BOUNDARY_LIMIT,
        "fock_top": monitor_state["fock"],
        "fock_ok": monitor_state["fock"] < _FOCK_LIMIT,
        "stability": stability,
        "gamma_in_range": gamma_ok,
        "t_inf_capped": budget["t_inf_capped"],
        "t_echo": budget["t_echo"],
        "t_life": budget["t_life"],
    }
    record = ScatteringRecord(
        species=config.species, variant=config.variant, alpha=config.alpha,
        delta=config.delta, omega_c=config.omega_c, length=config.length,
        boson_dim=config.boson_dim, chi=config.chi, dt=config.dt,
        k0=config.k0, sigma_k=config.sigma_k, x0=x0, t_inf=t1,
        gs_energy=gs.energy, eta=float(eta), capture=capture,
        k=k, c_abs2=np.abs(c) ** 2, t_xx=t_same, r_xx=r_same, t_yx=t_cross,
        gamma_k=gamma_k, p_transmit=p_transmit, p_reflect=p_reflect,
        p_cross=p_cross, gamma_total=gamma_total, gamma_counts=gamma_counts,
        n_elastic_x=n_el_x, n_elastic_y=n_el_y,
        n_inelastic_x=n_in_x, n_inelastic_y=n_in_y,
        discarded=info["discarded"] + info2["discarded"],
        norm_drift=max(info["norm_drift"], info2["norm_drift"]),
        max_bond=max(info["max_bond"], info2["max_bond"]),
        n_steps=n_steps + extra, flags=flags,
    )
    record.validate()
    return record


# ----------------------------------------------------------------- files


def save_record(path: str, record: ScatteringRecord):
    """Atomic JSON dump of a record."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(record.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_record(path: str) -> ScatteringRecord:
    with open(path, encoding="utf-8") as fh:
        return ScatteringRecord.from_dict(json.load(fh))


def record_csv(path: str, record: ScatteringRecord):
    """Sidecar CSV with the per-k curves."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "k", "omega_over_delta", "re_t_xx", "im_t_xx", "re_r_xx",
            "im_r_xx", "re_t_yx", "im_t_yx", "p_t_xx", "p_r_xx", "p_t_yx",
            "gamma",
        ])
        for i, k in enumerate(record.k):
            t, r, y = record.t_xx[i], record.r_xx[i], record.t_yx[i]
            writer.writerow([
                f"{k:.8f}", f"{record.omega_c * k / record.delta:.8f}",
                f"{t.real:.8f}", f"{t.imag:.8f}", f"{r.real:.8f}",
                f"{r.imag:.8f}", f"{y.real:.8f}", f"{y.imag:.8f}",
                f"{abs(t) ** 2:.8f}", f"{abs(r) ** 2:.8f}",
                f"{abs(y) ** 2:.8f}", f"{record.gamma_k[i]:.8f}",
            ])
    os.replace(tmp, path)

"""Large-scale propagation: path loss, correlated shadowing, element gain and
local-scattering spatial covariances for every TRP-UE link of a drop."""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import ConfigurationError, NumericalError
from .topology import NetworkLayout, UESet, wrapped_vectors

__all__ = [
    "ElementPattern",
    "PropagationParams",
    "ArrayGeometry",
    "LargeScaleState",
    "path_loss_db",
    "correlated_shadowing",
    "ue_shadow_component",
    "antenna_gain_db",
    "steering_vectors",
    "local_scattering_covariance",
    "build_large_scale_state",
]


@dataclass(frozen=True)
class ElementPattern:
    """Sectorized macro element pattern (parabolic cuts, capped)."""

    g_max: float = 8.0  # dBi
    hpbw_az: float = 65.0
    hpbw_el: float = 65.0
    a_max: float = 30.0
    sla_v: float = 30.0
    downtilt: float = 0.0  # deg, positive tilts the beam below the horizon


@dataclass(frozen=True)
class PropagationParams:
    iota0: float = 30.0
    alpha: float = 3.67
    delta_indoor: float = 20.0
    sigma_chi: float = 4.0
    d_dcorr: float = 9.0
    inter_trp_shadow_corr: float = 0.5
    sigma_zeta_az: float = 15.0
    sigma_zeta_el: float = 10.0
    fc: float = 2e9
    min_distance: float = 10.0
    pattern: ElementPattern = field(default_factory=ElementPattern)

    def __post_init__(self):
        if self.sigma_chi < 0:
            raise ConfigurationError("sigma_chi must be non-negative")
        if self.d_dcorr <= 0:
            raise ConfigurationError("d_dcorr must be positive")
        if not 0.0 <= self.inter_trp_shadow_corr <= 1.0:
            raise ConfigurationError("inter_trp_shadow_corr must lie in [0, 1]")


@dataclass(frozen=True)
class ArrayGeometry:
    """Planar (URA) or linear (ULA) array; element ``v*n_h + h`` sits at
    ``(h, v) * spacing`` wavelengths."""

    n_h: int
    n_v: int = 1
    spacing: float = 0.5

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ConfigurationError("array dimensions must be >= 1")
        if self.spacing <= 0:
            raise ConfigurationError("element spacing must be positive")

    @property
    def kind(self) -> str:
        return "ULA" if self.n_v == 1 else "URA"

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    def element_indices(self) -> np.ndarray:
        v, h = np.divmod(np.arange(self.size), self.n_h)
        return np.column_stack([h, v]).astype(float)


def path_loss_db(d, indoor, params: PropagationParams):
    """Log-distance loss ``iota0 + 10*alpha*log10(d)`` plus the wall loss for
    indoor UEs."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    pl = params.iota0 + 10.0 * params.alpha * np.log10(d)
    pl = pl + np.where(np.asarray(indoor, dtype=bool), params.delta_indoor, 0.0)
    return pl if pl.ndim else float(pl)


def antenna_gain_db(boresight, azimuth, elevation, pattern: ElementPattern):
    """Element gain in dBi. ``elevation`` is measured from the horizon
    (negative below it)."""
    phi = (np.asarray(azimuth, dtype=float) - np.asarray(boresight, dtype=float)
           + 180.0) % 360.0 - 180.0
    a_az = np.minimum(12.0 * (phi / pattern.hpbw_az) ** 2, pattern.a_max)
    el = np.asarray(elevation, dtype=float) + pattern.downtilt
    a_el = np.minimum(12.0 * (el / pattern.hpbw_el) ** 2, pattern.sla_v)
    g = pattern.g_max - np.minimum(a_az + a_el, pattern.a_max)
    return g if np.ndim(g) else float(g)


def steering_vectors(geometry: ArrayGeometry, az_deg, el_deg) -> np.ndarray:
    """Array responses for angles relative to broadside; shape ``angles + (N,)``."""
    az = np.radians(np.asarray(az_deg, dtype=float))[..., None]
    el = np.radians(np.asarray(el_deg, dtype=float))[..., None]
    hv = geometry.element_indices()
    phase = 2.0 * np.pi * geometry.spacing * (
        hv[:, 0] * np.sin(az) * np.cos(el) + hv[:, 1] * np.sin(el))
    return np.exp(1j * phase)


def _gh_rule(sigma: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if sigma == 0.0:
        return np.zeros(1), np.ones(1)
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    return np.sqrt(2.0) * sigma * x, w / np.sqrt(np.pi)


def local_scattering_covariance(nominal_az, nominal_el, sigma_az: float,
                                sigma_el: float, geometry: ArrayGeometry,
                                n_nodes: int = 32) -> np.ndarray:
    """Spatial correlation of a Gaussian angular spread around the nominal
    angles, evaluated with a tensor Gauss-Hermite rule.

    Accepts arrays of nominal angles and returns ``shape + (N, N)``. The
    diagonal is exactly one, so the trace equals the array size.
    """
    nominal_az = np.asarray(nominal_az, dtype=float)
    nominal_el = np.asarray(nominal_el, dtype=float)
    shape = np.broadcast(nominal_az, nominal_el).shape
    az0 = np.broadcast_to(nominal_az, shape).reshape(-1)
    el0 = np.broadcast_to(nominal_el, shape).reshape(-1)

    za, wa = _gh_rule(float(sigma_az), n_nodes)
    ze, we = _gh_rule(float(sigma_el), n_nodes)
    # (links, qa, qe)
    az = np.radians(az0[:, None, None] + za[None, :, None])
    el = np.radians(el0[:, None, None] + ze[None, None, :])
    u = np.sin(az) * np.cos(el)
    v = np.broadcast_to(np.sin(el), u.shape)
    w = (wa[:, None] * we[None, :]).reshape(-1)
    u = u.reshape(u.shape[0], -1)
    v = v.reshape(v.shape[0], -1)

    # The entry depends only on the element position difference.
    hv = geometry.element_indices()
    diff = hv[:, None, :] - hv[None, :, :]
    uniq, inv = np.unique(diff.reshape(-1, 2), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    n = geometry.size
    R = np.empty((az0.size, n * n), dtype=complex)
    kd = 2.0 * np.pi * geometry.spacing
    chunk = max(1, 2_000_000 // max(1, u.shape[1] * uniq.shape[0]))
    for s in range(0, az0.size, chunk):
        ph = kd * (uniq[None, None, :, 0] * u[s:s + chunk, :, None]
                   + uniq[None, None, :, 1] * v[s:s + chunk, :, None])
        vals = np.einsum("q,lqd->ld", w, np.exp(1j * ph))
        R[s:s + chunk] = vals[:, inv]
    R = R.reshape(shape + (n, n))
    # exact Hermitian symmetry / unit diagonal
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    idx = np.arange(n)
    R[..., idx, idx] = 1.0
    return R


def ue_shadow_component(dist: np.ndarray, d_dcorr: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Unit-variance Gaussian field over UEs with correlation 2^(-d/d_dcorr)."""
    C = np.power(2.0, -np.asarray(dist, dtype=float) / d_dcorr)
    lam, V = np.linalg.eigh(C)
    lam = np.clip(lam, 0.0, None)
    z = rng.standard_normal(C.shape[0])
    return V @ (np.sqrt(lam) * z)


def correlated_shadowing(layout: NetworkLayout, ues: UESet,
                         params: PropagationParams,
                         rng: np.random.Generator) -> np.ndarray:
    """Shadowing in dB, ``sigma*(sqrt(d)*a_m + sqrt(1-d)*b_k)``.

    ``a_m`` is i.i.d. per TRP and ``b_k`` is spatially correlated across UEs
    (wrapped distances); ``d`` is the TRP correlation coefficient.
    """
    K = ues.K
    a = rng.standard_normal(layout.n_trp)
    if K:
        v = wrapped_vectors(layout, ues.positions, ues.positions)
        b = ue_shadow_component(np.hypot(v[..., 0], v[..., 1]), params.d_dcorr, rng)
    else:
        b = np.zeros(0)
    delta = params.inter_trp_shadow_corr
    return params.sigma_chi * (np.sqrt(delta) * a[:, None]
                               + np.sqrt(1.0 - delta) * b[None, :])


@dataclass
class LargeScaleState:
    """Per-link gains and spatial covariances for one drop.

    ``r_trp[m, k]`` already carries the gain ``beta[m, k]``; ``r_ue[m, k]`` has
    unit diagonal, so ``kron(r_ue, r_trp)`` has trace ``N_TRP*N_UE*beta``.
    """

    beta: np.ndarray  # (M_T, K)
    r_trp: np.ndarray  # (M_T, K, N, N)
    r_ue: np.ndarray  # (M_T, K, Nu, Nu)
    az_trp: np.ndarray
    el_trp: np.ndarray
    az_ue: np.ndarray
    el_ue: np.ndarray
    distance: np.ndarray | None = None
    _sqrt_trp: np.ndarray | None = field(default=None, repr=False)
    _sqrt_ue: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_trp(self) -> int:
        return int(self.beta.shape[0])

    @property
    def K(self) -> int:
        return int(self.beta.shape[1])

    @property
    def n_ant(self) -> int:
        return int(self.r_trp.shape[-1])

    @property
    def n_ue_max(self) -> int:
        return int(self.r_ue.shape[-1])

    def r_link(self, m: int, k: int, n_streams: int | None = None) -> np.ndarray:
        n = self.n_ue_max if n_streams is None else n_streams
        return np.kron(self.r_ue[m, k, :n, :n], self.r_trp[m, k])

    def _psd_sqrt(self, R: np.ndarray) -> np.ndarray:
        lam, V = np.linalg.eigh(R)
        top = lam.max(axis=-1, keepdims=True)
        if np.any(lam < -1e-9 * np.maximum(top, 0.0) - 1e-300):
            raise NumericalError("covariance is not positive semidefinite")
        lam = np.clip(lam, 0.0, None)
        return (V * np.sqrt(lam)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))

    @property
    def sqrt_trp(self) -> np.ndarray:
        if self._sqrt_trp is None:
            self._sqrt_trp = self._psd_sqrt(self.r_trp)
        return self._sqrt_trp

    @property
    def sqrt_ue(self) -> np.ndarray:
        if self._sqrt_ue is None:
            self._sqrt_ue = self._psd_sqrt(self.r_ue)
        return self._sqrt_ue

    def save(self, path) -> None:
        """Bundle gains and covariance eigendecompositions into one ``.npz``."""
        lt, vt = np.linalg.eigh(self.r_trp)
        lu, vu = np.linalg.eigh(self.r_ue)
        meta = {"n_trp": self.n_trp, "K": self.K, "n_ant": self.n_ant,
                "n_ue_max": self.n_ue_max}
        np.savez_compressed(
            path, beta=self.beta, eig_trp=lt, vec_trp=vt, eig_ue=lu, vec_ue=vu,
            az_trp=self.az_trp, el_trp=self.el_trp, az_ue=self.az_ue,
            el_ue=self.el_ue,
            distance=self.distance if self.distance is not None else np.zeros(0),
            meta=json.dumps(meta))

    @classmethod
    def load(cls, path) -> "LargeScaleState":
        z = np.load(path)

        def rebuild(lam, V):
            return (V * lam[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))

        dist = z["distance"]
        return cls(beta=z["beta"], r_trp=rebuild(z["eig_trp"], z["vec_trp"]),
                   r_ue=rebuild(z["eig_ue"], z["vec_ue"]), az_trp=z["az_trp"],
                   el_trp=z["el_trp"], az_ue=z["az_ue"], el_ue=z["el_ue"],
                   distance=dist if dist.size else None)


def build_large_scale_state(layout: NetworkLayout, ues: UESet,
                            params: PropagationParams,
                            geometry_trp: ArrayGeometry,
                            geometry_ue: ArrayGeometry,
                            rng: np.random.Generator,
                            shadowing: bool = True) -> LargeScaleState:
    """Gains ``beta = pathloss * shadowing * element gain`` (linear) and the
    TRP/UE-side covariances for all links of the drop.

    The TRP-side nominal angles are wrapped azimuth/elevation relative to the
    sector boresight; UE orientations are drawn uniformly per drop.
    """
    v = wrapped_vectors(layout, layout.trp_positions, ues.positions)  # (M, K, 2)
    d2 = np.hypot(v[..., 0], v[..., 1])
    d2c = np.maximum(d2, params.min_distance)
    dh = layout.h_trp - ues.h_ue
    d3 = np.sqrt(d2c ** 2 + dh ** 2)
    bearing = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    el_down = -np.degrees(np.arctan2(dh, d2c))  # seen from the TRP

    pl = path_loss_db(d3, np.broadcast_to(ues.indoor[None, :], d3.shape), params)
    gain = antenna_gain_db(layout.boresight[:, None], bearing, el_down, params.pattern)
    shadow = (correlated_shadowing(layout, ues, params, rng) if shadowing
              else np.zeros_like(pl))
    beta = 10.0 ** ((gain - pl - shadow) / 10.0)

    az_trp = (bearing - layout.boresight[:, None] + 180.0) % 360.0 - 180.0
    orient = rng.uniform(-180.0, 180.0, size=ues.K)
    az_ue = ((bearing + 180.0) - orient[None, :] + 180.0) % 360.0 - 180.0
    el_ue = -el_down

    r_trp = local_scattering_covariance(az_trp, el_down, params.sigma_zeta_az,
                                        params.sigma_zeta_el, geometry_trp)
    if geometry_ue.size == 1:
        r_ue = np.ones(beta.shape + (1, 1), dtype=complex)
    else:
        r_ue = local_scattering_covariance(az_ue, el_ue, params.sigma_zeta_az,
                                           params.sigma_zeta_el, geometry_ue)
    r_trp = r_trp * beta[..., None, None]
    return LargeScaleState(beta=beta, r_trp=r_trp, r_ue=r_ue, az_trp=az_trp,
                           el_trp=el_down, az_ue=az_ue, el_ue=el_ue, distance=d3)

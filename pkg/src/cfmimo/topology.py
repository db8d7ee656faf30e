"""Regular sectorized macro layout, UE drops and wrap-around geometry.

The layout is the 7-site (one ring) hexagonal cluster. Wrap-around uses the
six translations of length sqrt(7)*isd that tile the plane with copies of
the cluster, so the union of the seven site hexagons is a fundamental domain.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "NetworkLayout",
    "UESet",
    "PlacementSpec",
    "build_hex_layout",
    "wrap_offsets",
    "wrapped_displacement",
    "wrapped_vectors",
    "wrap_into_cluster",
    "inside_coverage",
    "place_ues",
]

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class NetworkLayout:
    """Sites, sectors (TRPs) and the inter-site distance of a drop area.

    ``trp_site[m]`` and ``boresight[m]`` describe TRP ``m``; TRPs are ordered
    site-major, i.e. ``m = site * S + sector``.
    """

    sites: np.ndarray  # (L, 2) metres
    trp_site: np.ndarray  # (M_T,)
    boresight: np.ndarray  # (M_T,) degrees
    isd: float
    S: int
    h_trp: float = 25.0

    @property
    def L(self) -> int:
        return int(self.sites.shape[0])

    @property
    def n_trp(self) -> int:
        return int(self.trp_site.shape[0])

    @property
    def trp_positions(self) -> np.ndarray:
        return self.sites[self.trp_site]

    def to_dict(self) -> dict:
        return {
            "sites": self.sites.tolist(),
            "trp_site": self.trp_site.tolist(),
            "boresight": self.boresight.tolist(),
            "isd": self.isd,
            "S": self.S,
            "h_trp": self.h_trp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkLayout":
        return cls(
            sites=np.asarray(d["sites"], dtype=float),
            trp_site=np.asarray(d["trp_site"], dtype=int),
            boresight=np.asarray(d["boresight"], dtype=float),
            isd=float(d["isd"]),
            S=int(d["S"]),
            h_trp=float(d["h_trp"]),
        )


@dataclass(frozen=True)
class UESet:
    positions: np.ndarray  # (K, 2)
    indoor: np.ndarray  # (K,) bool
    h_ue: float = 1.65
    cell: np.ndarray | None = None  # (K,) cell index, -1 when not placed per cell

    @property
    def K(self) -> int:
        return int(self.positions.shape[0])

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "indoor": [bool(x) for x in self.indoor],
            "h_ue": self.h_ue,
            "cell": None if self.cell is None else self.cell.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UESet":
        cell = d.get("cell")
        return cls(
            positions=np.asarray(d["positions"], dtype=float).reshape(-1, 2),
            indoor=np.asarray(d["indoor"], dtype=bool),
            h_ue=float(d["h_ue"]),
            cell=None if cell is None else np.asarray(cell, dtype=int),
        )


@dataclass(frozen=True)
class PlacementSpec:
    mode: str = "uniform_per_cell"  # or "hotspot"
    hotspot_centers: tuple = ()
    hotspot_radius: float = 40.0
    hotspot_fraction: float = 2.0 / 3.0
    p_indoor: float = 0.0

    def __post_init__(self):
        if self.mode not in ("uniform_per_cell", "hotspot"):
            raise ConfigurationError(f"unknown placement mode {self.mode!r}")
        if not 0.0 <= self.hotspot_fraction <= 1.0:
            raise ConfigurationError("hotspot_fraction must lie in [0, 1]")
        if self.hotspot_radius <= 0:
            raise ConfigurationError("hotspot_radius must be positive")
        if not 0.0 <= self.p_indoor <= 1.0:
            raise ConfigurationError("p_indoor must lie in [0, 1]")
        if self.mode == "hotspot" and len(self.hotspot_centers) == 0:
            raise ConfigurationError("hotspot mode needs at least one center")


def build_hex_layout(L: int = 7, S: int = 3, isd: float = 200.0,
                     h_trp: float = 25.0) -> NetworkLayout:
    """Central site at the origin plus (for ``L=7``) six neighbours at
    azimuths 0, 60, ..., 300 degrees. Sector boresights are 30 + j*360/S."""
    if L not in (1, 7):
        raise ConfigurationError(f"only L=1 or L=7 sites are supported, got {L}")
    if S < 1:
        raise ConfigurationError("S must be >= 1")
    if isd <= 0:
        raise ConfigurationError("isd must be positive")
    sites = [(0.0, 0.0)]
    if L == 7:
        for k in range(6):
            a = math.radians(60.0 * k)
            sites.append((isd * math.cos(a), isd * math.sin(a)))
    sites = np.array(sites)
    trp_site = np.repeat(np.arange(L), S)
    boresight = np.tile(30.0 + 360.0 * np.arange(S) / S, L) % 360.0
    return NetworkLayout(sites=sites, trp_site=trp_site, boresight=boresight,
                         isd=float(isd), S=int(S), h_trp=float(h_trp))


def wrap_offsets(layout: NetworkLayout) -> np.ndarray:
    """The 7 translations (identity first) used for wrap-around."""
    if layout.L == 1:
        return np.zeros((1, 2))
    d = layout.isd
    base = np.array([2.5 * d, 0.5 * _SQRT3 * d])
    out = [np.zeros(2)]
    for k in range(6):
        a = math.radians(60.0 * k)
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        out.append(rot @ base)
    return np.array(out)


def _super_basis(layout: NetworkLayout) -> np.ndarray:
    # columns span the translations that tile the plane with cluster copies
    d = layout.isd
    return np.array([[2.5 * d, 0.5 * d], [0.5 * _SQRT3 * d, 1.5 * _SQRT3 * d]])


def wrapped_vectors(layout: NetworkLayout, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest displacement from every ``a[i]`` to the images of every ``b[j]``.

    Returns an ``(len(a), len(b), 2)`` array. The displacement is reduced
    modulo the cluster translations, so points need not lie inside the
    cluster; for points that do this equals the minimum over the 7 offsets.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    v = b[None, :, :] - a[:, None, :]
    if layout.L == 1:
        return v
    T = _super_basis(layout)
    base = np.floor(v @ np.linalg.inv(T).T)
    # the basis is reduced (60 deg apart), so the nearest lattice point is
    # among the neighbours of the enclosing cell
    best = None
    best_d = None
    for di in (-1, 0, 1, 2):
        for dj in (-1, 0, 1, 2):
            w = v - (base + np.array([di, dj])) @ T.T
            dd = np.einsum("ijk,ijk->ij", w, w)
            if best is None:
                best, best_d = w, dd
            else:
                upd = dd < best_d
                best = np.where(upd[..., None], w, best)
                best_d = np.where(upd, dd, best_d)
    return best


def wrapped_displacement(layout: NetworkLayout, a, b) -> tuple[float, float]:
    """Wrapped distance (m) and azimuth (deg) from ``a`` toward the nearest image of ``b``."""
    v = wrapped_vectors(layout, np.asarray(a), np.asarray(b))[0, 0]
    return float(np.hypot(v[0], v[1])), float(np.degrees(np.arctan2(v[1], v[0])))


def _nearest_lattice_site(layout: NetworkLayout, p: np.ndarray) -> np.ndarray:
    """Integer lattice coordinates (i, j) of the nearest site in the infinite grid."""
    d = layout.isd
    # basis a1 = (d, 0), a2 = (d/2, d*sqrt3/2)
    j = p[..., 1] / (0.5 * _SQRT3 * d)
    i = p[..., 0] / d - 0.5 * j
    fi, fj = np.floor(i), np.floor(j)
    best = None
    best_d = None
    for di in (0, 1):
        for dj in (0, 1):
            ci, cj = fi + di, fj + dj
            x = (ci + 0.5 * cj) * d
            y = cj * 0.5 * _SQRT3 * d
            dd = (p[..., 0] - x) ** 2 + (p[..., 1] - y) ** 2
            if best is None:
                best = np.stack([ci, cj], axis=-1)
                best_d = dd
            else:
                upd = dd < best_d
                best = np.where(upd[..., None], np.stack([ci, cj], axis=-1), best)
                best_d = np.where(upd, dd, best_d)
    return best.astype(int)


_CLUSTER = {(0, 0), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)}


def inside_coverage(layout: NetworkLayout, p) -> np.ndarray:
    """True where ``p`` lies in the union of the site hexagons."""
    p = np.asarray(p, dtype=float)
    if layout.L == 1:
        return _in_hexagon(p, np.zeros(2), layout.isd)
    ij = _nearest_lattice_site(layout, p)
    flat = ij.reshape(-1, 2)
    inside = np.array([(int(a), int(b)) in _CLUSTER for a, b in flat])
    return inside.reshape(p.shape[:-1])


def _in_hexagon(p: np.ndarray, center: np.ndarray, isd: float) -> np.ndarray:
    # flat sides facing 0, 60, ... degrees at distance isd/2
    q = p - center
    ok = np.ones(q.shape[:-1], dtype=bool)
    for k in range(3):
        a = math.radians(60.0 * k)
        proj = q[..., 0] * math.cos(a) + q[..., 1] * math.sin(a)
        ok &= np.abs(proj) <= 0.5 * isd + 1e-9
    return ok


def wrap_into_cluster(layout: NetworkLayout, p) -> np.ndarray:
    """Map points to their image inside the cluster."""
    p = np.atleast_2d(np.asarray(p, dtype=float)).copy()
    if layout.L == 1:
        return p
    offs = wrap_offsets(layout)
    out = p.copy()
    todo = ~inside_coverage(layout, p)
    for off in offs[1:]:
        if not todo.any():
            break
        cand = p[todo] - off
        ok = inside_coverage(layout, cand)
        idx = np.flatnonzero(todo)[ok]
        out[idx] = cand[ok]
        todo[idx] = False
    if todo.any():
        raise ConfigurationError("point too far from the cluster to wrap")
    return out


def _sample_in_site_sector(rng: np.random.Generator, layout: NetworkLayout,
                           site: int, sector: int | None, n: int) -> np.ndarray:
    d = layout.isd
    r_out = d / _SQRT3
    centre = layout.sites[site]
    out = np.empty((0, 2))
    while out.shape[0] < n:
        m = max(16, 3 * (n - out.shape[0]))
        cand = rng.uniform(-r_out, r_out, size=(m, 2))
        ok = _in_hexagon(cand, np.zeros(2), d)
        if sector is not None:
            bs = layout.boresight[site * layout.S + sector]
            az = np.degrees(np.arctan2(cand[:, 1], cand[:, 0]))
            off = (az - bs + 180.0) % 360.0 - 180.0
            ok &= np.abs(off) <= 180.0 / layout.S
        out = np.vstack([out, cand[ok]])
    return out[:n] + centre


def place_ues(layout: NetworkLayout, K: int, spec: PlacementSpec,
              rng: np.random.Generator, h_ue: float = 1.65) -> UESet:
    """Drop ``K`` UEs.

    Uniform mode splits the UEs evenly over the ``L*S`` sector cells (the
    remainder goes to the lowest-index cells) and draws each one uniformly
    inside its cell. Hotspot mode throws ``round(fraction*K)`` UEs uniformly in
    disks around the centers (round-robin over centers) and the rest
    uniformly over the whole coverage area.
    """
    if K < 0:
        raise ConfigurationError("K must be non-negative")
    n_cells = layout.n_trp
    if spec.mode == "uniform_per_cell":
        counts = np.full(n_cells, K // n_cells)
        counts[: K % n_cells] += 1
        pos, cell = [], []
        for c in range(n_cells):
            if counts[c] == 0:
                continue
            site, sector = divmod(c, layout.S)
            pos.append(_sample_in_site_sector(rng, layout, site, sector, int(counts[c])))
            cell.extend([c] * int(counts[c]))
        positions = np.vstack(pos) if pos else np.zeros((0, 2))
        cells = np.array(cell, dtype=int)
    else:
        centers = np.asarray(spec.hotspot_centers, dtype=float).reshape(-1, 2)
        if not np.all(inside_coverage(layout, centers)):
            raise ConfigurationError("hotspot center outside the coverage area")
        n_hot = int(round(spec.hotspot_fraction * K))
        which = np.arange(n_hot) % centers.shape[0]
        r = spec.hotspot_radius * np.sqrt(rng.uniform(size=n_hot))
        t = rng.uniform(0.0, 2.0 * np.pi, size=n_hot)
        hot = centers[which] + np.column_stack([r * np.cos(t), r * np.sin(t)])
        hot = wrap_into_cluster(layout, hot) if n_hot else np.zeros((0, 2))
        n_rest = K - n_hot
        site_idx = rng.integers(0, layout.L, size=n_rest)
        rest = np.zeros((n_rest, 2))
        for s in range(layout.L):
            sel = np.flatnonzero(site_idx == s)
            if sel.size:
                rest[sel] = _sample_in_site_sector(rng, layout, s, None, sel.size)
        positions = np.vstack([hot, rest])
        cells = np.full(K, -1, dtype=int)
    indoor = rng.uniform(size=K) < spec.p_indoor
    return UESet(positions=positions, indoor=indoor, h_ue=float(h_ue), cell=cells)


def cell_of(layout: NetworkLayout, points) -> np.ndarray:
    """Sector cell of each point under the wrapped nearest-site rule."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = wrapped_vectors(layout, layout.sites, pts)  # (L, n, 2)
    dist = np.hypot(v[..., 0], v[..., 1])
    site = np.argmin(dist, axis=0)
    vs = v[site, np.arange(pts.shape[0])]
    az = np.degrees(np.arctan2(vs[:, 1], vs[:, 0]))
    bs = layout.boresight[: layout.S]
    off = np.abs((az[:, None] - bs[None, :] + 180.0) % 360.0 - 180.0)
    return site * layout.S + np.argmin(off, axis=1)


def dumps_drop(layout: NetworkLayout, ues: UESet) -> str:
    return json.dumps({"layout": layout.to_dict(), "ues": ues.to_dict()})


def loads_drop(text: str) -> tuple[NetworkLayout, UESet]:
    d = json.loads(text)
    return NetworkLayout.from_dict(d["layout"]), UESet.from_dict(d["ues"])

"""Geometric multipath channel generation for uniform planar arrays.

Channels between the access point (AP, M antennas), the passive reflecting
surface (L elements) and the user (N antennas) are sums of planar-wavefront
paths with Laplacian angle spread around uniformly drawn mean angles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "UpaGeometry",
    "GeometricChannelSpec",
    "ChannelTriple",
    "MeanAngles",
    "PathDraw",
    "upa_geometry",
    "array_response",
    "draw_mean_angles",
    "draw_path",
    "gen_geometric_channel",
    "recondition",
    "gen_channel_set",
]


@dataclass(frozen=True)
class UpaGeometry:
    """Rectangular planar array: width x height elements, spacing in wavelengths."""

    width: int
    height: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("array must have at least one element per axis")
        if not np.isfinite(self.spacing_wavelengths) or self.spacing_wavelengths <= 0:
            raise ValueError("element spacing must be positive and finite")

    @property
    def size(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class GeometricChannelSpec:
    """Path count, angle spread and optional conditioning/rank targets."""

    num_paths: int
    angle_spread_deg: float = 10.0
    target_condition: Optional[float] = None
    target_rank: Optional[int] = None

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if not np.isfinite(self.angle_spread_deg) or self.angle_spread_deg <= 0:
            raise ValueError("angle_spread_deg must be positive and finite")
        if self.target_condition is not None and self.target_condition < 1:
            raise ValueError("target_condition must be >= 1")
        if self.target_rank is not None and self.target_rank != self.num_paths:
            # Rank is realized through the path count, so a rank target must
            # agree with it.
            raise ValueError("target_rank must equal num_paths when set")


@dataclass(frozen=True)
class ChannelTriple:
    """One draw of the three links: H (M x L), G (L x N), Z (N x M)."""

    H: np.ndarray
    G: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        m, l = self.H.shape
        l2, n = self.G.shape
        n2, m2 = self.Z.shape
        if l != l2 or n != n2 or m != m2:
            raise ValueError("inconsistent shapes: need H (M,L), G (L,N), Z (N,M)")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(M, N, L)."""
        return self.H.shape[0], self.G.shape[1], self.H.shape[1]


class MeanAngles(NamedTuple):
    az_arrival: float
    el_arrival: float
    az_departure: float
    el_departure: float


class PathDraw(NamedTuple):
    gain: complex
    az_arrival: float
    el_arrival: float
    az_departure: float
    el_departure: float


def upa_geometry(num_elements: int, spacing_wavelengths: float = 0.5) -> UpaGeometry:
    """Most-square factorization of ``num_elements`` into a planar grid."""
    if num_elements < 1:
        raise ValueError("num_elements must be >= 1")
    width = int(np.ceil(np.sqrt(num_elements)))
    while num_elements % width:
        width += 1
    return UpaGeometry(width, num_elements // width, spacing_wavelengths)


def array_response(geom: UpaGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-norm planar-array response for one azimuth/elevation pair.

    Element (m, n) of the grid contributes
    ``exp(j 2 pi d (m sin(az) sin(el) + n cos(el))) / sqrt(size)``,
    flattened in row-major (m, n) order.
    """
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise ValueError("angles must be finite")
    m = np.arange(geom.width)
    n = np.arange(geom.height)
    phase = (
        m[:, None] * (np.sin(azimuth) * np.sin(elevation)) + n[None, :] * np.cos(elevation)
    ).ravel()
    return np.exp(2j * np.pi * geom.spacing_wavelengths * phase) / np.sqrt(geom.size)


def draw_mean_angles(rng: np.random.Generator) -> MeanAngles:
    """Mean arrival/departure angles: azimuth U(0, 2pi), elevation U(0, pi)."""
    az_arr, az_dep = rng.uniform(0.0, 2.0 * np.pi, size=2)
    el_arr, el_dep = rng.uniform(0.0, np.pi, size=2)
    return MeanAngles(az_arr, el_arr, az_dep, el_dep)


def draw_path(
    rng: np.random.Generator,
    spec: GeometricChannelSpec,
    means: Optional[MeanAngles] = None,
) -> PathDraw:
    """One path: unit-variance complex gain plus Laplacian angle offsets.

    The Laplace scale is spread/sqrt(2) so the offset standard deviation
    equals the configured spread. All paths of one channel realization share
    ``means``; when omitted, fresh means are drawn.
    """
    if means is None:
        means = draw_mean_angles(rng)
    gain = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
    scale = np.deg2rad(spec.angle_spread_deg) / np.sqrt(2.0)
    off = rng.laplace(0.0, scale, size=4)
    return PathDraw(
        gain,
        means.az_arrival + off[0],
        means.el_arrival + off[1],
        means.az_departure + off[2],
        means.el_departure + off[3],
    )


def gen_geometric_channel(
    rng: np.random.Generator,
    rx: UpaGeometry,
    tx: UpaGeometry,
    spec: GeometricChannelSpec,
) -> np.ndarray:
    """Sum-of-paths channel (rx.size x tx.size) with E[frobenius^2] = rx.size*tx.size.

    When the spec carries a condition-number target the singular values are
    reshaped accordingly (see ``recondition``).
    """
    means = draw_mean_angles(rng)
    out = np.zeros((rx.size, tx.size), dtype=np.complex128)
    for _ in range(spec.num_paths):
        path = draw_path(rng, spec, means)
        a_rx = array_response(rx, path.az_arrival, path.el_arrival)
        a_tx = array_response(tx, path.az_departure, path.el_departure)
        out += path.gain * np.outer(a_rx, a_tx.conj())
    out *= np.sqrt(rx.size * tx.size / spec.num_paths)
    if spec.target_condition is not None:
        out = recondition(out, spec.target_condition)
    return out


def recondition(a: np.ndarray, target_condition: float) -> np.ndarray:
    """Replace singular values with a log-spaced ramp of given condition number.

    Singular vectors are kept; the ramp runs from s_max down to
    s_max/target_condition and is rescaled so the squared Frobenius norm is
    exactly rows*cols.
    """
    if target_condition < 1:
        raise ValueError("target_condition must be >= 1")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        raise ValueError("cannot recondition a zero matrix")
    ramp = np.logspace(0.0, -np.log10(target_condition), s.size)
    scale = np.sqrt(a.shape[0] * a.shape[1] / np.sum(ramp**2))
    return (u * (scale * ramp)) @ vh


def gen_channel_set(
    rng: np.random.Generator,
    ap: UpaGeometry,
    user: UpaGeometry,
    lis: UpaGeometry,
    direct_spec: GeometricChannelSpec,
    lis_ap_spec: GeometricChannelSpec,
    user_lis_spec: GeometricChannelSpec,
) -> ChannelTriple:
    """Draw the three links of one trial.

    Z (N x M) is the direct user/AP link, H (M x L) the surface-to-AP link
    (reconditioned when a condition target is set), G (L x N) the
    user-to-surface link whose rank is set by its path count.
    """
    for spec, lo in (
        (direct_spec, min(user.size, ap.size)),
        (lis_ap_spec, min(ap.size, lis.size)),
        (user_lis_spec, min(lis.size, user.size)),
    ):
        if spec.target_rank is not None and spec.target_rank > lo:
            raise ValueError("target_rank exceeds the smaller array dimension")
    z = gen_geometric_channel(rng, user, ap, direct_spec)
    h = gen_geometric_channel(rng, ap, lis, lis_ap_spec)
    g = gen_geometric_channel(rng, lis, user, user_lis_spec)
    return ChannelTriple(H=h, G=g, Z=z)

"""Hypercubic periodic lattice geometry.

Sites are indexed row-major with direction 0 fastest: for dims = [d0, d1, ...]
site = x0 + d0*(x1 + d1*(x2 + ...)). Lattice spacing is 1; all derived
quantities are in lattice units. Instances are immutable after construction
and safe to share between chains.
"""

from dataclasses import dataclass, field

import numpy as np


class LatticeError(ValueError):
    """Invalid lattice geometry or out-of-range site/direction."""


@dataclass(frozen=True)
class Lattice:
    """Periodic hypercubic lattice with precomputed neighbor tables."""

    dims: tuple
    volume: int = field(init=False)
    ndim: int = field(init=False)
    n_links: int = field(init=False)
    # neighbors[site, mu, 0] = forward neighbor, [site, mu, 1] = backward
    neighbors: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise LatticeError("dims must be non-empty")
        for d in dims:
            if d < 2:
                raise LatticeError(f"every dim must be >= 2, got {d} in {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "ndim", len(dims))
        object.__setattr__(self, "volume", int(np.prod(dims)))
        object.__setattr__(self, "n_links", self.volume * self.ndim)
        object.__setattr__(self, "neighbors", self._build_neighbors())

    def _build_neighbors(self):
        coords = self.site_coords(np.arange(self.volume))  # (volume, ndim)
        nbr = np.empty((self.volume, self.ndim, 2), dtype=np.int64)
        for mu in range(self.ndim):
            for k, shift in enumerate((+1, -1)):
                c = coords.copy()
                c[:, mu] = (c[:, mu] + shift) % self.dims[mu]
                nbr[:, mu, k] = self.coord_index(c)
        nbr.setflags(write=False)
        return nbr

    def site_coords(self, site):
        """Coordinates of site index (array-friendly), direction 0 fastest."""
        site = np.asarray(site)
        out = np.empty(site.shape + (self.ndim,), dtype=np.int64)
        rem = site
        for mu, d in enumerate(self.dims):
            out[..., mu] = rem % d
            rem = rem // d
        return out

    def coord_index(self, coords):
        """Inverse of site_coords."""
        coords = np.asarray(coords)
        idx = np.zeros(coords.shape[:-1], dtype=np.int64)
        stride = 1
        for mu, d in enumerate(self.dims):
            idx = idx + coords[..., mu] * stride
            stride *= d
        return idx

    def neighbor(self, site, mu, sign):
        """Periodic neighbor of `site` along direction mu, sign = +1 or -1."""
        if not (0 <= mu < self.ndim):
            raise LatticeError(f"direction {mu} out of range for ndim {self.ndim}")
        if sign not in (+1, -1):
            raise LatticeError(f"sign must be +1 or -1, got {sign}")
        site = int(site)
        if not (0 <= site < self.volume):
            raise LatticeError(f"site {site} out of range for volume {self.volume}")
        return int(self.neighbors[site, mu, 0 if sign > 0 else 1])

    def fwd(self, mu):
        """Array of forward-neighbor indices for every site along mu."""
        if not (0 <= mu < self.ndim):
            raise LatticeError(f"direction {mu} out of range for ndim {self.ndim}")
        return self.neighbors[:, mu, 0]

    def bwd(self, mu):
        if not (0 <= mu < self.ndim):
            raise LatticeError(f"direction {mu} out of range for ndim {self.ndim}")
        return self.neighbors[:, mu, 1]

    def links(self):
        """Iterate all (site, mu) link identifiers."""
        for site in range(self.volume):
            for mu in range(self.ndim):
                yield site, mu


def build_lattice(dims) -> Lattice:
    """Construct a validated periodic lattice; every dim must be >= 2."""
    return Lattice(tuple(dims))


def forward_diff(lat: Lattice, values, site, mu):
    """field(site + mu) - field(site) with periodic wrap (unit spacing)."""
    values = np.asarray(values)
    if values.shape[0] != lat.volume:
        raise LatticeError(
            f"field has {values.shape[0]} sites, lattice has {lat.volume}"
        )
    return values[lat.neighbor(site, mu, +1)] - values[site]


def forward_diff_all(lat: Lattice, values, mu):
    """Vectorized forward difference along mu for a whole per-site array."""
    values = np.asarray(values)
    return values[lat.fwd(mu)] - values

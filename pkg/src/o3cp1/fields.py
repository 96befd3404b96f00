"""Field containers and the spinor-to-vector (Hopf) map.

The spinor field is stored as four reals per site (Re z1, Im z1, Re z2, Im z2)
so the flat sampling measure is literally the product of those coordinates;
complex views are derived on demand. The unit 3-vector field n and the
per-link real gauge field A are plain float arrays.

Conventions: standard Pauli matrices, so n = z^dag sigma z has components
  n_x = 2 r s cos(alpha - beta)
  n_y = -2 r s sin(alpha - beta)
  n_z = r^2 - s^2
for z = (r e^{i alpha}, s e^{i beta}).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice

NORM_TOL = 1e-12
# phases are undefined on the polar chart when r or s vanishes
DEGENERATE_TOL = 1e-12

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class FieldError(ValueError):
    """Field constraint violation (normalization, shape, finiteness)."""


@dataclass
class SpinField:
    """Per-site unit 3-vector field, shape (volume, 3)."""

    n: np.ndarray

    @classmethod
    def constant(cls, lat: Lattice, vec=(0.0, 0.0, 1.0)):
        vec = np.asarray(vec, dtype=float)
        vec = vec / np.linalg.norm(vec)
        return cls(np.tile(vec, (lat.volume, 1)))

    @classmethod
    def random(cls, lat: Lattice, rng):
        return cls(random_unit_vector(rng, lat.volume))

    def check(self, tol=NORM_TOL):
        err = np.abs(np.einsum("ij,ij->i", self.n, self.n) - 1.0).max()
        if err > tol:
            raise FieldError(f"spin field not unit-norm: max |n^2-1| = {err:.3e}")

    def renormalize(self):
        self.n /= np.linalg.norm(self.n, axis=1, keepdims=True)

    def copy(self):
        return SpinField(self.n.copy())


@dataclass
class CP1Field:
    """Per-site spinor stored as reals, shape (volume, 4): Re z1, Im z1, Re z2, Im z2."""

    data: np.ndarray

    @classmethod
    def constant(cls, lat: Lattice, z=(1.0, 0.0)):
        z = np.asarray(z, dtype=complex)
        z = z / np.sqrt(np.sum(np.abs(z) ** 2))
        row = np.array([z[0].real, z[0].imag, z[1].real, z[1].imag])
        return cls(np.tile(row, (lat.volume, 1)))

    @classmethod
    def random(cls, lat: Lattice, rng):
        return cls(random_unit_spinor(rng, lat.volume))

    @classmethod
    def from_complex(cls, z):
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        data = np.empty(z.shape[:-1] + (4,), dtype=float)
        data[..., 0] = z[..., 0].real
        data[..., 1] = z[..., 0].imag
        data[..., 2] = z[..., 1].real
        data[..., 3] = z[..., 1].imag
        return cls(data)

    @property
    def z(self):
        """Complex view, shape (volume, 2)."""
        out = np.empty(self.data.shape[:-1] + (2,), dtype=complex)
        out[..., 0] = self.data[..., 0] + 1j * self.data[..., 1]
        out[..., 1] = self.data[..., 2] + 1j * self.data[..., 3]
        return out

    def check(self, tol=NORM_TOL):
        err = np.abs(np.einsum("ij,ij->i", self.data, self.data) - 1.0).max()
        if err > tol:
            raise FieldError(f"spinor field not unit-norm: max ||z|^2-1| = {err:.3e}")

    def renormalize(self):
        self.data /= np.linalg.norm(self.data, axis=1, keepdims=True)

    def copy(self):
        return CP1Field(self.data.copy())


@dataclass
class GaugeField:
    """Per-link real scalar, shape (volume, ndim); A[x, mu] lives on link (x, x+mu)."""

    a: np.ndarray

    @classmethod
    def zeros(cls, lat: Lattice):
        return cls(np.zeros((lat.volume, lat.ndim)))

    def check(self):
        if not np.all(np.isfinite(self.a)):
            raise FieldError("gauge field contains non-finite values")

    def copy(self):
        return GaugeField(self.a.copy())


@dataclass
class PolarPoint:
    """Polar view of one spinor: z = (r e^{i alpha}, s e^{i beta})."""

    r: float
    s: float
    alpha: float
    beta: float
    degenerate: bool = False


def hopf_map(z):
    """Map unit spinor(s) to unit 3-vector(s): n = z^dag sigma z.

    Accepts a single complex pair, an (N, 2) complex array, or a CP1Field.
    """
    if isinstance(z, CP1Field):
        z = z.z
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    norm2 = np.sum(np.abs(z) ** 2, axis=-1)
    if np.abs(norm2 - 1.0).max() > 1e-9:
        raise FieldError("hopf_map requires unit spinors (|z| = 1 within 1e-9)")
    w = np.conj(z[..., 0]) * z[..., 1]
    n = np.empty(z.shape[:-1] + (3,), dtype=float)
    n[..., 0] = 2.0 * w.real
    n[..., 1] = 2.0 * w.imag
    n[..., 2] = np.abs(z[..., 0]) ** 2 - np.abs(z[..., 1]) ** 2
    return n[0] if single else n


def to_polar(z) -> PolarPoint:
    """Polar decomposition of one unit spinor; undefined phases stored as 0."""
    z = np.asarray(z, dtype=complex)
    if abs(np.sum(np.abs(z) ** 2) - 1.0) > 1e-9:
        raise FieldError("to_polar requires a unit spinor")
    r = abs(z[0])
    s = abs(z[1])
    degenerate = min(r, s) < DEGENERATE_TOL
    alpha = float(np.angle(z[0])) % (2 * np.pi) if r >= DEGENERATE_TOL else 0.0
    beta = float(np.angle(z[1])) % (2 * np.pi) if s >= DEGENERATE_TOL else 0.0
    return PolarPoint(float(r), float(s), alpha, beta, degenerate)


def from_polar(p: PolarPoint):
    """Inverse of to_polar; requires r^2 + s^2 = 1."""
    if abs(p.r**2 + p.s**2 - 1.0) > 1e-9:
        raise FieldError("from_polar requires r^2 + s^2 = 1")
    return np.array(
        [p.r * np.exp(1j * p.alpha), p.s * np.exp(1j * p.beta)], dtype=complex
    )


def jacobian_polar(r, s):
    """Jacobian of (Re z1, Im z1, Re z2, Im z2) -> (r, alpha, s, beta): r*s."""
    return np.asarray(r, dtype=float) * np.asarray(s, dtype=float)


def random_unit_spinor(rng, size=None):
    """Uniform sample(s) on the unit 3-sphere of spinors, as (Re,Im,Re,Im) rows."""
    n = 1 if size is None else int(size)
    out = np.empty((n, 4))
    need = np.ones(n, dtype=bool)
    while need.any():
        draw = rng.standard_normal((int(need.sum()), 4))
        norm = np.linalg.norm(draw, axis=1)
        ok = norm > 0
        idx = np.flatnonzero(need)[ok]
        out[idx] = draw[ok] / norm[ok, None]
        need[idx] = False
    return out[0] if size is None else out


def random_unit_vector(rng, size=None):
    """Uniform sample(s) on the unit 2-sphere."""
    n = 1 if size is None else int(size)
    out = np.empty((n, 3))
    need = np.ones(n, dtype=bool)
    while need.any():
        draw = rng.standard_normal((int(need.sum()), 3))
        norm = np.linalg.norm(draw, axis=1)
        ok = norm > 0
        idx = np.flatnonzero(need)[ok]
        out[idx] = draw[ok] / norm[ok, None]
        need[idx] = False
    return out[0] if size is None else out


# --- snapshot files -------------------------------------------------------
#
# CSV column order is part of the CLI reproducibility contract:
#   spin:   site, nx, ny, nz
#   cp1:    site, re1, im1, re2, im2
#   gauge:  site, mu, a

_HEADERS = {
    "spin": ["site", "nx", "ny", "nz"],
    "cp1": ["site", "re1", "im1", "re2", "im2"],
    "gauge": ["site", "mu", "a"],
}


def save_field_csv(path, field):
    """Dump a field to CSV with full float precision."""
    if isinstance(field, SpinField):
        kind = "spin"
        rows = [(i, *(repr(float(v)) for v in row)) for i, row in enumerate(field.n)]
    elif isinstance(field, CP1Field):
        kind = "cp1"
        rows = [(i, *(repr(float(v)) for v in row)) for i, row in enumerate(field.data)]
    elif isinstance(field, GaugeField):
        kind = "gauge"
        rows = [
            (i, mu, repr(float(field.a[i, mu])))
            for i in range(field.a.shape[0])
            for mu in range(field.a.shape[1])
        ]
    else:
        raise FieldError(f"cannot save field of type {type(field).__name__}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADERS[kind])
        writer.writerows(rows)


def load_field_csv(path):
    """Load a field dumped by save_field_csv; kind is inferred from the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header == _HEADERS["spin"]:
        n = np.array([[float(v) for v in row[1:]] for row in rows])
        return SpinField(n)
    if header == _HEADERS["cp1"]:
        data = np.array([[float(v) for v in row[1:]] for row in rows])
        return CP1Field(data)
    if header == _HEADERS["gauge"]:
        sites = sorted({int(row[0]) for row in rows})
        mus = sorted({int(row[1]) for row in rows})
        a = np.empty((len(sites), len(mus)))
        for row in rows:
            a[int(row[0]), int(row[1])] = float(row[2])
        return GaugeField(a)
    raise FieldError(f"unrecognized snapshot header: {header}")

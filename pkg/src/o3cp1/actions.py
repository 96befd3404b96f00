"""Action functionals for the spin and spinor models plus gauge machinery.

All lattice actions use forward differences; the covariant difference on a
link (x, mu) is z(x+mu) - z(x) - i A_mu(x) z(x), which keeps the per-link
gauge integral exactly Gaussian:

    integral dA exp(-(A^2 - 2 A b)/g) = sqrt(pi g) exp(b^2 / g),
    b = Im z(x)^dag z(x+mu).

Dropping the gauge field at its optimum A* = b gives the reduced per-link
term (|dz|^2 - b^2)/g = (2 - 2 Re w - (Im w)^2)/g with w = z(x)^dag z(x+mu).

Constant prefactors such as the per-link sqrt(pi g) are tracked as log
constants (see partition_constants) and never multiplied into Boltzmann
weights.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .fields import CP1Field, GaugeField, SpinField
from .lattice import Lattice


class ActionError(ValueError):
    """Invalid input to an action evaluator."""


class QuadratureError(RuntimeError):
    """A numeric integral failed to reach its requested accuracy."""


@dataclass(frozen=True)
class Coupling:
    """Positive dimensionless coupling strength."""

    g: float

    def __post_init__(self):
        if not (self.g > 0):
            raise ActionError(f"coupling must be positive, got {self.g}")


def _check_g(g):
    if isinstance(g, Coupling):
        return g.g
    if not (float(g) > 0):
        raise ActionError(f"coupling must be positive, got {g}")
    return float(g)


def action_o3(lat: Lattice, spin: SpinField, g) -> float:
    """S = (1/4g) sum_links |n(x+mu) - n(x)|^2; zero iff n is constant."""
    g = _check_g(g)
    spin.check(tol=1e-9)
    n = spin.n
    total = 0.0
    for mu in range(lat.ndim):
        d = n[lat.fwd(mu)] - n
        total += float(np.einsum("ij,ij->", d, d))
    return total / (4.0 * g)


def link_overlaps(lat: Lattice, zf: CP1Field):
    """w[x, mu] = z(x)^dag z(x+mu) for every link, shape (volume, ndim) complex."""
    z = zf.z
    w = np.empty((lat.volume, lat.ndim), dtype=complex)
    for mu in range(lat.ndim):
        w[:, mu] = np.einsum("ij,ij->i", np.conj(z), z[lat.fwd(mu)])
    return w


def action_cp1_gauged(lat: Lattice, zf: CP1Field, gauge: GaugeField, g) -> float:
    """S = (1/g) sum_links |z(x+mu) - z(x) - i A_mu(x) z(x)|^2."""
    g = _check_g(g)
    zf.check(tol=1e-9)
    gauge.check()
    z = zf.z
    total = 0.0
    for mu in range(lat.ndim):
        cov = z[lat.fwd(mu)] - z - 1j * gauge.a[:, mu, None] * z
        total += float(np.sum(np.abs(cov) ** 2))
    return total / g


def action_cp1_reduced(lat: Lattice, zf: CP1Field, g) -> float:
    """Gauge-marginalized action: (1/g) sum_links [ |dz|^2 - (Im z^dag dz)^2 ]."""
    g = _check_g(g)
    zf.check(tol=1e-9)
    w = link_overlaps(lat, zf)
    per_link = 2.0 - 2.0 * w.real - w.imag**2
    return float(np.sum(per_link)) / g


def action_o3_pullback(lat: Lattice, zf: CP1Field, g) -> float:
    """O(3) action of hopf(z); per link (1 - |w|^2) = (1/4)|dn|^2 with unit spinors."""
    g = _check_g(g)
    zf.check(tol=1e-9)
    w = link_overlaps(lat, zf)
    per_link = 1.0 - np.abs(w) ** 2
    return float(np.sum(per_link)) / g


def optimal_gauge(lat: Lattice, zf: CP1Field) -> GaugeField:
    """Minimizer of the gauged action over A: A*_mu(x) = Im z(x)^dag z(x+mu)."""
    zf.check(tol=1e-9)
    return GaugeField(link_overlaps(lat, zf).imag.copy())


@dataclass
class MarginalResult:
    """Numeric per-link gauge integral with its diagnostics."""

    value: float
    closed_form: float
    quad_error: float
    tail_bound: float

    def __float__(self):
        return self.value


def gauge_marginal_closed_form(b, g) -> float:
    """sqrt(pi g) * exp(b^2 / g)."""
    g = _check_g(g)
    return math.sqrt(math.pi * g) * math.exp(b * b / g)


def marginalize_gauge_numeric(
    lat: Lattice, zf: CP1Field, site, mu, g, half_width=10.0, rel_tol=1e-8
) -> MarginalResult:
    """Numerically integrate the gauge link weight exp(-(A^2 - 2Ab)/g) over A.

    The infinite range is truncated to cover both [-K sqrt(g), K sqrt(g)] and
    the same window centered on the Gaussian mean b; the neglected tail is
    bounded by sqrt(pi g) erfc(K) exp(b^2/g) and reported.
    """
    g = _check_g(g)
    if half_width < 8.0:
        raise ActionError("half_width must be >= 8 (tail below target accuracy)")
    z = zf.z
    b = float(
        np.imag(np.vdot(z[site], z[lat.neighbor(site, mu, +1)]))
    )  # vdot conjugates its first argument
    span = half_width * math.sqrt(g)
    lo, hi = min(-span, b - span), max(span, b + span)
    value, err = integrate.quad(
        lambda a: math.exp(-(a * a - 2.0 * a * b) / g),
        lo,
        hi,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    closed = gauge_marginal_closed_form(b, g)
    # distance from the mean b to the nearest cutoff, in units of sqrt(g)
    k_eff = min(b - lo, hi - b) / math.sqrt(g)
    tail = math.sqrt(math.pi * g) * float(special.erfc(k_eff)) * math.exp(b * b / g)
    if err > rel_tol * abs(value):
        raise QuadratureError(
            f"gauge marginalization did not converge: "
            f"achieved error {err:.3e} vs target {rel_tol * abs(value):.3e}"
        )
    return MarginalResult(value, closed, err, tail)


def partition_constants(lat: Lattice, g) -> dict:
    """Analytically known partition-function prefactors, kept as logs.

    On the lattice the gauge integral contributes sqrt(pi g) per link and the
    spinor-to-vector measure change pi/2 per site, so the exact constant is
    (pi g)^(n_links/2) * (pi/2)^volume. The conventional continuum bookkeeping
    instead counts a factor pi*g per gauge component per site, giving the
    formal per-site constant (pi g)^D * pi/2 (= pi^3 g^2 / 2 in D = 2); both
    are recorded, the discrepancy is a normalization convention that cancels
    in every observable.
    """
    g = _check_g(g)
    log_link = 0.5 * math.log(math.pi * g)
    log_site = math.log(math.pi / 2.0)
    return {
        "log_gauge_per_link": log_link,
        "log_measure_per_site": log_site,
        "log_total_lattice": lat.n_links * log_link + lat.volume * log_site,
        "per_site_lattice_factor": math.exp(lat.ndim * log_link + log_site),
        "per_site_formal_factor": (math.pi * g) ** lat.ndim * math.pi / 2.0,
    }


# --- smooth analytic test fields -------------------------------------------
#
# A probe supplies closed-form (r, s, alpha, beta) with exact first
# derivatives and r^2 + s^2 = 1 built in via r = cos(u), s = sin(u). It lets
# the continuum kinetic identity be checked pointwise, where it is exact,
# rather than through finite differences.


class _FourierScalar:
    """f(x) = c0 + sum_j a_j cos(k_j . x + p_j) with exact gradient."""

    def __init__(self, c0, amps, waves, phases):
        self.c0 = float(c0)
        self.amps = np.asarray(amps, dtype=float)
        self.waves = np.asarray(waves, dtype=float)  # (modes, ndim)
        self.phases = np.asarray(phases, dtype=float)

    def value(self, x):
        x = np.atleast_2d(x)
        arg = x @ self.waves.T + self.phases
        return self.c0 + np.cos(arg) @ self.amps

    def grad(self, x):
        x = np.atleast_2d(x)
        arg = x @ self.waves.T + self.phases  # (N, modes)
        return -(np.sin(arg) * self.amps) @ self.waves  # (N, ndim)

    @classmethod
    def random(cls, rng, ndim, c0, max_total_amp, n_modes, max_mode=2):
        amps = rng.uniform(0.2, 1.0, n_modes)
        amps *= max_total_amp / amps.sum()
        waves = np.zeros((n_modes, ndim))
        while np.any(np.all(waves == 0, axis=1)):
            waves = rng.integers(-max_mode, max_mode + 1, (n_modes, ndim)).astype(float)
        waves *= 2.0 * np.pi
        phases = rng.uniform(0.0, 2.0 * np.pi, n_modes)
        return cls(c0, amps, waves, phases)


@dataclass
class AnalyticFieldProbe:
    """Smooth field (r, s, alpha, beta)(x) on the unit torus with exact derivatives.

    r = cos(u), s = sin(u) with u kept inside (margin, pi/2 - margin), so
    r^2 + s^2 = 1 holds identically and its derivative vanishes exactly.
    """

    u: _FourierScalar
    alpha: _FourierScalar
    beta: _FourierScalar
    ndim: int

    @classmethod
    def random(cls, rng, ndim=1, n_modes=2, margin=0.15, max_mode=2, angle_amp=1.0):
        half_range = np.pi / 4.0 - margin
        u = _FourierScalar.random(rng, ndim, np.pi / 4.0, 0.9 * half_range, n_modes, max_mode)
        alpha = _FourierScalar.random(rng, ndim, 0.0, angle_amp, n_modes, max_mode)
        beta = _FourierScalar.random(rng, ndim, 0.0, angle_amp, n_modes, max_mode)
        return cls(u, alpha, beta, ndim)

    def polar(self, x):
        """(r, s, alpha, beta) at points x, each shape (N,)."""
        u = self.u.value(x)
        return np.cos(u), np.sin(u), self.alpha.value(x), self.beta.value(x)

    def polar_grad(self, x):
        """(dr, ds, dalpha, dbeta) at points x, each shape (N, ndim)."""
        u = self.u.value(x)
        du = self.u.grad(x)
        dr = -np.sin(u)[:, None] * du
        ds = np.cos(u)[:, None] * du
        return dr, ds, self.alpha.grad(x), self.beta.grad(x)

    def spinor(self, x):
        """Unit spinors at points x, shape (N, 2) complex."""
        r, s, a, b = self.polar(x)
        return np.stack([r * np.exp(1j * a), s * np.exp(1j * b)], axis=-1)

    def self_check(self, x, h=1e-5, tol=1e-6):
        """Constraint and derivative consistency at points x.

        The supplied derivative of r^2 + s^2 must vanish; every analytic
        derivative must match a central finite difference within O(h^2).
        """
        x = np.atleast_2d(x)
        r, s, _, _ = self.polar(x)
        dr, ds, da, db = self.polar_grad(x)
        constraint = np.abs(2 * r[:, None] * dr + 2 * s[:, None] * ds).max()
        if constraint > 1e-12:
            raise ActionError(f"probe violates d(r^2+s^2) = 0: {constraint:.3e}")
        worst = 0.0
        for mu in range(self.ndim):
            e = np.zeros(self.ndim)
            e[mu] = h
            for fun, grad in (
                (lambda p: np.cos(self.u.value(p)), dr),
                (lambda p: np.sin(self.u.value(p)), ds),
                (self.alpha.value, da),
                (self.beta.value, db),
            ):
                fd = (fun(x + e) - fun(x - e)) / (2 * h)
                worst = max(worst, float(np.abs(fd - grad[:, mu]).max()))
        if worst > tol:
            raise ActionError(f"probe derivative mismatch vs central diff: {worst:.3e}")
        return worst


def polar_action_density(probe: AnalyticFieldProbe, x, g):
    """(1/g) sum_mu [ r^2 s^2 (da - db)^2 + dr^2 + ds^2 ] at points x."""
    g = _check_g(g)
    r, s, _, _ = probe.polar(x)
    dr, ds, da, db = probe.polar_grad(x)
    rs2 = (r * s) ** 2
    return (rs2[:, None] * (da - db) ** 2 + dr**2 + ds**2).sum(axis=1) / g


def o3_action_density_from_polar(probe: AnalyticFieldProbe, x, g):
    """(1/4g) sum_mu |d_mu n|^2 with d_mu n obtained by the chain rule.

    Uses the Jacobian of n(r, s, alpha, beta) so the comparison against
    polar_action_density is exact, not a finite-difference approximation.
    """
    g = _check_g(g)
    r, s, a, b = probe.polar(x)
    dr, ds, da, db = probe.polar_grad(x)
    phi = a - b
    c, si = np.cos(phi), np.sin(phi)
    # rows: n_x, n_y, n_z; columns: d/dr, d/ds, d/dalpha, d/dbeta
    jac = np.empty((len(r), 3, 4))
    jac[:, 0, 0] = 2 * s * c
    jac[:, 0, 1] = 2 * r * c
    jac[:, 0, 2] = -2 * r * s * si
    jac[:, 0, 3] = 2 * r * s * si
    jac[:, 1, 0] = -2 * s * si
    jac[:, 1, 1] = -2 * r * si
    jac[:, 1, 2] = -2 * r * s * c
    jac[:, 1, 3] = 2 * r * s * c
    jac[:, 2, 0] = 2 * r
    jac[:, 2, 1] = -2 * s
    jac[:, 2, 2] = 0.0
    jac[:, 2, 3] = 0.0
    grads = np.stack([dr, ds, da, db], axis=-1)  # (N, ndim, 4)
    dn = np.einsum("nab,nmb->nma", jac, grads)  # (N, ndim, 3)
    return (dn**2).sum(axis=(1, 2)) / (4.0 * g)


def polar_identity_max_violation(probe: AnalyticFieldProbe, x, g=1.0) -> float:
    """Max pointwise gap between the two kinetic densities at points x."""
    lhs = o3_action_density_from_polar(probe, x, g)
    rhs = polar_action_density(probe, x, g)
    return float(np.abs(lhs - rhs).max())


def probe_spinor_field(probe: AnalyticFieldProbe, lat: Lattice) -> CP1Field:
    """Sample the probe on a lattice, mapping site coords to the unit torus."""
    coords = lat.site_coords(np.arange(lat.volume)).astype(float)
    coords /= np.asarray(lat.dims, dtype=float)
    return CP1Field.from_complex(probe.spinor(coords))

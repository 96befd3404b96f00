"""Metropolis / Gibbs sampling of the spin and spinor models.

Five chain flavors share one engine:

  o3                   unit 3-vector field, kinetic action (1/4g) sum |dn|^2
  cp1-pullback         spinor field weighted by the o3 action of hopf(z); the
                       weight depends on z only through n, so observables of n
                       match the o3 chain exactly (in law)
  cp1-reduced          spinor field under the gauge-marginalized action
  cp1-gauged-reduced   joint (z, A) chain under the covariant-difference
                       action; its z-marginal is exactly cp1-reduced
  cp1-gauged-pullback  joint (z, A) chain with the matter part replaced by the
                       pullback action (the A-conditional Gaussian is
                       unchanged); its n-observables match o3 exactly

In both gauged flavors the joint weight factorizes as
exp(-(A - A*)^2/g) * exp(-S_matter(z)) with A* = Im z(x)^dag z(x+mu), so the
gauge field is resampled exactly from its Gaussian conditional
(mean A*, variance g/2).

Matter updates are single-site Metropolis. On bipartite lattices (all dims
even) a sweep updates the two checkerboard parities in turn, vectorized;
neighbors of one parity all belong to the other, so simultaneous updates are
independent. Otherwise sites are updated one at a time in index order.
Self-check mode forces the serial path and compares every accepted local
action change against a full-action recomputation.

Reproducibility: a chain's generator is PCG64 seeded from
SeedSequence(master_seed).spawn(n_chains)[chain_index]; identical
configuration and master seed reproduce identical series bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .actions import (
    action_cp1_gauged,
    action_cp1_reduced,
    action_o3,
    action_o3_pullback,
    link_overlaps,
)
from .fields import CP1Field, GaugeField, SpinField, hopf_map
from .lattice import Lattice

MODELS = (
    "o3",
    "cp1-pullback",
    "cp1-reduced",
    "cp1-gauged-reduced",
    "cp1-gauged-pullback",
)

SELF_CHECK_TOL = 1e-9


class McError(RuntimeError):
    """Sampling-contract violation (bad model tag, self-check failure, ...)."""


@dataclass
class ObservableSeries:
    """Tagged Monte Carlo series with binning metadata."""

    name: str
    values: np.ndarray
    bin_size: int = 1
    therm_cutoff: int = 0


def jackknife(series: ObservableSeries):
    """Binned jackknife (mean, standard error); needs >= 20 bins after cutoff."""
    vals = np.asarray(series.values, dtype=float)[series.therm_cutoff :]
    b = int(series.bin_size)
    if b < 1:
        raise McError(f"bin size must be >= 1, got {b}")
    n_bins = len(vals) // b
    if n_bins < 20:
        raise McError(
            f"jackknife needs >= 20 bins after cutoff, got {n_bins} "
            f"({len(vals)} values at bin size {b})"
        )
    bins = vals[: n_bins * b].reshape(n_bins, b).mean(axis=1)
    total = bins.sum()
    leave_one_out = (total - bins) / (n_bins - 1)
    mean = float(bins.mean())
    err = math.sqrt((n_bins - 1) / n_bins * float(((leave_one_out - mean) ** 2).sum()))
    return mean, err


@dataclass
class ChainState:
    """One Markov chain: lattice, model tag, field buffers, proposal width, rng."""

    lat: Lattice
    model: str
    g: float
    delta: float
    rng: np.random.Generator
    spin: SpinField = None
    zfield: CP1Field = None
    zc: np.ndarray = None  # complex view cache of zfield, kept in sync
    nfield: np.ndarray = None  # hopf(z) cache for spinor chains
    gauge: GaugeField = None
    sweeps_done: int = 0
    self_check: bool = False
    _parities: tuple = field(default=None, repr=False)

    @property
    def is_spinor(self):
        return self.model != "o3"

    @property
    def is_gauged(self):
        return self.model.startswith("cp1-gauged")

    @property
    def matter_base(self):
        """Which per-link matter term weights the spinor chain."""
        if self.model in ("cp1-pullback", "cp1-gauged-pullback"):
            return "pullback"
        return "reduced"


def init_chain(lat, model, g, rng, delta=0.5, self_check=False, hot=True) -> ChainState:
    if model not in MODELS:
        raise McError(f"unknown model {model!r}; expected one of {MODELS}")
    if not (g > 0):
        raise McError(f"coupling must be positive, got {g}")
    state = ChainState(lat=lat, model=model, g=float(g), delta=float(delta), rng=rng,
                       self_check=self_check)
    if model == "o3":
        state.spin = SpinField.random(lat, rng) if hot else SpinField.constant(lat)
    else:
        state.zfield = CP1Field.random(lat, rng) if hot else CP1Field.constant(lat)
        state.zc = state.zfield.z
        state.nfield = hopf_map(state.zc)
        if state.is_gauged:
            state.gauge = GaugeField.zeros(lat)
            gibbs_gauge_update(state)
    return state


def total_action(state: ChainState) -> float:
    """Full action of the current configuration (reference for self-checks)."""
    lat, g = state.lat, state.g
    if state.model == "o3":
        return action_o3(lat, state.spin, g)
    if state.model == "cp1-pullback":
        return action_o3_pullback(lat, state.zfield, g)
    if state.model == "cp1-reduced":
        return action_cp1_reduced(lat, state.zfield, g)
    if state.model == "cp1-gauged-reduced":
        # per link, (A - A*)^2/g + reduced term equals the covariant action
        return action_cp1_gauged(lat, state.zfield, state.gauge, g)
    astar = link_overlaps(lat, state.zfield).imag
    gauss = float(np.sum((state.gauge.a - astar) ** 2)) / g
    return gauss + action_o3_pullback(lat, state.zfield, g)


# --- local action terms ------------------------------------------------------


def _local_terms_spin(state, sites, n_at_sites):
    """Sum of per-link o3 terms over all links touching each site."""
    nbr = state.lat.neighbors[sites]  # (k, ndim, 2)
    n_nbr = state.spin.n[nbr]  # (k, ndim, 2, 3)
    diff = n_nbr - n_at_sites[:, None, None, :]
    return (diff * diff).sum(axis=(1, 2, 3)) / (4.0 * state.g)


def _local_terms_z(state, sites, z_at_sites):
    """Sum of per-link matter (+ gauge) terms over all links touching each site."""
    lat, g = state.lat, state.g
    z = state.zc
    zbar = np.conj(z_at_sites)
    total = np.zeros(len(sites))
    pullback = state.matter_base == "pullback"
    for mu in range(lat.ndim):
        fwd = lat.neighbors[sites, mu, 0]
        bwd = lat.neighbors[sites, mu, 1]
        w_f = (zbar * z[fwd]).sum(axis=1)
        w_b = (np.conj(z[bwd]) * z_at_sites).sum(axis=1)
        for w, link_site in ((w_f, sites), (w_b, bwd)):
            if pullback:
                total += 1.0 - (w.real**2 + w.imag**2)
            else:
                total += 2.0 - 2.0 * w.real - w.imag**2
            if state.is_gauged:
                total += (state.gauge.a[link_site, mu] - w.imag) ** 2
    return total / g


def _propose_spin(state, n_old):
    """Cone proposal: rotate about a random axis orthogonal to n by U[0, delta]."""
    k = len(n_old)
    axis = state.rng.standard_normal((k, 3))
    axis -= np.einsum("kc,kc->k", axis, n_old)[:, None] * n_old
    norm = np.linalg.norm(axis, axis=1)
    while np.any(norm < 1e-12):  # rare: drawn vector parallel to n
        bad = norm < 1e-12
        axis[bad] = state.rng.standard_normal((int(bad.sum()), 3))
        axis[bad] -= np.einsum("kc,kc->k", axis[bad], n_old[bad])[:, None] * n_old[bad]
        norm = np.linalg.norm(axis, axis=1)
    axis /= norm[:, None]
    theta = state.rng.uniform(0.0, state.delta, k)
    n_new = np.cos(theta)[:, None] * n_old + np.sin(theta)[:, None] * np.cross(axis, n_old)
    n_new /= np.linalg.norm(n_new, axis=1, keepdims=True)
    return n_new


def _propose_z(state, z_old):
    """Additive Gaussian kick, renormalized: z' = normalize(z + delta * eta)."""
    k = len(z_old)
    eta = state.rng.standard_normal((k, 4))
    z_new = z_old + state.delta * (eta[:, 0::2] + 1j * eta[:, 1::2])
    z_new /= np.sqrt(np.sum(np.abs(z_new) ** 2, axis=1, keepdims=True))
    return z_new


def _update_batch(state, sites):
    """Metropolis-update a batch of mutually non-interacting sites; returns accept count."""
    k = len(sites)
    both = np.concatenate([sites, sites])
    if state.model == "o3":
        old = state.spin.n[sites]
        new = _propose_spin(state, old)
        terms = _local_terms_spin(state, both, np.concatenate([new, old]))
    else:
        old = state.zc[sites]
        new = _propose_z(state, old)
        terms = _local_terms_z(state, both, np.concatenate([new, old]))
    ds = terms[:k] - terms[k:]
    accept = state.rng.uniform(size=k) < np.exp(np.minimum(-ds, 0.0))
    acc_sites = sites[accept]
    if len(acc_sites):
        if state.model == "o3":
            state.spin.n[acc_sites] = new[accept]
        else:
            rows = new[accept]
            state.zc[acc_sites] = rows
            state.zfield.data[acc_sites, 0] = rows[:, 0].real
            state.zfield.data[acc_sites, 1] = rows[:, 0].imag
            state.zfield.data[acc_sites, 2] = rows[:, 1].real
            state.zfield.data[acc_sites, 3] = rows[:, 1].imag
            w = np.conj(rows[:, 0]) * rows[:, 1]
            state.nfield[acc_sites, 0] = 2.0 * w.real
            state.nfield[acc_sites, 1] = 2.0 * w.imag
            state.nfield[acc_sites, 2] = (
                rows[:, 0].real ** 2 + rows[:, 0].imag ** 2
                - rows[:, 1].real ** 2 - rows[:, 1].imag ** 2
            )
    return int(accept.sum()), ds, accept


def _sweep_serial(state):
    """Site-by-site sweep; in self-check mode verifies every accepted move."""
    accepted = 0
    for site in range(state.lat.volume):
        sites = np.array([site])
        before = total_action(state) if state.self_check else None
        n_acc, ds, acc_mask = _update_batch(state, sites)
        accepted += n_acc
        if state.self_check and n_acc:
            after = total_action(state)
            gap = abs((after - before) - float(ds[0]))
            if gap > SELF_CHECK_TOL:
                raise McError(
                    f"local action change disagrees with full recomputation by "
                    f"{gap:.3e} at site {site} (model {state.model})"
                )
    return accepted


def _bipartite(lat: Lattice):
    return all(d % 2 == 0 for d in lat.dims)


def _parity_masks(lat: Lattice):
    coords = lat.site_coords(np.arange(lat.volume))
    parity = coords.sum(axis=1) % 2
    return np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)


def metropolis_sweep(state: ChainState) -> float:
    """One full-lattice sweep of single-site proposals; returns acceptance rate.

    With delta = 0 proposals are identities and the rate is exactly 1.
    """
    if state.delta == 0.0:
        state.sweeps_done += 1
        return 1.0
    if state.self_check or not _bipartite(state.lat):
        accepted = _sweep_serial(state)
    else:
        if state._parities is None:
            state._parities = _parity_masks(state.lat)
        accepted = 0
        for sites in state._parities:
            accepted += _update_batch(state, sites)[0]
    state.sweeps_done += 1
    return accepted / state.lat.volume


def gibbs_gauge_update(state: ChainState):
    """Resample every link exactly from its Gaussian conditional N(A*, g/2)."""
    if not state.is_gauged:
        raise McError(f"gauge update requires a gauged model, got {state.model}")
    lat, z = state.lat, state.zc
    zbar = np.conj(z)
    astar = np.empty((lat.volume, lat.ndim))
    for mu in range(lat.ndim):
        astar[:, mu] = (zbar * z[lat.fwd(mu)]).sum(axis=1).imag
    noise = state.rng.standard_normal(astar.shape)
    state.gauge.a[:] = astar + math.sqrt(state.g / 2.0) * noise


def chain_sweep(state: ChainState) -> float:
    """Matter sweep plus, for gauged chains, an exact gauge refresh."""
    rate = metropolis_sweep(state)
    if state.is_gauged:
        gibbs_gauge_update(state)
    return rate


def tune_proposal(state: ChainState, acceptance, target=0.5, clip=(0.5, 2.0)):
    """Multiplicative proposal-width adjustment toward the target acceptance.

    Only valid during thermalization; the driver freezes delta afterwards.
    """
    factor = min(max(acceptance / target, clip[0]), clip[1])
    cap = math.pi if state.model == "o3" else 4.0
    state.delta = min(max(state.delta * factor, 1e-4), cap)
    return state.delta


# --- observables -------------------------------------------------------------


def spin_view(state: ChainState) -> np.ndarray:
    """The unit-vector field the chain induces: n itself or hopf(z)."""
    return state.spin.n if state.model == "o3" else state.nfield


def _shift_indices(lat: Lattice, rvec):
    coords = lat.site_coords(np.arange(lat.volume))
    shifted = (coords + np.asarray(rvec, dtype=np.int64)) % np.asarray(lat.dims)
    return lat.coord_index(shifted)


def correlator(lat: Lattice, snapshots, rvec) -> ObservableSeries:
    """Translation-averaged <n(x) . n(x+r)> per snapshot for separation vector r.

    Components of r beyond half the lattice extent are rejected (the periodic
    image would alias the separation).
    """
    rvec = np.asarray(rvec, dtype=np.int64)
    for mu, (r, d) in enumerate(zip(rvec, lat.dims)):
        if abs(int(r)) > d // 2:
            raise McError(f"separation {r} along direction {mu} exceeds {d}//2")
    idx = _shift_indices(lat, rvec)
    vals = np.array(
        [float(np.einsum("ij,ij->", n, n[idx])) / lat.volume for n in snapshots]
    )
    name = "corr_" + "x".join(str(int(r)) for r in rvec)
    return ObservableSeries(name, vals)


class _Measurer:
    """Per-sweep scalar observables: energy density and axis-averaged correlators."""

    def __init__(self, lat: Lattice, g, r_max):
        self.lat = lat
        self.g = g
        self.r_values = [r for r in range(1, r_max + 1)]
        self.shifts = {
            r: [_shift_indices(lat, r * np.eye(lat.ndim, dtype=int)[mu])
                for mu in range(lat.ndim)]
            for r in self.r_values
        }

    def names(self):
        return ["energy"] + [f"corr_r{r}" for r in self.r_values]

    def measure(self, n):
        lat = self.lat
        energy = 0.0
        for mu in range(lat.ndim):
            d = n[lat.fwd(mu)] - n
            energy += float((d * d).sum())
        row = [energy / (4.0 * self.g * lat.volume)]
        for r in self.r_values:
            c = sum(float((n * n[idx]).sum()) for idx in self.shifts[r])
            row.append(c / (lat.ndim * lat.volume))
        return row


@dataclass
class ChainResult:
    model: str
    dims: tuple
    g: float
    sweeps: int
    thermalization: int
    seed_spawn_key: tuple
    delta: float
    acceptance: float
    series: dict  # name -> ObservableSeries
    state: ChainState = field(repr=False, default=None)

    def summary(self):
        out = {
            "model": self.model,
            "dims": list(self.dims),
            "g": self.g,
            "sweeps": self.sweeps,
            "thermalization": self.thermalization,
            "delta": self.delta,
            "acceptance": self.acceptance,
            "observables": {},
        }
        for name, series in sorted(self.series.items()):
            bins = int((len(series.values) - series.therm_cutoff) // series.bin_size)
            entry = {"bins": bins, "bin_size": series.bin_size}
            try:
                entry["mean"], entry["error"] = jackknife(series)
            except McError:
                entry["mean"] = float(np.mean(series.values[series.therm_cutoff :]))
                entry["error"] = None  # too few bins for a jackknife error bar
            out["observables"][name] = entry
        return out


def default_thermalization(sweeps: int) -> int:
    """Fixed-fraction thermalization: 10% of sweeps, at least 1000."""
    return max(sweeps // 10, 1000)


def run_chain(
    lat: Lattice,
    model: str,
    g: float,
    sweeps: int,
    seed_seq: np.random.SeedSequence,
    thermalization=None,
    delta0=0.5,
    r_max=None,
    tune_window=50,
    self_check=False,
) -> ChainResult:
    """Thermalize (tuning the proposal), then sweep and measure every sweep.

    The proposal width is frozen at the end of thermalization, before any
    measurement. Observables: o3-pullback energy density and direction-averaged
    correlators at integer separations r = 1..r_max (default min(dims)//2,
    capped at 4).
    """
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    state = init_chain(lat, model, g, rng, delta=delta0, self_check=self_check)
    therm = default_thermalization(sweeps) if thermalization is None else thermalization
    if r_max is None:
        r_max = min(4, min(lat.dims) // 2)
    measurer = _Measurer(lat, g, r_max)

    window_acc = []
    for i in range(therm):
        window_acc.append(chain_sweep(state))
        if (i + 1) % tune_window == 0:
            tune_proposal(state, float(np.mean(window_acc[-tune_window:])))

    names = measurer.names()
    data = np.empty((sweeps, len(names)))
    acc = 0.0
    for i in range(sweeps):
        acc += chain_sweep(state)
        data[i] = measurer.measure(spin_view(state))
    bin_size = max(1, sweeps // 50)
    series = {
        name: ObservableSeries(name, data[:, j].copy(), bin_size=bin_size)
        for j, name in enumerate(names)
    }
    return ChainResult(
        model=model,
        dims=lat.dims,
        g=g,
        sweeps=sweeps,
        thermalization=therm,
        seed_spawn_key=tuple(seed_seq.spawn_key),
        delta=state.delta,
        acceptance=acc / sweeps,
        series=series,
        state=state,
    )


def _run_chain_task(args):
    lat, model, g, sweeps, seed_seq, kwargs = args
    return run_chain(lat, model, g, sweeps, seed_seq, **kwargs)


def run_chains(lat, models, g, sweeps, master_seed, processes=1, **kwargs):
    """Run one chain per model tag, optionally in parallel processes.

    Chain i draws its generator from SeedSequence(master_seed).spawn(len(models))[i]
    regardless of execution order, so results are reproducible and identical
    between serial and parallel runs.
    """
    seqs = np.random.SeedSequence(master_seed).spawn(len(models))
    tasks = [(lat, m, g, sweeps, seqs[i], kwargs) for i, m in enumerate(models)]
    if processes <= 1 or len(models) == 1:
        return [_run_chain_task(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(processes, len(models))) as pool:
        return list(pool.map(_run_chain_task, tasks))


# --- small-system quadrature references ---------------------------------------
#
# On the two-site chain every model's <n(0) . n(1)> reduces to a one- or
# two-dimensional integral of its own Boltzmann weight, evaluated through the
# same action code paths the sampler uses.


def two_site_exact(model: str, g: float, n_nodes=None) -> float:
    """<n(0) . n(1)> on dims [2] by direct quadrature of the model's weight.

    o3 / pullback flavors: reduce by global rotation to the relative polar
    angle, weight exp(-S(theta)) with uniform sphere measure sin(theta).
    reduced / gauged-reduced: reduce by invariance to w = z(0)^dag z(1); the
    flat spinor-sphere measure pushes to the uniform disk |w| <= 1 (the
    marginal of one unit spinor component), and n(0).n(1) = 2|w|^2 - 1.
    Gauged flavors share their matter marginal's value exactly.
    """
    from numpy.polynomial.legendre import leggauss

    from .lattice import build_lattice

    lat2 = build_lattice([2])
    if model in ("o3", "cp1-pullback", "cp1-gauged-pullback"):
        n_nodes = 400 if n_nodes is None else n_nodes
        x, wq = leggauss(n_nodes)
        theta = 0.5 * (x + 1.0) * math.pi
        wt = 0.5 * math.pi * wq * np.sin(theta)
        s_vals = np.empty(n_nodes)
        for i, t in enumerate(theta):
            spin = SpinField(np.array([[0.0, 0.0, 1.0], [math.sin(t), 0.0, math.cos(t)]]))
            s_vals[i] = action_o3(lat2, spin, g)
        weight = wt * np.exp(-(s_vals - s_vals.min()))
        return float(np.sum(weight * np.cos(theta)) / np.sum(weight))
    if model in ("cp1-reduced", "cp1-gauged-reduced"):
        n_nodes = 96 if n_nodes is None else n_nodes
        x, wq = leggauss(n_nodes)
        rho = 0.5 * (x + 1.0)  # |w| in [0, 1]
        psi = 0.5 * (x + 1.0) * 2.0 * math.pi
        s_vals = np.empty((n_nodes, n_nodes))
        for i, rh in enumerate(rho):
            z2 = math.sqrt(max(1.0 - rh * rh, 0.0))
            for j, ps in enumerate(psi):
                z1 = rh * complex(math.cos(ps), math.sin(ps))
                zf = CP1Field.from_complex(np.array([[1.0 + 0.0j, 0.0j], [z1, z2]]))
                s_vals[i, j] = action_cp1_reduced(lat2, zf, g)
        wgt = np.outer(0.5 * wq * rho, 0.5 * 2.0 * math.pi * wq)
        weight = wgt * np.exp(-(s_vals - s_vals.min()))
        obs = 2.0 * rho[:, None] ** 2 - 1.0
        return float(np.sum(weight * obs) / np.sum(weight))
    raise McError(f"no two-site reference for model {model!r}")

import numpy as np
import pytest

from o3cp1.lattice import Lattice, LatticeError, build_lattice, forward_diff, forward_diff_all


def test_build_examples():
    assert (build_lattice([4]).volume, build_lattice([4]).n_links) == (4, 4)
    lat = build_lattice([8, 8])
    assert (lat.volume, lat.n_links) == (64, 128)
    lat3 = build_lattice([2, 2, 2])
    assert (lat3.volume, lat3.n_links) == (8, 24)


def test_build_rejects_bad_dims():
    with pytest.raises(LatticeError):
        build_lattice([])
    with pytest.raises(LatticeError):
        build_lattice([4, 1])
    with pytest.raises(LatticeError):
        build_lattice([0])


def test_neighbor_examples():
    lat = build_lattice([4])
    assert lat.neighbor(3, 0, +1) == 0
    assert lat.neighbor(0, 0, -1) == 3
    # row-major, direction 0 fastest
    assert build_lattice([2, 2]).neighbor(0, 1, +1) == 2


def test_neighbor_rejects_out_of_range():
    lat = build_lattice([4, 4])
    with pytest.raises(LatticeError):
        lat.neighbor(16, 0, +1)
    with pytest.raises(LatticeError):
        lat.neighbor(0, 2, +1)
    with pytest.raises(LatticeError):
        lat.neighbor(0, 0, 0)


@pytest.mark.parametrize("dims", [[2], [4], [5], [3, 4], [2, 2, 3], [4, 4]])
def test_neighbor_round_trip_and_bijection(dims):
    lat = build_lattice(dims)
    for mu in range(lat.ndim):
        fwd = lat.neighbors[:, mu, 0]
        bwd = lat.neighbors[:, mu, 1]
        assert np.array_equal(bwd[fwd], np.arange(lat.volume))
        assert np.array_equal(fwd[bwd], np.arange(lat.volume))
        # bijection: every site appears exactly once as a forward neighbor
        assert len(set(fwd.tolist())) == lat.volume


@pytest.mark.parametrize("dims", [[3], [4, 5], [2, 3, 4]])
def test_coord_index_round_trip(dims):
    lat = build_lattice(dims)
    sites = np.arange(lat.volume)
    coords = lat.site_coords(sites)
    assert np.array_equal(lat.coord_index(coords), sites)
    assert coords.min() >= 0
    assert np.all(coords.max(axis=0) == np.array(dims) - 1)


def test_forward_diff_examples():
    lat = build_lattice([4])
    f = np.array([0.0, 1.0, 2.0, 3.0])
    assert forward_diff(lat, f, 1, 0) == 1.0
    assert forward_diff(lat, f, 3, 0) == -3.0
    const = np.full(4, 2.5)
    assert all(forward_diff(lat, const, s, 0) == 0.0 for s in range(4))


def test_forward_diff_telescoping_sum():
    rng = np.random.default_rng(5)
    lat = build_lattice([3, 4])
    f = rng.standard_normal(lat.volume)
    for mu in range(lat.ndim):
        assert abs(forward_diff_all(lat, f, mu).sum()) < 1e-12


def test_forward_diff_shape_mismatch():
    lat = build_lattice([4])
    with pytest.raises(LatticeError):
        forward_diff(lat, np.zeros(5), 0, 0)


def test_lattice_immutable():
    lat = build_lattice([4])
    with pytest.raises(Exception):
        lat.volume = 5
    assert not lat.neighbors.flags.writeable

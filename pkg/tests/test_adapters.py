import numpy as np
import pytest

from pdectrl import adapters
from pdectrl.adapters import (DescriptorSet, Partition, gaussian_adapter, make_descriptors,
                              partition_adapter, repeat_adapter)
from pdectrl.errors import ConfigurationError, DomainError, ShapeMismatchError


def test_gaussian_single_descriptor_at_centre():
    c = DescriptorSet(np.array([0.0]))
    for sigma in (0.1, 1.0, 7.0):
        out = gaussian_adapter(c, [2.0], sigma, [[0.0]])
        assert out[0] == pytest.approx(2.0)


def test_gaussian_zero_scalars():
    c = DescriptorSet(np.array([-1.0, 0.0, 1.0]))
    out = gaussian_adapter(c, [0.0, 0.0, 0.0], 0.5, np.linspace(-2, 2, 11))
    assert np.all(out == 0.0)


def test_gaussian_two_descriptor_value():
    c = DescriptorSet(np.array([-1.0, 1.0]))
    out = gaussian_adapter(c, [1.0, 1.0], 1.0, [[0.0]])
    assert out[0] == pytest.approx(2.0 * np.exp(-0.5), rel=1e-12)


def _gaussian_reference(coords, u, sigma, queries):
    out = []
    for z in queries:
        acc = 0.0
        for ci, ui in zip(coords, u):
            acc += np.exp(-np.sum((z - ci) ** 2) / (2.0 * sigma**2)) * ui
        out.append(acc)
    return np.array(out)


def test_gaussian_matches_closed_form_on_random_probes():
    rng = np.random.default_rng(2)
    c = DescriptorSet(rng.normal(size=(5, 2)))
    u = rng.normal(size=5)
    q = rng.normal(size=(100, 2))
    got = gaussian_adapter(c, u, 0.7, q)
    ref = _gaussian_reference(c.coords, u, 0.7, q)
    assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_gaussian_linear_in_u():
    rng = np.random.default_rng(3)
    c = DescriptorSet(rng.normal(size=(4, 1)))
    u = rng.normal(size=4)
    w = rng.normal(size=4)
    q = rng.normal(size=(20, 1))
    a, b = 0.3, -1.7
    lhs = gaussian_adapter(c, a * u + b * w, 0.5, q)
    rhs = a * gaussian_adapter(c, u, 0.5, q) + b * gaussian_adapter(c, w, 0.5, q)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_gaussian_lipschitz_bound_sampled():
    # slope between any two points never exceeds sum |u_i| e^{-1/2} / sigma
    rng = np.random.default_rng(4)
    c = DescriptorSet(rng.normal(size=(4, 2)))
    u = rng.normal(size=4)
    sigma = 0.8
    bound = np.sum(np.abs(u)) * np.exp(-0.5) / sigma
    z1 = rng.normal(size=(300, 2))
    z2 = z1 + rng.normal(scale=1e-3, size=(300, 2))
    v1 = gaussian_adapter(c, u, sigma, z1)
    v2 = gaussian_adapter(c, u, sigma, z2)
    slopes = np.abs(v1 - v2) / np.linalg.norm(z1 - z2, axis=1)
    assert np.all(slopes <= bound * (1 + 1e-9))


def test_gaussian_sharpens_to_exact_interpolation():
    c = DescriptorSet(np.array([-1.0, 0.0, 1.0]))
    u = np.array([0.3, -0.8, 1.5])
    out = gaussian_adapter(c, u, 1e-3, c.coords)
    assert np.max(np.abs(out - u)) < 1e-6


def test_gaussian_length_mismatch():
    c = DescriptorSet(np.array([0.0, 1.0]))
    with pytest.raises(ShapeMismatchError):
        gaussian_adapter(c, [1.0], 1.0, [[0.0]])


def test_partition_single_cell_covers_everything():
    c = DescriptorSet(np.array([[0.0, 0.0]]))
    part = Partition(c, lo=(-1, -1), hi=(1, 1))
    q = np.random.default_rng(5).uniform(-1, 1, size=(50, 2))
    out = partition_adapter(c, part, [0.7], q)
    assert np.all(out == 0.7)


def test_partition_returns_exact_value_at_descriptors():
    rng = np.random.default_rng(6)
    c = DescriptorSet(rng.uniform(-1, 1, size=(7, 2)))
    part = Partition(c, lo=(-1, -1), hi=(1, 1))
    u = rng.normal(size=7)
    out = partition_adapter(c, part, u, c.coords)
    np.testing.assert_array_equal(out, u)


def test_partition_identity_reshuffle_on_grid():
    # descriptors at the 4x4 cell centres: the adapter becomes a bijection
    d = 4
    centers = (np.arange(d) + 0.5) / d - 0.5
    xg, yg = np.meshgrid(centers, centers)
    coords = np.column_stack([xg.ravel(), yg.ravel()])
    c = DescriptorSet(coords)
    part = Partition(c, lo=(-0.5, -0.5), hi=(0.5, 0.5))
    u = np.arange(16.0)
    out = partition_adapter(c, part, u, coords)
    np.testing.assert_array_equal(out, u)


def test_partition_piecewise_constant():
    c = DescriptorSet(np.array([[-0.5], [0.5]]))
    part = Partition(c, lo=(-1,), hi=(1,))
    u = [3.0, -4.0]
    # two queries in the same (left) cell
    out = partition_adapter(c, part, u, [[-0.9], [-0.1]])
    assert out[0] == out[1] == 3.0


def test_partition_tie_breaks_toward_lower_index():
    c = DescriptorSet(np.array([[-1.0], [1.0]]))
    part = Partition(c, lo=(-1,), hi=(1,))
    assert part.assign([[0.0]])[0] == 0


def test_partition_domain_error():
    c = DescriptorSet(np.array([[0.0]]))
    part = Partition(c, lo=(-1,), hi=(1,))
    with pytest.raises(DomainError):
        part.assign([[1.5]])


def test_partition_linear_in_u():
    rng = np.random.default_rng(7)
    c = DescriptorSet(rng.uniform(-1, 1, size=(5, 1)))
    part = Partition(c, lo=(-1,), hi=(1,))
    u = rng.normal(size=5)
    w = rng.normal(size=5)
    q = rng.uniform(-1, 1, size=(30, 1))
    lhs = partition_adapter(c, part, 2.0 * u - 0.5 * w, q)
    rhs = 2.0 * partition_adapter(c, part, u, q) - 0.5 * partition_adapter(c, part, w, q)
    np.testing.assert_array_equal(lhs, rhs)


def _repeat_reference(u):
    """Spell the block-duplication layout out in loops, as an oracle."""
    k = len(u)
    grid = np.zeros((4, 50))
    for r in range(4):
        for col in range(50):
            if k == 200:
                grid[r, col] = u[r * 50 + col]
            elif k == 100:
                grid[r, col] = u[(r // 2) * 50 + col]
            elif k == 50:
                grid[r, col] = u[col]
            elif k == 25:
                grid[r, col] = u[col // 2]
            else:
                grid[r, col] = u[0]
    return grid.reshape(200)


@pytest.mark.parametrize("k", [1, 25, 50, 100, 200])
def test_repeat_adapter_layouts(k):
    u = np.arange(k, dtype=float) + 1.0
    np.testing.assert_array_equal(repeat_adapter(u), _repeat_reference(u))


def test_repeat_adapter_identity_and_constant():
    v = np.random.default_rng(8).normal(size=200)
    np.testing.assert_array_equal(repeat_adapter(v), v)
    np.testing.assert_array_equal(repeat_adapter([-0.3]), np.full(200, -0.3))


def test_repeat_adapter_k25_column_pairs():
    u = np.arange(25.0)
    out = repeat_adapter(u).reshape(4, 50)
    for r in range(4):
        for j in range(25):
            assert out[r, 2 * j] == out[r, 2 * j + 1] == u[j]


def test_repeat_adapter_preserves_entry_set():
    u = np.random.default_rng(9).normal(size=25)
    out = repeat_adapter(u)
    assert set(np.unique(out)) == set(np.unique(u))


def test_repeat_adapter_unsupported_k():
    with pytest.raises(ConfigurationError):
        repeat_adapter(np.zeros(30))


def test_make_descriptors_heat_invader_segment():
    d2 = make_descriptors("heat_invader", 2)
    np.testing.assert_array_equal(d2.coords.ravel(), [-1.0, 1.0])
    d5 = make_descriptors("heat_invader", 5)
    np.testing.assert_allclose(d5.coords.ravel(), np.linspace(-1, 1, 5))
    d1 = make_descriptors("heat_invader", 1)
    assert d1.coords.ravel()[0] == 0.0


def test_make_descriptors_heat_invader_100_and_200():
    d100 = make_descriptors("heat_invader", 100)
    assert d100.dim == 2
    xs = d100.coords[:, 0]
    assert np.sum(xs == -1.0) == 50 and np.sum(xs == 1.0) == 50
    d200 = make_descriptors("heat_invader", 200)
    assert sorted(set(d200.coords[:, 0])) == pytest.approx([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0])
    assert d200.k == 200


def test_make_descriptors_pde_lattice():
    d = make_descriptors("pde_model", 36)
    assert d.k == 36 and d.dim == 2
    assert np.all(d.coords >= -0.5) and np.all(d.coords <= 0.5)
    # 6 distinct values per axis
    assert len(set(d.coords[:, 0])) == 6 and len(set(d.coords[:, 1])) == 6


def test_make_descriptors_errors():
    with pytest.raises(ConfigurationError):
        make_descriptors("pde_model", 35)
    with pytest.raises(ConfigurationError):
        make_descriptors("heat_invader", 60)
    with pytest.raises(ConfigurationError):
        make_descriptors("nope", 4)


def test_descriptor_set_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    d = DescriptorSet(rng.normal(size=(6, 2)))
    path = tmp_path / "descriptors.txt"
    d.save(path)
    loaded = DescriptorSet.load(path)
    np.testing.assert_array_equal(d.coords, loaded.coords)
    assert adapters.DescriptorSet.from_text(d.to_text()).k == 6


def test_descriptor_set_validation():
    with pytest.raises(ValueError):
        DescriptorSet(np.array([[0.0], [0.0]]))
    with pytest.raises(ShapeMismatchError):
        DescriptorSet(np.zeros((0, 1)))

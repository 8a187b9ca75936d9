import numpy as np
import pytest

from pdectrl import gradcheck, nn
from pdectrl.errors import ConfigurationError, ShapeMismatchError, StaleCacheError
from pdectrl.nn import (DenseLayer, Network, NetworkSpec, apply_update, backward, clone_network,
                        entropy_bounds, forward, init_network, lipschitz_bound, load_network,
                        save_network)


def dense_net(weights_and_biases, activations, vec_width, aux_width=0):
    """Hand-built dense stack for exact-value tests."""
    layers = [DenseLayer(W, b, act) for (W, b), act in zip(weights_and_biases, activations)]
    if aux_width:
        layers.insert(0, nn.ConcatAuxLayer(vec_width, aux_width))
    spec = NetworkSpec(vec_width=vec_width, aux_width=aux_width,
                       hidden=tuple(len(b) for _, b in weights_and_biases[:-1]),
                       out_dim=len(weights_and_biases[-1][1]),
                       out_activation=activations[-1])
    return Network(spec, layers)


# ---------------------------------------------------------------------------
# initialization

def test_final_layer_init_bounds():
    spec = NetworkSpec(grid_shape=(4, 4), hidden=(8,), out_dim=5, out_activation="tanh")
    net = init_network(spec, np.random.default_rng(0))
    final = net.layers[-1]
    assert np.max(np.abs(final.W)) <= 3e-4
    assert np.max(np.abs(final.b)) <= 3e-4


def test_xavier_bound_dense():
    # 4 -> 4 layer: |w| <= sqrt(6 / 8)
    spec = NetworkSpec(vec_width=4, hidden=(4,), out_dim=1)
    net = init_network(spec, np.random.default_rng(1))
    hidden = net.layers[0]
    bound = np.sqrt(6.0 / 8.0)
    assert np.max(np.abs(hidden.W)) <= bound
    assert np.all(hidden.b == 0.0)


def test_init_deterministic_per_seed():
    spec = NetworkSpec(grid_shape=(5, 5), aux_width=2, conv=((2, 3),), hidden=(6,), out_dim=2)
    a = init_network(spec, np.random.default_rng(7))
    b = init_network(spec, np.random.default_rng(7))
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa, pb)


def test_conv_xavier_fan():
    spec = NetworkSpec(grid_shape=(6, 6), conv=((4, 3),), hidden=(5,), out_dim=1)
    net = init_network(spec, np.random.default_rng(2))
    conv = net.layers[0]
    fan_in, fan_out = 1 * 9, 4 * 9
    assert np.max(np.abs(conv.W)) <= np.sqrt(6.0 / (fan_in + fan_out))


# ---------------------------------------------------------------------------
# forward

def test_forward_zero_network_outputs_zero():
    net = dense_net([(np.zeros((3, 2)), np.zeros(3))], ["linear"], vec_width=2)
    out, _ = forward(net, np.array([1.5, -2.0]))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_forward_affine_value():
    net = dense_net([(np.array([[2.0]]), np.array([1.0]))], ["linear"], vec_width=1)
    out, _ = forward(net, np.array([3.0]))
    assert out[0] == 7.0


def test_forward_relu_clamps():
    net = dense_net([(np.array([[-1.0]]), np.array([0.0]))], ["relu"], vec_width=1)
    out, _ = forward(net, np.array([5.0]))
    assert out[0] == 0.0


def test_forward_bit_deterministic():
    rng = np.random.default_rng(3)
    spec = NetworkSpec(grid_shape=(5, 5), aux_width=3, conv=((2, 3),), hidden=(7,), out_dim=2,
                       out_activation="sigmoid")
    net = init_network(spec, rng)
    x = rng.normal(size=(4, 5, 5))
    aux = rng.normal(size=(4, 3))
    o1, _ = forward(net, x, aux)
    o2, _ = forward(net, x, aux)
    np.testing.assert_array_equal(o1, o2)


def test_forward_shape_errors():
    spec = NetworkSpec(vec_width=4, hidden=(3,), out_dim=1)
    net = init_network(spec, np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        forward(net, np.zeros(5))
    with pytest.raises(ShapeMismatchError):
        forward(net, np.zeros(4), np.zeros(2))  # no aux expected
    spec2 = NetworkSpec(vec_width=4, aux_width=2, hidden=(3,), out_dim=1)
    net2 = init_network(spec2, np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        forward(net2, np.zeros(4))  # aux required


# ---------------------------------------------------------------------------
# backward

def test_linear_weight_gradient_is_input():
    net = dense_net([(np.array([[0.7]]), np.array([0.0]))], ["linear"], vec_width=1)
    x = np.array([2.5])
    out, cache = forward(net, x)
    grads = backward(net, cache, np.array([1.0]))
    assert grads.layers[-1][0][0, 0] == 2.5


def test_gradients_match_finite_differences_sample():
    # the full 50-config sweep runs in the acceptance suite
    results = gradcheck.network_suite(n_configs=12, seed=3)
    for r in results:
        assert r.passed, f"{r.name}: max rel err {r.max_rel_err}"


def test_aux_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    spec = NetworkSpec(grid_shape=(4, 4), aux_width=3, hidden=(6,), out_dim=1)
    net = init_network(spec, rng)
    gradcheck._scramble(net, rng)
    x = rng.normal(size=(2, 4, 4))
    aux = rng.normal(size=(2, 3))
    worst = gradcheck.check_network(net, x, aux, rng)
    assert worst < gradcheck.REL_TOL


def test_stale_cache_detected():
    rng = np.random.default_rng(5)
    spec = NetworkSpec(vec_width=3, hidden=(4,), out_dim=1)
    net = init_network(spec, rng)
    out, cache = forward(net, np.ones(3))
    grads = backward(net, cache, np.ones(1))
    apply_update(net, grads, lr=0.01)
    with pytest.raises(StaleCacheError):
        backward(net, cache, np.ones(1))


# ---------------------------------------------------------------------------
# updates

def test_apply_update_zero_lr_is_noop():
    rng = np.random.default_rng(6)
    spec = NetworkSpec(vec_width=3, hidden=(4,), out_dim=2)
    net = init_network(spec, rng)
    before = [p.copy() for p in net.parameters()]
    out, cache = forward(net, np.ones(3))
    grads = backward(net, cache, np.ones(2))
    apply_update(net, grads, lr=0.0, l2_decay=0.001)
    for p, q in zip(net.parameters(), before):
        np.testing.assert_array_equal(p, q)


def test_apply_update_arithmetic():
    net = dense_net([(np.array([[1.0]]), np.array([0.0]))], ["linear"], vec_width=1)
    grads = nn.GradientSet(layers=[(np.array([[2.0]]), np.array([0.0]))])
    apply_update(net, grads, lr=0.1)
    assert net.layers[0].W[0, 0] == pytest.approx(0.8)


def test_apply_update_decay_only():
    net = dense_net([(np.array([[1.0]]), np.array([0.0]))], ["linear"], vec_width=1)
    grads = nn.GradientSet(layers=[(np.array([[0.0]]), np.array([0.0]))])
    apply_update(net, grads, lr=0.1, l2_decay=0.001)
    assert net.layers[0].W[0, 0] == pytest.approx(0.9999)


def test_decay_skips_conv_layers():
    rng = np.random.default_rng(8)
    spec = NetworkSpec(grid_shape=(5, 5), conv=((2, 3),), hidden=(4,), out_dim=1)
    net = init_network(spec, rng)
    w_conv = net.layers[0].W.copy()
    out, cache = forward(net, rng.normal(size=(5, 5)))
    grads = backward(net, cache, np.ones(1))
    zeroed = nn.GradientSet(layers=[(np.zeros_like(g[0]), np.zeros_like(g[1]))
                                    if g is not None else None for g in grads.layers])
    apply_update(net, zeroed, lr=0.5, l2_decay=0.01)
    np.testing.assert_array_equal(net.layers[0].W, w_conv)  # conv untouched
    assert not np.array_equal(net.layers[-1].W, np.zeros_like(net.layers[-1].W))


# ---------------------------------------------------------------------------
# Lipschitz bound

def test_single_linear_layer_bound_is_weight_norm():
    net = dense_net([(np.array([[3.0]]), np.array([0.0]))], ["linear"], vec_width=1)
    assert lipschitz_bound(net, 2) == pytest.approx(3.0)


def test_composition_multiplies_constants():
    # diagonal weights make every induced norm explicit: |W1| = 2, |W2| = 5
    w1 = np.diag([2.0, 1.0])
    w2 = np.array([[5.0, 0.0]])
    net = dense_net([(w1, np.zeros(2)), (w2, np.zeros(1))], ["relu", "linear"], vec_width=2)
    assert lipschitz_bound(net, 2) == pytest.approx(10.0)
    assert lipschitz_bound(net, np.inf) == pytest.approx(10.0)


def test_spectral_norm_against_independent_oracle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        w = rng.normal(size=(rng.integers(2, 9), rng.integers(2, 9)))
        net = dense_net([(w, np.zeros(w.shape[0]))], ["linear"], vec_width=w.shape[1])
        # independent route: largest eigenvalue of W^T W
        oracle = float(np.sqrt(np.max(np.linalg.eigvalsh(w.T @ w))))
        assert lipschitz_bound(net, 2) == pytest.approx(oracle, rel=1e-10)


def test_sigmoid_counts_quarter_lipschitz():
    net = dense_net([(np.array([[4.0]]), np.array([0.0]))], ["sigmoid"], vec_width=1)
    assert lipschitz_bound(net, 2) == pytest.approx(1.0)  # 0.25 * 4


def _empirical_slope(net, rng, n_pairs=300):
    spec = net.spec
    worst = 0.0
    for _ in range(n_pairs):
        if spec.grid_shape:
            x1 = rng.normal(size=spec.grid_shape)
            x2 = rng.normal(size=spec.grid_shape)
        else:
            x1 = rng.normal(size=spec.vec_width)
            x2 = rng.normal(size=spec.vec_width)
        if spec.aux_width:
            a1 = rng.normal(size=spec.aux_width)
            a2 = rng.normal(size=spec.aux_width)
            o1, _ = forward(net, x1, a1)
            o2, _ = forward(net, x2, a2)
            dist = np.sqrt(np.sum((x1 - x2) ** 2) + np.sum((a1 - a2) ** 2))
        else:
            o1, _ = forward(net, x1)
            o2, _ = forward(net, x2)
            dist = np.sqrt(np.sum((x1 - x2) ** 2))
        worst = max(worst, np.linalg.norm(o1 - o2) / dist)
    return worst


def test_bound_dominates_sampled_slopes():
    rng = np.random.default_rng(10)
    for i in range(5):
        spec = NetworkSpec(grid_shape=(4, 4), aux_width=(0, 2)[i % 2],
                           conv=((2, 2),) if i % 2 else (),
                           hidden=(5,), out_dim=2,
                           out_activation=("tanh", "linear", "sigmoid", "relu")[i % 4])
        if spec.aux_width and spec.conv:
            spec = NetworkSpec(grid_shape=(4, 4), aux_width=2, conv=((2, 2),), hidden=(5,),
                               out_dim=2)
        net = init_network(spec, rng)
        gradcheck._scramble(net, rng, scale=0.8)
        bound = lipschitz_bound(net, 2)
        assert _empirical_slope(net, rng) <= bound * (1 + 1e-9)


def test_conv_unrolled_norm_against_basis_oracle():
    rng = np.random.default_rng(11)
    spec = NetworkSpec(grid_shape=(5, 5), conv=((2, 3),), hidden=(4,), out_dim=1)
    net = init_network(spec, rng)
    gradcheck._scramble(net, rng)
    conv = net.layers[0]
    m = nn._conv_unrolled_matrix(conv)
    # oracle: push basis vectors through the forward path (linear part)
    conv_zero_b = nn.Conv2DLayer(conv.W, np.zeros_like(conv.b), "linear", conv.input_shape)
    cols = []
    for i in range(25):
        x = np.zeros((1, 1, 5, 5))
        x.reshape(-1)[i] = 1.0
        c = nn._im2col(x, 3, 3)
        out = c @ conv_zero_b.W.reshape(2, -1).T
        cols.append(out.transpose(0, 2, 1).reshape(-1))
    oracle = np.column_stack(cols)
    np.testing.assert_allclose(m, oracle, atol=1e-14)


# ---------------------------------------------------------------------------
# entropy bounds

def test_entropy_bounds_plug_in_values():
    b_lip, b_sep = entropy_bounds(1.0, 2.0, 2, 3.0, 3.0, 1.0, 1.0)
    assert b_lip == pytest.approx(7.0)
    assert b_sep == pytest.approx(12.0)


def test_entropy_bounds_ordering_sweep():
    # with c1 = c2, logN_half >= logN >= 1 and (L/eps)^d >= 1, the separate
    # class bound dominates whenever (L/eps)^d (logN_half - 1) >= logN
    rng = np.random.default_rng(12)
    for _ in range(200):
        L = rng.uniform(1.0, 5.0)
        eps = rng.uniform(0.1, 1.0)
        d = int(rng.integers(1, 4))
        log_n = rng.uniform(1.0, 4.0)
        log_n_half = log_n + rng.uniform(0.0, 2.0)
        c = rng.uniform(0.5, 2.0)
        b_lip, b_sep = entropy_bounds(eps, L, d, log_n, log_n_half, c, c)
        ratio = (L / eps) ** d
        if ratio >= 1.0 and c * ratio * (log_n_half - 1.0) >= log_n:
            assert b_sep >= b_lip - 1e-12


def test_entropy_bounds_rejects_nonpositive():
    with pytest.raises(ValueError):
        entropy_bounds(0.0, 1.0, 2, 1.0, 1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(13)
    spec = NetworkSpec(grid_shape=(5, 5), aux_width=2, conv=((2, 3),), hidden=(6, 4), out_dim=2,
                       out_activation="tanh")
    net = init_network(spec, rng)
    path = tmp_path / "net.npz"
    save_network(net, path)
    loaded = load_network(path)
    for p, q in zip(net.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(p, q)
    x = rng.normal(size=(5, 5))
    aux = rng.normal(size=2)
    o1, _ = forward(net, x, aux)
    o2, _ = forward(loaded, x, aux)
    np.testing.assert_array_equal(o1, o2)


def test_checkpoint_rejects_unknown_format(tmp_path):
    import json

    path = tmp_path / "bogus.npz"
    np.savez(path, header=np.frombuffer(json.dumps({"format": "other"}).encode(), dtype=np.uint8))
    with pytest.raises(ConfigurationError):
        load_network(path)


def test_clone_is_independent():
    rng = np.random.default_rng(14)
    spec = NetworkSpec(vec_width=3, hidden=(4,), out_dim=1)
    net = init_network(spec, rng)
    twin = clone_network(net)
    twin.layers[0].W += 1.0
    assert not np.array_equal(net.layers[0].W, twin.layers[0].W)

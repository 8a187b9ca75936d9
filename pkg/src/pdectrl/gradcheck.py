"""Central-finite-difference verification of the backpropagation engine.

Checks every parameter gradient, the auxiliary-input gradient, and the
composite actor-through-critic chain for all three actor variants, against
(f(t + h) - f(t - h)) / 2h with h = 1e-5 in float64. An entry passes when
its relative error is below the tolerance, or its absolute error is below
an 1e-8 floor (for gradients that are legitimately ~0, e.g. dead relu
paths).
"""

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import nn
from .adapters import DescriptorSet
from .ddpg import ArchConfig, make_actor, make_critic

FD_STEP = 1e-5
REL_TOL = 1e-5
ABS_FLOOR = 1e-8


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    n_checked: int
    passed: bool


def _param_arrays(net):
    for layer in net.layers:
        if layer.kind in ("dense", "conv2d"):
            yield layer, layer.W
            yield layer, layer.b


def _entry_errors(analytic, numeric):
    err = abs(analytic - numeric)
    if err < ABS_FLOOR:
        return 0.0
    return err / max(abs(analytic), abs(numeric), 1e-12)


def check_network(net, x, aux, rng) -> float:
    """Max relative error over every parameter entry and (when present)
    every auxiliary-input entry of d(upstream . output)/d(theta)."""
    out, cache = nn.forward(net, x, aux)
    upstream = rng.normal(size=out.shape)
    grads = nn.backward(net, cache, upstream)

    def objective():
        o, _ = nn.forward(net, x, aux)
        return float(np.sum(o * upstream))

    worst = 0.0
    for li, layer in enumerate(net.layers):
        if grads.layers[li] is None:
            continue
        for arr, g in zip((layer.W, layer.b), grads.layers[li]):
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + FD_STEP
                net.version += 1  # parameters changed under the cache's feet
                fp = objective()
                flat[i] = old - FD_STEP
                fm = objective()
                flat[i] = old
                net.version += 1
                worst = max(worst, _entry_errors(gflat[i], (fp - fm) / (2 * FD_STEP)))

    if aux is not None:
        aux = np.asarray(aux, dtype=np.float64)
        gaux = np.asarray(grads.aux_input_grad).reshape(-1)
        flat = aux.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + FD_STEP
            fp = objective()
            flat[i] = old - FD_STEP
            fm = objective()
            flat[i] = old
            worst = max(worst, _entry_errors(gaux[i], (fp - fm) / (2 * FD_STEP)))
    return worst


def _scramble(net, rng, scale=0.6):
    """Replace initialization with O(1) random parameters so gradients are
    well away from zero."""
    for _, arr in _param_arrays(net):
        arr[...] = rng.normal(0.0, scale, size=arr.shape)
    net.version += 1


def network_suite(n_configs: int = 50, seed: int = 0) -> list[CheckResult]:
    """Random small networks cycling through layer kinds (dense, conv2d,
    concat junctions) and all activations."""
    rng = np.random.default_rng(seed)
    activations = ("relu", "tanh", "sigmoid", "linear")
    results = []
    for i in range(n_configs):
        use_conv = i % 2 == 0
        aux_w = (0, 2, 3)[i % 3]
        hidden_act = activations[i % 4]
        out_act = activations[(i // 4) % 4]
        side = int(rng.integers(4, 7))
        spec = nn.NetworkSpec(
            grid_shape=(side, side),
            aux_width=aux_w,
            conv=((int(rng.integers(1, 3)), int(rng.integers(2, 4))),) if use_conv else (),
            hidden=(int(rng.integers(3, 7)),),
            hidden_activation=hidden_act,
            out_dim=int(rng.integers(1, 4)),
            out_activation=out_act,
        )
        net = nn.init_network(spec, rng)
        _scramble(net, rng)
        batch = int(rng.integers(1, 4))
        x = rng.normal(size=(batch, side, side))
        aux = rng.normal(size=(batch, aux_w)) if aux_w else None
        worst = check_network(net, x, aux, rng)
        name = (f"net[{i:02d}] conv={use_conv} aux={aux_w} "
                f"acts={hidden_act}/{out_act}")
        results.append(CheckResult(name, worst, batch, worst < REL_TOL))
    return results


def _composite_objective(actor, critic, states):
    u, _ = actor.forward_batch(states)
    q, _ = nn.forward(critic, states, u)
    return float(np.mean(q))


def _composite_analytic(actor, critic, states):
    n = states.shape[0]
    u, ctx = actor.forward_batch(states)
    _, cache = nn.forward(critic, states, u)
    d_u = nn.backward(critic, cache, np.ones((n, 1))).aux_input_grad / n
    return actor.backward_batch(ctx, d_u)


def _grads_per_network(actor, grads):
    if actor.name == "separate":
        trunk_grads, head_grads = grads
        return [trunk_grads] + list(head_grads)
    return [grads]


def check_composite(variant: str, seed: int = 0) -> CheckResult:
    """Algorithm chain rule check: d/dtheta of mean_i Q(x_i, f_theta(x_i))
    against central differences over every actor parameter."""
    rng = np.random.default_rng(seed)
    side, k = 4, 3
    descriptors = DescriptorSet(np.linspace(-1.0, 1.0, k))
    arch = ArchConfig(conv=(), hidden=(5, 4))
    actor = make_actor(variant, side, descriptors, arch, "tanh", -1.0, 1.0, rng)
    critic = make_critic(side, k, arch, rng)
    for net in actor.networks() + [critic]:
        _scramble(net, rng)
    states = rng.normal(size=(2, side, side))

    grads = _composite_analytic(actor, critic, states)
    per_net = _grads_per_network(actor, grads)

    worst = 0.0
    checked = 0
    for net, gset in zip(actor.networks(), per_net):
        for li, layer in enumerate(net.layers):
            if gset.layers[li] is None:
                continue
            for arr, g in zip((layer.W, layer.b), gset.layers[li]):
                flat = arr.reshape(-1)
                gflat = g.reshape(-1)
                for i in range(flat.size):
                    old = flat[i]
                    flat[i] = old + FD_STEP
                    fp = _composite_objective(actor, critic, states)
                    flat[i] = old - FD_STEP
                    fm = _composite_objective(actor, critic, states)
                    flat[i] = old
                    worst = max(worst, _entry_errors(gflat[i], (fp - fm) / (2 * FD_STEP)))
                    checked += 1
    return CheckResult(f"composite[{variant}]", worst, checked, worst < REL_TOL)


def full_suite(n_configs: int = 50, seed: int = 0) -> list[CheckResult]:
    with threadpool_limits(limits=1):
        results = network_suite(n_configs, seed)
        for variant in ("vector", "separate", "descriptor"):
            results.append(check_composite(variant, seed))
    return results

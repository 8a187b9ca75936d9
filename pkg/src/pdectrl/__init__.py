"""pdectrl: PDE control with descriptor-based deterministic policy gradients.

A desk-scale toolkit: two finite-difference PDE environments, action
descriptor adapters, a gradient-checked feedforward network engine, three
DDPG actor variants, and a seeded experiment harness with CSV and figure
reports.
"""

from .adapters import DescriptorSet, Partition, gaussian_adapter, make_descriptors, \
    partition_adapter, repeat_adapter
from .ddpg import ArchConfig, DescriptorActor, ReplayBuffer, SeparateActor, TrainConfig, \
    TransitionSample, VectorActor, make_actor, make_critic, select_action, soft_update, train_run
from .envs import HeatInvaderEnv, PDEModelEnv, StepResult, airflow_field, fan_trigger
from .fields import ScalarField2D, VelocityField2D, advect, l2_norm, laplacian
from .harness import AggregateCurve, ExperimentSpec, aggregate, evaluate_window, render_curves, sweep
from .nn import Network, NetworkSpec, apply_update, backward, entropy_bounds, forward, \
    init_network, lipschitz_bound, load_network, save_network

__version__ = "0.1.0"

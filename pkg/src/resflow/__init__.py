"""Residual networks as explicit integrators of diffeomorphic flows."""
from .analysis import AnalysisGrid, decision_boundary, flow_jacobian_det, jacobian_map, trajectories
from .data import LabeledSet, SpiralConfig, make_spiral, sample_domain
from .diffeng import Tape
from .flow import FlowModel, IntegrationDivergence, backward_flow, compose_check, forward
from .losses import ClassifierHead, LossConfig, bce, total_loss
from .trainer import AdamState, TrainConfig, adam_step, glorot_init, init_model, train
from .velocity import VelocityField

__version__ = "0.1.0"

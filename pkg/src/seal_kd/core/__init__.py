"""Autodiff engine, spiking network, objectives, diagnostics, energy and training."""

from .autodiff import NonFiniteError, ShapeError, Tape, TapeError, Tensor, backward, grad_check
from .data import Dataset, DatasetError, SyntheticSpec, gen_synthetic, load_csv, write_csv
from .energy import EnergyModel, SpikeTrace, count_acs, count_macs, fire_rate, sop
from .losses import DistillConfig, TeacherLogits, objective
from .snn import CheckpointError, LIFParams, NetSpec, SpikingNet, TemporalLogits, forward_temporal
from .teacher import LogitFileError, TeacherNet, train_teacher
from .training import TrainingDivergedError, TrainPlan, train_student

__all__ = [
    'Tensor', 'Tape', 'backward', 'grad_check', 'ShapeError', 'TapeError', 'NonFiniteError',
    'Dataset', 'DatasetError', 'SyntheticSpec', 'gen_synthetic', 'load_csv', 'write_csv',
    'EnergyModel', 'SpikeTrace', 'count_acs', 'count_macs', 'fire_rate', 'sop',
    'DistillConfig', 'TeacherLogits', 'objective',
    'LIFParams', 'NetSpec', 'SpikingNet', 'TemporalLogits', 'forward_temporal', 'CheckpointError',
    'TeacherNet', 'LogitFileError', 'train_teacher',
    'TrainPlan', 'TrainingDivergedError', 'train_student',
]

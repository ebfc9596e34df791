"""Dipolar rotor chain ground states and their reconstruction with a multinomial RBM.

Modules
-------
basis        free-rotor labels, configurations and symmetry sectors
hamiltonian  matrix-free kinetic plus dipolar Hamiltonian
eigensolver  ground state and first gap (dense or Lanczos)
signs        sign structure of the ground state
sampling     exact projective measurements and dataset files
rbm          multinomial RBM, Gibbs sampling and CD-k training
estimators   Monte Carlo energy, learning criterion and symmetry checks
experiments  command line drivers
"""
from .basis import HilbertSpace, label_decode, label_encode, one_hot
from .eigensolver import GroundStateSolution, amplitude_ratio, ground_state
from .estimators import EnergyEvaluator, delta, energy_rbm, symmetry_violation_fraction
from .hamiltonian import SparseHamiltonian, build_hamiltonian
from .rbm import RbmParameters, TrainingConfig, gibbs_sample, load_params, save_params, train
from .sampling import MeasurementDataset, read_dataset, sample_exact, write_dataset
from .signs import partition_signs, sign_metrics

__version__ = "0.1.0"

__all__ = [
    "HilbertSpace", "label_decode", "label_encode", "one_hot", "GroundStateSolution", "amplitude_ratio",
    "ground_state", "EnergyEvaluator", "delta", "energy_rbm", "symmetry_violation_fraction", "SparseHamiltonian",
    "build_hamiltonian", "RbmParameters", "TrainingConfig", "gibbs_sample", "load_params", "save_params", "train",
    "MeasurementDataset", "read_dataset", "sample_exact", "write_dataset", "partition_signs", "sign_metrics",
]

"""PDE solving and coefficient inversion with constraint-trained neural networks."""

from .autodiff import Jet2, Tape, backward, grad_check, jet_apply, seed_input
from .losses import AlmState, LossBreakdown
from .metrics import ErrorReport, error_report, evaluate_on_grid
from .network import Network, init_network, load_checkpoint, save_checkpoint
from .problems import get_problem
from .sampling import Dataset, NoiseSpec, add_noise, sample_additional, sample_sets
from .train import RunResult, train_forward, train_inverse

__version__ = "0.1.0"

__all__ = [
    "Jet2", "Tape", "backward", "grad_check", "jet_apply", "seed_input",
    "AlmState", "LossBreakdown", "ErrorReport", "error_report", "evaluate_on_grid",
    "Network", "init_network", "load_checkpoint", "save_checkpoint",
    "get_problem", "Dataset", "NoiseSpec", "add_noise", "sample_additional",
    "sample_sets", "RunResult", "train_forward", "train_inverse", "__version__",
]

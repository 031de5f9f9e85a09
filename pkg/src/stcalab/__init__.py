"""Sparse ternary coding with ambiguization: protection, authorized decoding and reconstruction attacks."""

__version__ = "0.1.0"

from .linalg import SeedSpec, SingularSystemError, dct_matrix, gaussian_projection, ridge_solve
from .codec import StcaParams, ambiguize, code_rate, protect, ternarize
from .authorized import authorized_reconstruct, estimate_support, unlock
from .attacks import GradientAttackConfig, SurrogateSpec, gradient_attack, pinv_attack
from .nn import DecoderModel, TrainConfig, forward, mnist_net, synthetic_net, train_decoder
from .rd import SweepConfig, distortion, rd_sweep, shannon_bound
from .data import ProjectionPack, gen_gaussian, load_mnist_idx, write_pgm

__all__ = [
    "SeedSpec", "SingularSystemError", "dct_matrix", "gaussian_projection", "ridge_solve",
    "StcaParams", "ambiguize", "code_rate", "protect", "ternarize",
    "authorized_reconstruct", "estimate_support", "unlock",
    "GradientAttackConfig", "SurrogateSpec", "gradient_attack", "pinv_attack",
    "DecoderModel", "TrainConfig", "forward", "mnist_net", "synthetic_net", "train_decoder",
    "SweepConfig", "distortion", "rd_sweep", "shannon_bound",
    "ProjectionPack", "gen_gaussian", "load_mnist_idx", "write_pgm",
]

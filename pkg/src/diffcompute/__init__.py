from src.diffcompute.tensor import ComputationTape, GradientMap, Tensor, TapeRecord, backward, no_tape
from src.diffcompute.gradcheck import grad_check, grad_check_parameters

__all__ = [
    "ComputationTape",
    "GradientMap",
    "TapeRecord",
    "Tensor",
    "backward",
    "grad_check",
    "grad_check_parameters",
    "no_tape",
]

from .autograd import Tensor, no_grad
from .layers import BiLSTM, Conv2d, Dense, LSTM, Module, global_avg_pool, spectral_normalize
from .optim import ParamStore, adam_step
from .gradcheck import grad_check

__all__ = [
    "Tensor", "no_grad", "BiLSTM", "Conv2d", "Dense", "LSTM", "Module",
    "global_avg_pool", "spectral_normalize", "ParamStore", "adam_step", "grad_check",
]

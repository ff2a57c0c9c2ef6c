from .gradcheck import finite_diff_check
from .layers import Dice, Embedding, Linear, dice, uniform_init
from .optim import Adam
from .tensor import (
    GradError,
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    div,
    exp,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    parameter,
    power,
    reshape,
    select_index,
    sigmoid,
    sqrt,
    sub,
    sum_,
    take_rows,
    tanh,
)

__all__ = [
    "Adam",
    "Dice",
    "Embedding",
    "GradError",
    "Linear",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat",
    "dice",
    "div",
    "exp",
    "finite_diff_check",
    "log",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "parameter",
    "power",
    "reshape",
    "select_index",
    "sigmoid",
    "sqrt",
    "sub",
    "sum_",
    "take_rows",
    "tanh",
    "uniform_init",
]

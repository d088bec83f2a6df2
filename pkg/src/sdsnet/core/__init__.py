from .gradcheck import GradCheckReport, grad_check, relative_error
from .ops import CEIL, FLOOR, conv3d, conv3d_output_shape, maxpool3d, pool_output_size
from .tensor import (
    BCE_EPS,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    add,
    apply_op,
    as_tensor,
    backward,
    bce_loss,
    concat,
    div,
    exp,
    fully_connected,
    getitem,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    transpose,
    tsum,
)

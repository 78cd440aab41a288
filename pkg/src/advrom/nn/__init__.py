from .gradcheck import check_gradients, gradient_check
from .layers import (LSTM, BatchNorm, Dense, Dropout, LeakyReLU, Sigmoid, Tanh,
                     batchnorm_forward, dense_forward, dropout_forward, leaky_relu, lstm_step)
from .losses import bce_grad, bce_loss, mse_grad, mse_loss
from .network import ParamGroup, Sequential, load_checkpoint, save_checkpoint
from .optim import Nadam, NadamState, nadam_step

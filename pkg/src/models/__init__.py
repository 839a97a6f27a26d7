from .base import FAMILIES, LAMBDA_GRID, TASK_FAMILIES, TASKS, MetaModel, load_model, save_model, task_loss
from .boosting import BoostingParams, fit_gradient_boosting
from .linear import fit_linear
from .logistic import fit_logistic_l1
from .network import NetworkParams, fit_shallow_nn
from .selection import predict, score, train_model

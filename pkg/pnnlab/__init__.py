from .network import Architecture, GaussianPrediction, NetworkParameters, PNNModel, forward, init_parameters
from .training import OptimizerConfig, TrainConfig, fit
from .model_selection import GridSpec, grid_search, group_replicates, kl_gaussian
from .metrics import evaluate

__version__ = "0.1.0"

__all__ = ['Architecture', 'GaussianPrediction', 'NetworkParameters', 'PNNModel', 'forward', 'init_parameters',
           'OptimizerConfig', 'TrainConfig', 'fit', 'GridSpec', 'grid_search', 'group_replicates',
           'kl_gaussian', 'evaluate']

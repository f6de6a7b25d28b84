from .scaling import MinMaxScaler, ZScoreScaler, scaler_from_dict
from .forest import ForestHyperparams, PerOutputForest, RandomForest, rf_train
from .search import grid_search_cv
from .spgd import PgdModel, PgdStack, pgd_fit, pgd_fit_stack

__all__ = [
    "MinMaxScaler",
    "ZScoreScaler",
    "scaler_from_dict",
    "ForestHyperparams",
    "PerOutputForest",
    "RandomForest",
    "rf_train",
    "grid_search_cv",
    "PgdModel",
    "PgdStack",
    "pgd_fit",
    "pgd_fit_stack",
]

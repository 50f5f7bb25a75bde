"""Tree-ensemble binary classifiers, probabilities, calibration and AUC."""
from .ensembles import (
    EPS,
    ForestModel,
    ForestParams,
    GbtModel,
    GbtParams,
    clamp,
    fit_gbt,
    fit_model,
    fit_random_forest,
    logit,
    model_from_dict,
    model_to_dict,
    params_from_dict,
    predict_proba,
    sigmoid,
)
from .evaluation import (
    Calibration,
    CVResult,
    auc,
    calibrate_platt,
    cross_validate,
    out_of_fold,
    roc_points,
)
from .trees import Tree, TreeNode, grow_tree

__all__ = [
    "EPS", "ForestModel", "ForestParams", "GbtModel", "GbtParams", "clamp", "fit_gbt",
    "fit_model", "fit_random_forest", "logit", "model_from_dict", "model_to_dict", "params_from_dict",
    "predict_proba", "sigmoid", "Calibration", "CVResult", "auc", "calibrate_platt", "cross_validate",
    "out_of_fold", "roc_points", "Tree", "TreeNode", "grow_tree",
]

"""Predictors: random forest baseline, graph convolutional network, Shapley attribution."""
from .forest import ForestModel, ModelFormatError, load_forest, rf_predict_proba, rf_train, save_forest
from .gcn import (
    BipartiteGraph,
    GcnModel,
    build_bipartite_graph,
    gcn_forward,
    gcn_train,
    gradient_check,
    load_gcn,
    normalize_adjacency,
    save_gcn,
)
from .shapley import Attribution, shapley_attribution

__all__ = [
    "Attribution", "BipartiteGraph", "ForestModel", "GcnModel", "ModelFormatError", "build_bipartite_graph",
    "gcn_forward", "gcn_train", "gradient_check", "load_forest", "load_gcn", "normalize_adjacency",
    "rf_predict_proba", "rf_train", "save_forest", "save_gcn", "shapley_attribution",
]

"""Graph neural tangent kernels: analytic kernel, finite-width checks, classifiers and bounds."""
from .data import Graph, LabeledDataset, ParseError, featurize, make_folds, parse_dataset, parse_text
from .kernel import ArchConfig, GramMatrix, gram_matrix, normalize_gram, pair_kernel

__all__ = [
    "ArchConfig", "Graph", "GramMatrix", "LabeledDataset", "ParseError", "featurize",
    "gram_matrix", "make_folds", "normalize_gram", "pair_kernel", "parse_dataset", "parse_text",
]

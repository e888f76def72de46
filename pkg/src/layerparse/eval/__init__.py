from layerparse.eval.corpus import (CorpusItem, CorpusKnobs, compose_layers, generate_corpus,
                                   generate_item)
from layerparse.eval.metrics import (AttrThresholds, EvalReport, ItemPrediction, MissingPrediction,
                                     attr_accuracy, attribute_fields, evaluate, evaluate_item,
                                     font_accuracy, ground_truth_predictions, layer_iou)

__all__ = [
    "AttrThresholds", "CorpusItem", "CorpusKnobs", "EvalReport", "ItemPrediction",
    "MissingPrediction", "attr_accuracy", "attribute_fields", "compose_layers", "evaluate",
    "evaluate_item", "font_accuracy", "generate_corpus", "generate_item",
    "ground_truth_predictions", "layer_iou",
]

"""Python bindings for the matchfree C++ core.

Configs are plain dicts in the same layout as the JSON config files; any
omitted key keeps its default.
"""

import json as _json

from . import _core
from ._core import (
    IoError,
    ShapeError,
    ValidationError,
    cost_matrix,
    giou,
    hungarian,
    iou,
    sparse_correspondence,
)

__all__ = [
    "IoError",
    "Probe",
    "ShapeError",
    "ValidationError",
    "cost_matrix",
    "default_config",
    "giou",
    "hungarian",
    "iou",
    "sparse_correspondence",
    "train_and_evaluate",
]


def _dump(config):
    return "" if not config else _json.dumps(config)


def default_config():
    """Every setting with its default value."""
    return _json.loads(_core.default_config_json())


def train_and_evaluate(config=None, objective="matchfree"):
    """Trains the toy detector from scratch and returns held-out metrics."""
    return _core.train_and_evaluate(_dump(config), objective)


class Probe:
    """Randomly initialized correspondence probe."""

    def __init__(self, num_classes, config=None, seed=0):
        self._config = _dump(config)
        self._probe = _core.Probe(num_classes, self._config, seed)

    @property
    def hidden_dim(self):
        return self._probe.hidden_dim

    def correspondence(self, gt_labels, gt_boxes, logits, pred_boxes):
        return self._probe.correspondence(gt_labels, gt_boxes, logits, pred_boxes)

    def loss(self, gt_labels, gt_boxes, logits, pred_boxes):
        """L_w, L_q, L_total, the intermediate matrices and prediction gradients."""
        return self._probe.loss(gt_labels, gt_boxes, logits, pred_boxes, self._config)

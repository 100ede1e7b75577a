"""Graph-based scene context toolkit."""

import json
import os

from . import _gscg
from ._gscg import (
    BundleError,
    GraphFormatError,
    ablation_names,
    bootstrap_halfwidth,
    ciede2000,
    color_name,
    format_accuracy,
    rgb_to_lab,
)

__all__ = [
    "BundleError",
    "GraphFormatError",
    "ablation_names",
    "bootstrap_halfwidth",
    "build_graph",
    "ciede2000",
    "color_name",
    "describe",
    "format_accuracy",
    "predict_proba",
    "rgb_to_lab",
    "riddle",
    "synth_bundle",
    "synth_dataset",
    "train_and_evaluate",
]


def _graph_text(graph):
    return graph if isinstance(graph, str) else json.dumps(graph)


def build_graph(bundle_dir):
    """Builds the scene graph of a bundle directory and returns it as a dict."""
    return json.loads(_gscg.build_graph(os.fspath(bundle_dir)))


def describe(graph, target, config="full_model"):
    return _gscg.describe(_graph_text(graph), target, config)


def synth_bundle(spec, index, out_dir):
    """Writes synthetic bundle `index` to out_dir and returns its ground-truth graph."""
    return json.loads(_gscg.synth_bundle(json.dumps(spec), index, os.fspath(out_dir)))


def synth_dataset(spec, out_dir):
    _gscg.synth_dataset(json.dumps(spec), os.fspath(out_dir))
    return os.path.join(os.fspath(out_dir), "dataset.json")


def train_and_evaluate(dataset, config="full_model", checkpoint=None, **train):
    report = _gscg.train_and_evaluate(
        os.fspath(dataset), config, json.dumps(train), os.fspath(checkpoint or "")
    )
    return json.loads(report)


def predict_proba(checkpoint, graph, target):
    return _gscg.predict_proba(os.fspath(checkpoint), _graph_text(graph), target)


def riddle(checkpoint, graph, target, seed=0, config="full_model"):
    return json.loads(_gscg.riddle(os.fspath(checkpoint), _graph_text(graph), target, seed, config))

"""Error metrics over arrival predictions. MAPE is reported in percent."""

import numpy as np

from ..errors import LengthMismatch, ZeroLabel


def _pair(pred, label):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    label = np.asarray(label, dtype=np.float64).ravel()
    if pred.shape != label.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {label.size} labels")
    return pred, label


def mape(pred, label):
    pred, label = _pair(pred, label)
    if np.any(label <= 0):
        raise ZeroLabel("MAPE needs strictly positive labels")
    if pred.size == 0:
        return 0.0
    return float(100.0 * np.mean(np.abs(pred - label) / label))


def mae(pred, label):
    pred, label = _pair(pred, label)
    return float(np.mean(np.abs(pred - label))) if pred.size else 0.0


def rmse(pred, label):
    pred, label = _pair(pred, label)
    return float(np.sqrt(np.mean((pred - label) ** 2))) if pred.size else 0.0


def mape_grad(pred, label):
    """dMAPE/dpred; the kink at pred == label gets subgradient 0."""
    pred, label = _pair(pred, label)
    return 100.0 * np.sign(pred - label) / label / max(pred.size, 1)


def labelled_mask(label):
    """Edges usable for MAPE. A zero label only occurs for a robot that
    leaves its first floor node at t = 0, where percentage error is undefined."""
    return np.asarray(label) > 0

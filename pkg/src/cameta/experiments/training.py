"""Training loop and evaluation of the arrival-time model."""

import numpy as np

from ..errors import InvalidParams, NaNDetected
from ..nn.metrics import mae, mape, mape_grad, rmse
from ..nn.model import DMS, IMS, backward, forward_recurrent
from ..nn.optim import Adam, TrainConfig, learning_rate
from ..nn.params import init_params


def scenario_loss(graph, params, mode, record=False, training=True, layers_per_step=1):
    """MAPE over labelled edges; with ``record`` also fills ``params.grads``."""
    mask = graph.labels > 0
    out = forward_recurrent(graph, params, mode, training=training, record=record,
                            layers_per_step=layers_per_step)
    pred, tape = out if record else (out, None)
    loss = mape(pred[mask], graph.labels[mask])
    if record:
        dpred = np.zeros(graph.n_eta)
        dpred[mask] = mape_grad(pred[mask], graph.labels[mask])
        backward(tape, params, dpred)
    return loss


def train(graphs, cfg, params=None, on_epoch=None):
    """Adam, one scenario per update, scenarios reshuffled every epoch.

    Returns the trained parameters and one log row per epoch with the mean
    training MAPE seen during that epoch.
    """
    if not graphs:
        raise InvalidParams("training set is empty")
    if params is None:
        params = init_params(graphs[0].static.patches.shape[1], cfg.seed)
    opt = Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    log = []
    for epoch in range(cfg.epochs):
        losses = []
        for k in rng.permutation(len(graphs)):
            params.zero_grad()
            try:
                losses.append(scenario_loss(graphs[k], params, cfg.mode, record=True,
                                            layers_per_step=cfg.layers_per_step))
                opt.step(params, epoch)
            except NaNDetected as exc:
                raise NaNDetected(f"epoch {epoch}, scenario {k}: {exc}") from None
        row = {"epoch": epoch, "lr": learning_rate(cfg, epoch), "train_mape": float(np.mean(losses))}
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return params, log


def predict(graphs, params, layers_per_step=1):
    """Model predictions with the model's own feedback (inference for both regimes)."""
    return [forward_recurrent(g, params, DMS, layers_per_step=layers_per_step) for g in graphs]


def metrics_row(pred, graphs):
    p = np.concatenate([x[g.labels > 0] for x, g in zip(pred, graphs)])
    y = np.concatenate([g.labels[g.labels > 0] for g in graphs])
    return {"mape": mape(p, y), "rmse": rmse(p, y), "mae": mae(p, y), "n_edges": int(y.size)}


def evaluate(graphs, checkpoints, layers_per_step=1):
    """Naive baseline plus one row per ``{name: params}`` on identical edges."""
    rows = [{"method": "naive", **metrics_row([g.eta_arrival for g in graphs], graphs)}]
    for name, params in checkpoints.items():
        rows.append({"method": name, **metrics_row(predict(graphs, params, layers_per_step), graphs)})
    return rows


__all__ = ["DMS", "IMS", "TrainConfig", "evaluate", "metrics_row", "predict", "scenario_loss", "train"]

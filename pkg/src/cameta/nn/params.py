"""Learnable weights of the arrival-time model, their gradients, and checkpoints."""

import json

import numpy as np

from ..errors import NaNDetected, ShapeMismatch

D_MODEL = 64
N_HEADS = 3
N_PAIRS = 4  # (src type, dst type) in row-major order: FF, FR, RF, RR
ETA_FEATURES = 3
CHECKPOINT_VERSION = 1


def param_shapes(n_patch, d=D_MODEL, heads=N_HEADS):
    hd = heads * d
    return {
        "enc_floor_W": (n_patch, d),
        "enc_floor_b": (d,),
        "enc_robot_W": (1, d),
        "enc_robot_b": (d,),
        "enc_eta_W": (ETA_FEATURES, d),
        "enc_eta_b": (d,),
        # per-type node maps and the eta edge map, heads stacked along columns
        "att_W": (2, d, hd),
        "att_We": (d, hd),
        "att_src": (N_PAIRS, heads, d),
        "att_dst": (N_PAIRS, heads, d),
        "att_out_W": (hd, d),
        "att_out_b": (d,),
        "upd_W": (3 * d, d),
        "upd_b": (d,),
        "dec_W": (d,),
        "dec_b": (1,),
    }


def _fan_in(n_patch, d, heads):
    """Input width of the linear map each block belongs to."""
    hd = heads * d
    return {
        "enc_floor_W": n_patch, "enc_floor_b": n_patch,
        "enc_robot_W": 1, "enc_robot_b": 1,
        "enc_eta_W": ETA_FEATURES, "enc_eta_b": ETA_FEATURES,
        "att_W": d, "att_We": d,
        "att_src": 2 * d, "att_dst": 2 * d,
        "att_out_W": hd, "att_out_b": hd,
        "upd_W": 3 * d, "upd_b": 3 * d,
        "dec_W": d, "dec_b": d,
    }


class ModelParams:
    """Named float64 arrays with a gradient buffer of the same shape for each."""

    def __init__(self, values, n_patch, d=D_MODEL, heads=N_HEADS):
        self.n_patch = int(n_patch)
        self.d = int(d)
        self.heads = int(heads)
        expected = param_shapes(self.n_patch, self.d, self.heads)
        if set(values) != set(expected):
            raise ShapeMismatch(f"parameter names differ: {sorted(set(values) ^ set(expected))}")
        self.values = {}
        for k, shape in expected.items():
            v = np.array(values[k], dtype=np.float64)
            if v.shape != shape:
                raise ShapeMismatch(f"{k}: expected {shape}, got {v.shape}")
            self.values[k] = v
        self.grads = {k: np.zeros_like(v) for k, v in self.values.items()}

    def __getitem__(self, k):
        return self.values[k]

    def names(self):
        return list(self.values)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.values.items()}, self.n_patch, self.d, self.heads)

    def check_finite(self, where="parameters"):
        for k, v in self.values.items():
            if not np.all(np.isfinite(v)):
                raise NaNDetected(f"non-finite values in {where} block {k}")

    def to_json(self):
        doc = {
            "version": CHECKPOINT_VERSION,
            "n_patch": self.n_patch,
            "d": self.d,
            "heads": self.heads,
            "params": {
                k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                for k, v in self.values.items()
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text, expect_n_patch=None):
        doc = json.loads(text)
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ShapeMismatch(f"unsupported checkpoint version {doc.get('version')}")
        if expect_n_patch is not None and doc["n_patch"] != expect_n_patch:
            raise ShapeMismatch(
                f"checkpoint expects {doc['n_patch']} patch cells, graph has {expect_n_patch}"
            )
        expected = param_shapes(doc["n_patch"], doc["d"], doc["heads"])
        values = {}
        for k, block in doc["params"].items():
            shape = tuple(block["shape"])
            if k in expected and shape != expected[k]:
                raise ShapeMismatch(f"{k}: checkpoint shape {shape}, expected {expected[k]}")
            values[k] = np.array(block["data"], dtype=np.float64).reshape(shape)
        return cls(values, doc["n_patch"], doc["d"], doc["heads"])


def init_params(n_patch, seed, d=D_MODEL, heads=N_HEADS, zero_decoder=True):
    """Uniform(+-sqrt(1/fan_in)) for every block; decoder zero unless asked otherwise."""
    rng = np.random.default_rng(seed)
    fan = _fan_in(n_patch, d, heads)
    values = {}
    for name, shape in param_shapes(n_patch, d, heads).items():
        bound = np.sqrt(1.0 / fan[name])
        values[name] = rng.uniform(-bound, bound, size=shape)
    if zero_decoder:
        values["dec_W"][:] = 0.0
        values["dec_b"][:] = 0.0
    return ModelParams(values, n_patch, d, heads)


def zero_params(n_patch, d=D_MODEL, heads=N_HEADS):
    return ModelParams({k: np.zeros(s) for k, s in param_shapes(n_patch, d, heads).items()}, n_patch, d, heads)

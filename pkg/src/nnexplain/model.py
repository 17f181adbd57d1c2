"""Feed-forward ReLU classifiers, datasets and a tiny fixture trainer."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rational import Q, ZERO, to_decimal_str, to_q


class ModelError(ValueError):
    """Malformed network, dataset or instance."""


ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerParams:
    weights: tuple  # m rows of n rationals
    bias: tuple
    activation: str = "relu"

    def __post_init__(self):
        w = tuple(tuple(to_q(v) for v in row) for row in self.weights)
        b = tuple(to_q(v) for v in self.bias)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"activation: unknown {self.activation!r}")
        if not w or not w[0]:
            raise ModelError("weights: empty matrix")
        n = len(w[0])
        for i, row in enumerate(w):
            if len(row) != n:
                raise ModelError(f"weights[{i}]: expected {n} columns, got {len(row)}")
        if len(b) != len(w):
            raise ModelError(f"bias: expected {len(w)} entries, got {len(b)}")

    @property
    def n_out(self) -> int:
        return len(self.weights)

    @property
    def n_in(self) -> int:
        return len(self.weights[0])


@dataclass(frozen=True)
class Network:
    layers: tuple
    input_dim: int
    class_names: tuple
    input_domain: tuple  # ((lo, hi), ...) per feature
    _float_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        dom = tuple((to_q(lo), to_q(hi)) for lo, hi in self.input_domain)
        object.__setattr__(self, "input_domain", dom)
        if not self.layers:
            raise ModelError("layers: network has no layers")
        if len(dom) != self.input_dim:
            raise ModelError(f"input_domain: expected {self.input_dim} intervals, got {len(dom)}")
        for i, (lo, hi) in enumerate(dom):
            if lo > hi:
                raise ModelError(f"input_domain[{i}]: lo {lo} > hi {hi}")
        prev = self.input_dim
        for k, layer in enumerate(self.layers):
            if layer.n_in != prev:
                raise ModelError(f"layers[{k}].weights: expects {layer.n_in} inputs, previous layer gives {prev}")
            if layer.activation != "relu" and k != len(self.layers) - 1:
                raise ModelError(f"layers[{k}].activation: only the final layer may be {layer.activation!r}")
            prev = layer.n_out
        if prev < 2:
            raise ModelError("layers: final layer needs at least 2 outputs")
        if len(self.class_names) != prev:
            raise ModelError(f"class_names: expected {prev} names, got {len(self.class_names)}")

    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_out

    @property
    def hidden_layers(self) -> tuple:
        """Layers encoded as ReLU blocks (the final relu layer included)."""
        return tuple(l for l in self.layers if l.activation == "relu")

    def float_params(self):
        if "p" not in self._float_cache:
            self._float_cache["p"] = [
                (np.array([[float(v) for v in row] for row in l.weights]),
                 np.array([float(v) for v in l.bias]), l.activation)
                for l in self.layers
            ]
        return self._float_cache["p"]


@dataclass(frozen=True)
class Instance:
    values: tuple
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(to_q(v) for v in self.values))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Dataset:
    instances: tuple
    feature_names: tuple
    class_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        d = len(self.feature_names)
        for r, inst in enumerate(self.instances):
            if len(inst) != d:
                raise ModelError(f"row {r}: expected {d} values, got {len(inst)}")
            if inst.label is not None and not 0 <= inst.label < len(self.class_names):
                raise ModelError(f"row {r}: label {inst.label} outside class range")

    def __len__(self):
        return len(self.instances)

    def domain(self) -> tuple:
        """Per-feature [min, max] over the instances."""
        if not self.instances:
            raise ModelError("empty dataset has no domain")
        cols = list(zip(*(i.values for i in self.instances)))
        return tuple((min(c), max(c)) for c in cols)

    def as_arrays(self):
        X = np.array([[float(v) for v in i.values] for i in self.instances])
        y = np.array([-1 if i.label is None else i.label for i in self.instances])
        return X, y


def _check_dim(net: Network, x) -> tuple:
    x = tuple(to_q(v) for v in x)
    if len(x) != net.input_dim:
        raise ModelError(f"input has {len(x)} values, network expects {net.input_dim}")
    return x


def layer_activations(net: Network, x) -> list:
    """Exact post-activation vectors for every layer (inputs first)."""
    acts = [_check_dim(net, x)]
    cur = acts[0]
    for layer in net.layers:
        pre = [sum((w * v for w, v in zip(row, cur)), ZERO) + b
               for row, b in zip(layer.weights, layer.bias)]
        cur = tuple(max(p, ZERO) for p in pre) if layer.activation == "relu" else tuple(pre)
        acts.append(cur)
    return acts


def forward(net: Network, x) -> tuple:
    """Exact logits of ``net`` at ``x``."""
    return layer_activations(net, x)[-1]


def forward_float(net: Network, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.input_dim:
        raise ModelError(f"input has {X.shape[1]} values, network expects {net.input_dim}")
    h = X
    for W, b, act in net.float_params():
        h = h @ W.T + b
        if act == "relu":
            h = np.maximum(h, 0.0)
    return h


def argmax_first(values: Sequence) -> int:
    best = 0
    for j in range(1, len(values)):
        if values[j] > values[best]:
            best = j
    return best


def predict(net: Network, x) -> int:
    """Class with the largest logit; ties go to the lowest index."""
    return argmax_first(forward(net, x))


def check_instance(net: Network, inst: Instance, where: str = "instance") -> None:
    if len(inst) != net.input_dim:
        raise ModelError(f"{where}: expected {net.input_dim} values, got {len(inst)}")
    for i, (v, (lo, hi)) in enumerate(zip(inst.values, net.input_domain)):
        if not lo <= v <= hi:
            raise ModelError(f"{where}: feature {i} value {v} outside [{lo}, {hi}]")


# -- serialization ---------------------------------------------------------

def _num_text(v) -> str:
    return to_decimal_str(v)


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "input_domain": [[_num_text(lo), _num_text(hi)] for lo, hi in net.input_domain],
        "class_names": list(net.class_names),
        "layers": [
            {
                "weights": [[_num_text(v) for v in row] for row in l.weights],
                "bias": [_num_text(v) for v in l.bias],
                "activation": l.activation,
            }
            for l in net.layers
        ],
    }


def network_from_dict(data: dict, dataset: Optional[Dataset] = None) -> Network:
    try:
        layers = []
        for k, l in enumerate(data["layers"]):
            try:
                layers.append(LayerParams(l["weights"], l["bias"], l.get("activation", "relu")))
            except ModelError as e:
                raise ModelError(f"layers[{k}].{e}") from None
        input_dim = int(data["input_dim"])
        if "input_domain" in data and data["input_domain"] is not None:
            domain = [tuple(iv) for iv in data["input_domain"]]
        elif dataset is not None:
            domain = dataset.domain()
        else:
            raise ModelError("input_domain: absent and no dataset to derive it from")
        names = data.get("class_names") or [str(j) for j in range(layers[-1].n_out)]
        return Network(tuple(layers), input_dim, tuple(names), tuple(domain))
    except KeyError as e:
        raise ModelError(f"missing field {e.args[0]!r}") from None
    except (TypeError, ArithmeticError) as e:
        raise ModelError(f"malformed model: {e}") from None


def save_model(net: Network, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def load_model(path, dataset: Optional[Dataset] = None) -> Network:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: not valid JSON ({e})") from None
    return network_from_dict(data, dataset)


def load_dataset(path, domain=None, class_names=None) -> Dataset:
    """Read a CSV whose last column is ``label`` (class index or name, may be blank)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_label = bool(header) and header[-1] == "label"
    features = header[:-1] if has_label else header
    raw = []
    for r, row in enumerate(rows[1:]):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ModelError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        try:
            values = tuple(to_q(c) for c in row[: len(features)])
        except (ArithmeticError, ValueError) as e:
            raise ModelError(f"row {r}: {e}") from None
        label = row[-1].strip() if has_label else ""
        raw.append((r, values, label))

    if class_names is None:
        labels = [l for _, _, l in raw if l]
        if all(l.lstrip("-").isdigit() for l in labels):
            n = max((int(l) for l in labels), default=-1) + 1
            class_names = [str(j) for j in range(max(n, 2))]
        else:
            class_names = sorted(set(labels))
    class_names = [str(c) for c in class_names]

    instances = []
    for r, values, label in raw:
        idx = None
        if label:
            if label in class_names:
                idx = class_names.index(label)
            elif label.lstrip("-").isdigit():
                idx = int(label)
            else:
                raise ModelError(f"row {r}: unknown label {label!r}")
            if not 0 <= idx < len(class_names):
                raise ModelError(f"row {r}: label {idx} outside class range")
        if domain is not None:
            if len(values) != len(domain):
                raise ModelError(f"row {r}: expected {len(domain)} values, got {len(values)}")
            for i, (v, (lo, hi)) in enumerate(zip(values, domain)):
                if not to_q(lo) <= v <= to_q(hi):
                    raise ModelError(f"row {r}: feature {i} value {v} outside [{lo}, {hi}]")
        instances.append(Instance(values, idx))
    return Dataset(tuple(instances), tuple(features), tuple(class_names))


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + ["label"])
        for inst in ds.instances:
            w.writerow([to_decimal_str(v) for v in inst.values] + ["" if inst.label is None else inst.label])


# -- fixture trainer -------------------------------------------------------

def _quantize(a: np.ndarray, decimals: int) -> list:
    return [[f"{v:.{decimals}f}" for v in row] for row in np.atleast_2d(a)]


def train_tiny(ds: Dataset, hidden: int, epochs: int, seed: int, lr: float = 0.05,
               decimals: int = 4, input_domain=None) -> Network:
    """Full-batch Adam on softmax cross-entropy for a one-hidden-layer ReLU net.

    Weights are rounded to ``decimals`` places so the exact encoding stays
    small. Deterministic in (ds, hidden, epochs, seed); no accuracy promise.
    """
    if len(ds) == 0:
        raise ModelError("cannot train on an empty dataset")
    if hidden < 1:
        raise ModelError(f"hidden must be >= 1, got {hidden}")
    X, y = ds.as_arrays()
    if (y < 0).any():
        raise ModelError("training needs every instance labelled")
    n_cls = max(len(ds.class_names), 2)
    dom = tuple(input_domain) if input_domain is not None else ds.domain()
    lo = np.array([float(a) for a, _ in dom])
    span = np.array([float(b) - float(a) for a, b in dom])
    span[span == 0] = 1.0

    rng = np.random.default_rng(seed)
    d = X.shape[1]
    # train on [0,1]-scaled inputs, fold the scaling back into layer 1
    Xs = (X - lo) / span
    W1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(hidden, d))
    b1 = np.full(hidden, 0.01)
    W2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(n_cls, hidden))
    b2 = np.zeros(n_cls)
    params = [W1, b1, W2, b2]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    Y = np.eye(n_cls)[y]
    b1_, b2_, eps = 0.9, 0.999, 1e-8
    for t in range(1, epochs + 1):
        W1, b1, W2, b2 = params
        pre = Xs @ W1.T + b1
        h = np.maximum(pre, 0.0)
        z = h @ W2.T + b2
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - Y) / len(Xs)
        gW2 = g.T @ h
        gb2 = g.sum(axis=0)
        gh = (g @ W2) * (pre > 0)
        gW1 = gh.T @ Xs
        gb1 = gh.sum(axis=0)
        for k, gk in enumerate((gW1, gb1, gW2, gb2)):
            m[k] = b1_ * m[k] + (1 - b1_) * gk
            v[k] = b2_ * v[k] + (1 - b2_) * gk * gk
            mh = m[k] / (1 - b1_**t)
            vh = v[k] / (1 - b2_**t)
            params[k] = params[k] - lr * mh / (np.sqrt(vh) + eps)
    W1, b1, W2, b2 = params
    W1_raw = W1 / span
    b1_raw = b1 - W1_raw @ lo
    layers = (
        LayerParams(_quantize(W1_raw, decimals), _quantize(b1_raw, decimals)[0], "relu"),
        LayerParams(_quantize(W2, decimals), _quantize(b2, decimals)[0], "identity"),
    )
    names = ds.class_names if len(ds.class_names) >= 2 else tuple(str(j) for j in range(n_cls))
    return Network(layers, d, names, dom)


def accuracy(net: Network, ds: Dataset) -> float:
    labelled = [i for i in ds.instances if i.label is not None]
    if not labelled:
        return float("nan")
    return sum(predict(net, i.values) == i.label for i in labelled) / len(labelled)

#!/usr/bin/env python3
"""Regenerate the bundled datasets and fixture models in src/nnexplain/data.

Needs scikit-learn (wine and digits ship with it, no download) and scipy.
Everything is seeded; rerunning rewrites byte-identical files.
"""
import argparse
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits, load_wine

from nnexplain.model import (Dataset, Instance, LayerParams, Network, accuracy,
                             save_dataset, save_model, train_tiny)

DATA = Path(__file__).resolve().parents[1] / "src" / "nnexplain" / "data"


def toy(out: Path):
    # on integer inputs: class "1" iff i1 > 0 or i2 > 0
    net = Network(
        (LayerParams([[1, 0], [0, 1]], [0, 0], "relu"),
         LayerParams([[1, 1], [0, 0]], [0, "0.5"], "identity")),
        2, ("1", "2"), ((-10, 10), (-10, 10)),
    )
    save_model(net, out / "toy_model.json")
    ds = Dataset((Instance((3, 2), 0), Instance((-1, -4), 1), Instance((0, 5), 0)),
                 ("i1", "i2"), ("1", "2"))
    save_dataset(ds, out / "toy.csv")


def synth9(out: Path, seed: int):
    """20 breast-cancer-like rows: nine integer features in 1..10."""
    rng = np.random.default_rng(seed)
    rows = []
    for r in range(20):
        label = r % 2
        centre = np.where(np.arange(9) < 6, 3 + 4 * label, 5.5)
        x = np.clip(np.rint(rng.normal(centre, 1.6)), 1, 10).astype(int)
        rows.append(Instance(tuple(int(v) for v in x), label))
    ds = Dataset(tuple(rows), tuple(f"f{i}" for i in range(9)), ("benign", "malignant"))
    save_dataset(ds, out / "synth9.csv")
    net = train_tiny(ds, hidden=8, epochs=400, seed=seed, input_domain=[(1, 10)] * 9)
    save_model(net, out / "synth9_model.json")
    return ds, net


def wine13(out: Path, seed: int):
    """30 rows of the wine data (10 per class), min-max scaled to [0, 1]."""
    X, y = load_wine(return_X_y=True)
    X = (X - X.min(axis=0)) / (X.max(axis=0) - X.min(axis=0))
    X = np.round(X, 2)
    rng = np.random.default_rng(seed)
    pick = np.concatenate([rng.choice(np.flatnonzero(y == c), 10, replace=False) for c in range(3)])
    pick.sort()
    rows = tuple(Instance(tuple(f"{v:.2f}" for v in X[i]), int(y[i])) for i in pick)
    names = tuple(n.replace("/", "_") for n in load_wine().feature_names)
    ds = Dataset(rows, names, ("class_0", "class_1", "class_2"))
    save_dataset(ds, out / "wine13.csv")
    net = train_tiny(ds, hidden=10, epochs=300, seed=seed, input_domain=[(0, 1)] * 13)
    save_model(net, out / "wine13_model.json")
    return ds, net


def digits10(out: Path, seed: int, classes=(3, 8), per_class=30):
    """8x8 sklearn digits upsampled to 10x10, intensities in [0, 1]."""
    imgs, y = load_digits(return_X_y=True)
    rng = np.random.default_rng(seed)
    rows = []
    for label, c in enumerate(classes):
        for i in sorted(rng.choice(np.flatnonzero(y == c), per_class, replace=False)):
            big = zoom(imgs[i].reshape(8, 8) / 16.0, 10 / 8, order=1)
            big = np.clip(np.round(big, 2), 0, 1)
            rows.append((i, Instance(tuple(f"{v:.2f}" for v in big.ravel()), label)))
    rows.sort(key=lambda t: t[0])
    ds = Dataset(tuple(r for _, r in rows), tuple(f"p{r}_{c}" for r in range(10) for c in range(10)),
                 tuple(str(c) for c in classes))
    save_dataset(ds, out / "digits10.csv")
    net = train_tiny(ds, hidden=10, epochs=300, seed=seed, input_domain=[(0, 1)] * 100)
    save_model(net, out / "digits10_model.json")
    return ds, net


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DATA)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    toy(args.out)
    for name, fn in (("synth9", synth9), ("wine13", wine13), ("digits10", digits10)):
        ds, net = fn(args.out, args.seed)
        print(f"{name}: {len(ds)} rows, {net.input_dim} features, "
              f"train accuracy {accuracy(net, ds):.3f}")


if __name__ == "__main__":
    main()

"""Lossless plain-text model files.

Layout::

    busems-model 1
    kind gbdt
    scalar baseline 0.4172...
    array tree0.feature int 7
    0 1 -1 ...

Floats are written with ``repr`` so they read back bit-for-bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .models import AverageModel, GbdtModel, NnModel, Predictor, TreeModel

MAGIC = "busems-model"
FORMAT_VERSION = 1
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


def _fmt(a: np.ndarray) -> str:
    if a.dtype.kind == "i":
        return " ".join(str(int(v)) for v in a.ravel())
    return " ".join(repr(float(v)) for v in a.ravel())


class _Writer:
    def __init__(self, kind: str):
        self.lines = [f"{MAGIC} {FORMAT_VERSION}", f"kind {kind}"]

    def scalar(self, name: str, value: float) -> None:
        self.lines.append(f"scalar {name} {float(value)!r}")

    def text(self, name: str, value: str) -> None:
        self.lines.append(f"text {name} {value}")

    def array(self, name: str, a: np.ndarray) -> None:
        a = np.asarray(a)
        dtype = "int" if a.dtype.kind == "i" else "float"
        self.lines.append(f"array {name} {dtype} {' '.join(str(s) for s in a.shape)}")
        self.lines.append(_fmt(a))


def _tree_arrays(w: _Writer, prefix: str, tree: TreeModel) -> None:
    for f in _TREE_FIELDS:
        w.array(f"{prefix}{f}", getattr(tree, f))


def dumps_model(model: Predictor) -> str:
    w = _Writer(model.kind)
    if isinstance(model, AverageModel):
        w.scalar("global_mean", model.global_mean)
        w.array("table", model.table)
    elif isinstance(model, TreeModel):
        _tree_arrays(w, "", model)
    elif isinstance(model, GbdtModel):
        w.scalar("baseline", model.baseline)
        w.scalar("learning_rate", model.learning_rate)
        w.scalar("n_trees", len(model.trees))
        for i, t in enumerate(model.trees):
            _tree_arrays(w, f"tree{i}.", t)
    elif isinstance(model, NnModel):
        w.text("activations", " ".join(model.activations))
        for i, (wt, b) in enumerate(zip(model.weights, model.biases)):
            w.array(f"w{i}", wt)
            w.array(f"b{i}", b)
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return "\n".join(w.lines) + "\n"


def _parse(text: str) -> tuple[str, dict, dict, dict]:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(FORMAT_VERSION)]:
        raise ValueError(f"not a {MAGIC} v{FORMAT_VERSION} file")
    if len(lines) < 2 or not lines[1].startswith("kind "):
        raise ValueError("missing kind line")
    kind = lines[1].split()[1]
    scalars, texts, arrays = {}, {}, {}
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        tag = parts[0]
        if tag == "scalar":
            scalars[parts[1]] = float(parts[2])
        elif tag == "text":
            texts[parts[1]] = parts[2:]
        elif tag == "array":
            name, dtype, shape = parts[1], parts[2], tuple(int(s) for s in parts[3:])
            i += 1
            raw = lines[i].split() if i < len(lines) else []
            conv = int if dtype == "int" else float
            a = np.array([conv(v) for v in raw], dtype=np.int64 if dtype == "int" else float)
            if a.size != int(np.prod(shape)):
                raise ValueError(f"array {name}: expected {int(np.prod(shape))} values, got {a.size}")
            arrays[name] = a.reshape(shape)
        else:
            raise ValueError(f"line {i + 1}: unknown record {tag!r}")
        i += 1
    return kind, scalars, texts, arrays


def _tree(arrays: dict, prefix: str) -> TreeModel:
    return TreeModel(*(arrays[f"{prefix}{f}"] for f in _TREE_FIELDS))


def loads_model(text: str) -> Predictor:
    kind, scalars, texts, arrays = _parse(text)
    try:
        if kind == "average":
            return AverageModel(arrays["table"], scalars["global_mean"])
        if kind == "tree":
            return _tree(arrays, "")
        if kind == "gbdt":
            n = int(scalars["n_trees"])
            return GbdtModel(scalars["baseline"], scalars["learning_rate"],
                             tuple(_tree(arrays, f"tree{i}.") for i in range(n)))
        if kind == "nn":
            acts = tuple(texts["activations"])
            return NnModel(tuple(arrays[f"w{i}"] for i in range(len(acts))),
                           tuple(arrays[f"b{i}"] for i in range(len(acts))), acts)
    except KeyError as exc:
        raise ValueError(f"{kind} model file lacks {exc.args[0]!r}") from None
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: Predictor, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> Predictor:
    return loads_model(Path(path).read_text())

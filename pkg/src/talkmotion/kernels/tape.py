"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records one node per primitive in execution order, so
walking the list backwards is a valid reverse topological order.
Trainable leaves are :class:`Parameter` objects owned by a
:class:`ParameterStore`; gradients flow into ``Parameter.grad`` when
:meth:`Tape.backward` runs. Arrays that enter a computation any other way
are constants and never receive gradients.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..exceptions import DataError, FormatError, NumericError

CHECKPOINT_FORMAT = "talkmotion-params"
CHECKPOINT_VERSION = 1


class Parameter:
    __slots__ = ("name", "data", "grad")

    def __init__(self, name, data):
        self.name = name
        self.data = np.array(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class ParameterStore:
    """Ordered mapping of parameter names to :class:`Parameter` objects."""

    def __init__(self):
        self._params = OrderedDict()

    def add(self, name, data) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name) -> Parameter:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self))

    def zero_grad(self):
        for p in self:
            p.grad[...] = 0.0

    def subset(self, prefix) -> list:
        return [p for p in self if p.name.startswith(prefix)]

    # -- checkpoints -----------------------------------------------------
    def state_dict(self) -> dict:
        return OrderedDict((p.name, p.data.copy()) for p in self)

    def load_state_dict(self, state, strict=True):
        for name, value in state.items():
            if name not in self._params:
                if strict:
                    raise DataError(f"unknown parameter {name!r} in checkpoint")
                continue
            value = np.asarray(value, dtype=np.float64)
            p = self._params[name]
            if value.shape != p.shape:
                raise DataError(f"parameter {name!r}: checkpoint shape {value.shape} != {p.shape}")
            p.data[...] = value
        if strict:
            missing = set(self._params) - set(state)
            if missing:
                raise DataError(f"checkpoint lacks parameters: {sorted(missing)}")

    def to_json(self, extra=None) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "parameters": {
                p.name: {"shape": list(p.shape), "values": p.data.ravel().tolist()} for p in self
            },
        }
        if extra:
            doc["meta"] = extra
        return json.dumps(doc, sort_keys=True)

    def save(self, path, extra=None):
        Path(path).write_text(self.to_json(extra))

    @staticmethod
    def read_checkpoint(path):
        """Return ``(state, meta)`` from a checkpoint file."""
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: checkpoint is not valid JSON ({e})") from None
        if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
            raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
        state = OrderedDict()
        for name, entry in doc["parameters"].items():
            state[name] = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        return state, doc.get("meta", {})


class Var:
    """A value on a tape. Arithmetic operators build new tape nodes."""

    __slots__ = ("value", "tape", "requires_grad", "param")
    __array_priority__ = 1000

    def __init__(self, value, tape, requires_grad=False, param=None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)


class Tape:
    """Append-only record of primitive applications."""

    def __init__(self):
        self.nodes = []
        self._leaves = {}

    def param(self, p: Parameter) -> Var:
        v = self._leaves.get(id(p))
        if v is None:
            v = Var(p.data, self, requires_grad=True, param=p)
            self._leaves[id(p)] = v
        return v

    def const(self, x) -> Var:
        if isinstance(x, Var):
            return x
        return Var(np.asarray(x, dtype=np.float64), self)

    def record(self, value, inputs, backward) -> Var:
        """Append a node; ``backward(g)`` returns one gradient per input."""
        needs = any(isinstance(i, Var) and i.requires_grad for i in inputs)
        out = Var(value, self, requires_grad=needs)
        if needs:
            self.nodes.append((out, tuple(inputs), backward))
        return out

    def backward(self, loss: Var):
        """Accumulate d(loss)/d(parameter) into every reachable ``Parameter.grad``."""
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        if not np.isfinite(loss.value).all():
            raise NumericError("loss is not finite")
        if not loss.requires_grad:
            return
        grads = {id(loss): np.ones_like(loss.value)}
        for out, inputs, backward in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward(g)):
                if gi is None or not (isinstance(inp, Var) and inp.requires_grad):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        for leaf in self._leaves.values():
            g = grads.get(id(leaf))
            if g is not None:
                leaf.param.grad += g


def lift(x, tape) -> Var:
    return x if isinstance(x, Var) else tape.const(x)


def tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return Tape()


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)

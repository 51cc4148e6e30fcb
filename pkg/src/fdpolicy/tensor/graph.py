"""Static computation graph with reverse-mode differentiation.

Build once, run many times::

    g = Graph()
    x = g.input("x")
    h = g.relu(g.affine(x, g.param("W", W0), g.param("b", b0)))
    loss = g.mse(h, g.input("target"))
    g.forward({"x": X, "target": Y})
    grads = g.backward(loss)          # {"W": ..., "b": ...}

Parameters live in ``g.params`` (name -> float64 array) and may be swapped
wholesale per call via ``forward(..., params=other)``, which is how EMA
weights are evaluated without rebuilding the graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import ops
from .ops import ShapeError


class GraphError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class Node:
    id: int
    op: str
    inputs: tuple
    attrs: dict = field(default_factory=dict)
    name: str | None = None

    def describe(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"node {self.id} ({self.op}{label})"


_LEAVES = ("input", "param", "const")


class Graph:
    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, np.ndarray] = {}
        self.trainable: set[str] = set()
        self._param_ids: dict[str, int] = {}
        self._input_ids: dict[str, int] = {}
        self._named: dict[str, int] = {}
        self._values: list | None = None
        self._caches: list | None = None

    # -- construction ---------------------------------------------------------

    def _add(self, op, inputs=(), name=None, **attrs) -> int:
        for i in inputs:
            if not (0 <= i < len(self.nodes)):
                raise GraphError(f"{op}: input id {i} does not precede the new node")
        node = Node(len(self.nodes), op, tuple(inputs), attrs, name)
        self.nodes.append(node)
        if name is not None:
            if name in self._named:
                raise GraphError(f"duplicate node name {name!r}")
            self._named[name] = node.id
        self._values = None
        return node.id

    def input(self, name: str) -> int:
        if name in self._input_ids:
            return self._input_ids[name]
        nid = self._add("input", name=name)
        self._input_ids[name] = nid
        return nid

    def param(self, name: str, value=None, trainable: bool = True) -> int:
        """Declare (or re-use) the parameter leaf ``name``."""
        if name in self._param_ids:
            if value is not None:
                self.params[name] = np.asarray(value, dtype=np.float64)
            return self._param_ids[name]
        if value is None and name not in self.params:
            raise GraphError(f"parameter {name!r} has no value")
        if value is not None:
            self.params[name] = np.asarray(value, dtype=np.float64)
        nid = self._add("param", pname=name)
        self._param_ids[name] = nid
        if trainable:
            self.trainable.add(name)
        return nid

    def const(self, value) -> int:
        return self._add("const", value=np.asarray(value, dtype=np.float64))

    def name(self, node: int, name: str) -> int:
        """Attach a lookup name to an existing node."""
        if name in self._named:
            raise GraphError(f"duplicate node name {name!r}")
        self.nodes[node].name = name
        self._named[name] = node
        return node

    def node_id(self, name: str) -> int:
        return self._named[name]

    # -- op builders ------------------------------------------------------------

    def affine(self, x, W, b, name=None):
        return self._add("affine", (x, W, b), name)

    def conv1d(self, x, W, b, stride=1, padding="same", name=None):
        if stride not in (1, 2) or padding not in ("same", "valid"):
            raise GraphError(f"conv1d: unsupported stride={stride} padding={padding}")
        return self._add("conv1d", (x, W, b), name, stride=stride, padding=padding)

    def conv_transpose1d(self, x, W, b, stride=2, pad=1, name=None):
        if stride != 2:
            raise GraphError("conv_transpose1d supports stride 2 only")
        return self._add("conv_transpose1d", (x, W, b), name, stride=stride, pad=pad)

    def add(self, a, b, name=None):
        return self._add("add", (a, b), name)

    def sub(self, a, b, name=None):
        return self._add("sub", (a, b), name)

    def mul(self, a, b, name=None):
        return self._add("mul", (a, b), name)

    def scale(self, x, c: float, name=None):
        return self._add("scale", (x,), name, c=float(c))

    def relu(self, x, name=None):
        return self._add("relu", (x,), name)

    def mish(self, x, name=None):
        return self._add("mish", (x,), name)

    def group_norm(self, x, gamma, beta, groups=8, eps=1e-5, name=None):
        return self._add("group_norm", (x, gamma, beta), name, groups=groups, eps=eps)

    def concat(self, xs, axis=-1, name=None):
        return self._add("concat", tuple(xs), name, axis=axis)

    def slice(self, x, start, stop, axis=-1, name=None):
        return self._add("slice", (x,), name, axis=axis, start=start, stop=stop)

    def split(self, x, sizes, axis=-1):
        out, start = [], 0
        for s in sizes:
            out.append(self.slice(x, start, start + s, axis=axis))
            start += s
        return out

    def reshape(self, x, shape, name=None):
        """Reshape every batch item to ``shape``; the leading axis is kept."""
        return self._add("reshape", (x,), name, shape=tuple(shape))

    def transpose(self, x, axes, name=None):
        return self._add("transpose", (x,), name, axes=tuple(axes))

    def stop_gradient(self, x, name=None):
        return self._add("stop_gradient", (x,), name)

    def max_pool_set(self, x, name=None):
        return self._add("max_pool_set", (x,), name)

    def mse(self, a, b, mask=None, name=None):
        inputs = (a, b) if mask is None else (a, b, mask)
        return self._add("mse", inputs, name)

    def sum(self, x, name=None):
        return self._add("sum", (x,), name)

    def sinusoid(self, k, dim, max_index, name=None):
        table = ops.sinusoid_table(max_index, dim)
        return self._add("sinusoid", (k,), name, table=table)

    def film(self, h, scale, shift, name=None):
        return self._add("film", (h, scale, shift), name)

    # -- execution ------------------------------------------------------------

    def forward(self, inputs: dict[str, Any], params: dict[str, np.ndarray] | None = None,
                overrides: dict[int, np.ndarray] | None = None,
                check_finite: bool = True) -> dict[str, np.ndarray]:
        """Evaluate every node; return the values of all named nodes.

        ``overrides`` replaces the output of the given node ids after they
        are computed (activation taps in tests).
        """
        params = self.params if params is None else params
        overrides = overrides or {}
        missing = set(self._input_ids) - set(inputs)
        if missing:
            raise GraphError(f"unbound inputs: {sorted(missing)}")
        values: list = [None] * len(self.nodes)
        caches: list = [None] * len(self.nodes)
        for node in self.nodes:
            if node.op == "input":
                out = np.asarray(inputs[node.name], dtype=np.float64)
            elif node.op == "param":
                out = params[node.attrs["pname"]]
            elif node.op == "const":
                out = node.attrs["value"]
            else:
                fwd, _ = ops.KERNELS[node.op]
                try:
                    out, caches[node.id] = fwd([values[i] for i in node.inputs], node.attrs)
                except ShapeError as exc:
                    raise ShapeError(f"{node.describe()}: {exc}") from None
            if node.id in overrides:
                forced = np.asarray(overrides[node.id], dtype=np.float64)
                if forced.shape != np.shape(out):
                    raise ShapeError(f"{node.describe()}: override shape {forced.shape} != {np.shape(out)}")
                out = forced
            if check_finite and node.op not in _LEAVES and not np.all(np.isfinite(out)):
                raise NonFiniteError(f"non-finite value produced at {node.describe()}")
            values[node.id] = out
        self._values, self._caches = values, caches
        return {name: values[nid] for name, nid in self._named.items()}

    def value(self, node: int) -> np.ndarray:
        if self._values is None:
            raise GraphError("forward has not been run")
        return self._values[node]

    def backward(self, loss: int, wrt: tuple[str, ...] = ()) -> dict[str, np.ndarray]:
        """Gradients of scalar node ``loss`` for every trainable parameter.

        Input names listed in ``wrt`` get gradient entries as well (keyed by
        input name). Parameters that feed several nodes accumulate.
        """
        if self._values is None:
            raise GraphError("backward called before forward")
        lv = self._values[loss]
        if np.ndim(lv) != 0:
            raise GraphError(f"loss {self.nodes[loss].describe()} is not scalar (shape {np.shape(lv)})")
        targets = {self._param_ids[n] for n in self.trainable} | {self._input_ids[n] for n in wrt}
        needs = self._needs_grad(targets, loss)
        grads: dict[int, np.ndarray] = {loss: np.array(1.0)}
        for node in reversed(self.nodes[:loss + 1]):
            if node.op in _LEAVES:
                continue
            g = grads.pop(node.id, None)
            if g is None:
                continue
            _, bwd = ops.KERNELS[node.op]
            ins = node.inputs
            gin = bwd(g, [self._values[i] for i in ins], self._values[node.id],
                      self._caches[node.id], node.attrs)
            for i, gi in zip(ins, gin):
                if gi is None or not needs[i]:
                    continue
                grads[i] = grads[i] + gi if i in grads else gi
        out = {}
        for name in self.trainable:
            nid = self._param_ids[name]
            out[name] = grads.get(nid, np.zeros_like(self.params[name]))
        for name in wrt:
            nid = self._input_ids[name]
            out[name] = grads.get(nid, np.zeros_like(self._values[nid]))
        return out

    def _needs_grad(self, targets, upto):
        needs = [False] * len(self.nodes)
        for node in self.nodes[:upto + 1]:
            if node.id in targets:
                needs[node.id] = True
            elif node.op not in _LEAVES and node.op != "stop_gradient":
                needs[node.id] = any(needs[i] for i in node.inputs)
        return needs

    def num_params(self, trainable_only: bool = True) -> int:
        names = self.trainable if trainable_only else self.params.keys()
        return int(sum(self.params[n].size for n in names))

"""Affine-coupling flow with alternating parity masks and exact log-det.

Each coupling layer conditions two subnetworks (scale s with tanh output,
translation t with identity output) on the pass-through half and updates the
other half as ``u * exp(s) + t``. Masks alternate: even layers update
odd-indexed coordinates, odd layers update even-indexed ones. Subnetworks are
d -> hidden x n_hidden_layers -> d with leaky-relu hidden activations; final
linear layers start at zero, so a fresh flow is the identity map.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .kernels import coupling_combine_fwd, leaky_relu_fwd


@dataclass(frozen=True)
class FlowSpec:
    d: int
    coupling_pairs: int
    hidden: int
    n_hidden_layers: int = 3

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("flow needs d >= 2 so both mask halves are nonempty")
        if min(self.coupling_pairs, self.hidden, self.n_hidden_layers) < 1:
            raise ValueError("coupling_pairs, hidden, n_hidden_layers must be >= 1")

    @property
    def n_layers(self) -> int:
        return 2 * self.coupling_pairs

    def mask(self, layer: int) -> np.ndarray:
        """0/1 vector marking updated coordinates; parity alternates per layer."""
        idx = np.arange(self.d)
        updated = (idx % 2 == 1) if layer % 2 == 0 else (idx % 2 == 0)
        return updated.astype(np.float64)

    def linear_dims(self) -> list[tuple[int, int]]:
        widths = [self.d] + [self.hidden] * self.n_hidden_layers + [self.d]
        return list(zip(widths[:-1], widths[1:]))

    def param_count(self) -> int:
        per_subnet = sum(i * o + o for i, o in self.linear_dims())
        return self.n_layers * 2 * per_subnet


@dataclass
class FlowParams:
    spec: FlowSpec
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (self.spec.param_count(),):
            raise ValueError(
                f"parameter vector has shape {self.vector.shape}, "
                f"expected ({self.spec.param_count()},)"
            )

    def linear(self, layer: int, subnet: str, index: int):
        """(W, b) views into the flat vector for one linear layer."""
        off = _offset(self.spec, layer, subnet, index)
        dims = self.spec.linear_dims()[index]
        w = self.vector[off:off + dims[0] * dims[1]].reshape(dims)
        b = self.vector[off + dims[0] * dims[1]:off + dims[0] * dims[1] + dims[1]]
        return w, b


def _offset(spec: FlowSpec, layer: int, subnet: str, index: int) -> int:
    dims = spec.linear_dims()
    sizes = [i * o + o for i, o in dims]
    per_subnet = sum(sizes)
    sub_idx = 0 if subnet == "s" else 1
    return (layer * 2 + sub_idx) * per_subnet + sum(sizes[:index])


def init_params(spec: FlowSpec, seed) -> FlowParams:
    """Fan-in-scaled uniform hidden layers, zeroed output layers (identity map)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    vector = np.zeros(spec.param_count())
    params = FlowParams(spec=spec, vector=vector)
    n_linear = len(spec.linear_dims())
    for layer in range(spec.n_layers):
        for subnet in ("s", "t"):
            for index in range(n_linear - 1):  # final layer stays zero
                w, b = params.linear(layer, subnet, index)
                bound = 1.0 / np.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)
    return params


def _subnet_eval(params: FlowParams, layer: int, subnet: str, x: np.ndarray) -> np.ndarray:
    n_linear = len(params.spec.linear_dims())
    h = x
    for index in range(n_linear):
        w, b = params.linear(layer, subnet, index)
        h = h @ w + b
        if index < n_linear - 1:
            h = leaky_relu_fwd(h)
    if subnet == "s":
        h = np.tanh(h)
    return h


def forward(spec: FlowSpec, params: FlowParams, xi: np.ndarray):
    """Map base points to weight space; returns (w, log_det).

    Accepts a single d-vector or an (m, d) batch; log_det is a float or an
    (m,) vector accordingly, computed exactly as the sum of masked scale
    outputs.
    """
    single = np.asarray(xi).ndim == 1
    h = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if h.shape[1] != spec.d:
        raise ValueError(f"input has {h.shape[1]} coordinates, flow expects {spec.d}")
    log_det = np.zeros(h.shape[0])
    for layer in range(spec.n_layers):
        r = spec.mask(layer)
        xp = h * (1.0 - r)
        s = _subnet_eval(params, layer, "s", xp)
        t = _subnet_eval(params, layer, "t", xp)
        h = coupling_combine_fwd(h, s, t, r)
        if not np.all(np.isfinite(h)):
            raise ArithmeticError(f"non-finite flow output at layer {layer}")
        log_det += (s * r).sum(axis=1)
    if single:
        return h[0], float(log_det[0])
    return h, log_det


def inverse(spec: FlowSpec, params: FlowParams, w: np.ndarray) -> np.ndarray:
    """Exact inverse; layers unwind in reverse order."""
    single = np.asarray(w).ndim == 1
    h = np.atleast_2d(np.asarray(w, dtype=np.float64))
    if h.shape[1] != spec.d:
        raise ValueError(f"input has {h.shape[1]} coordinates, flow expects {spec.d}")
    for layer in reversed(range(spec.n_layers)):
        r = spec.mask(layer)
        xp = h * (1.0 - r)  # pass-through half is unchanged by the layer
        s = _subnet_eval(params, layer, "s", xp)
        t = _subnet_eval(params, layer, "t", xp)
        h = (1.0 - r) * h + r * ((h - t) * np.exp(-s))
        if not np.all(np.isfinite(h)):
            raise ArithmeticError(f"non-finite flow inverse at layer {layer}")
    return h[0] if single else h


def forward_single_layer(spec: FlowSpec, params: FlowParams, layer: int,
                         xi: np.ndarray):
    """One coupling layer on its own; used to check composability."""
    h = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    r = spec.mask(layer)
    xp = h * (1.0 - r)
    s = _subnet_eval(params, layer, "s", xp)
    t = _subnet_eval(params, layer, "t", xp)
    out = coupling_combine_fwd(h, s, t, r)
    log_det = (s * r).sum(axis=1)
    if np.asarray(xi).ndim == 1:
        return out[0], float(log_det[0])
    return out, log_det


# --- tape construction for training ----------------------------------------

def tape_forward(spec: FlowSpec, params: FlowParams, tape: "ad.DiffTape",
                 xi: np.ndarray):
    """Record the flow on a tape.

    Returns (w_node (m, d), log_det_node (m, 1), leaves) where leaves lists the
    parameter leaf nodes in flat-vector order, so adjoints can be re-packed
    into a gradient aligned with params.vector.
    """
    m = xi.shape[0]
    h = tape.constant(xi)
    leaves: list[ad.DiffNode] = []
    ones_col = tape.constant(np.ones((spec.d, 1)))
    log_det = None
    n_linear = len(spec.linear_dims())
    for layer in range(spec.n_layers):
        r = spec.mask(layer)
        rbar_full = tape.constant(np.broadcast_to(1.0 - r, (m, spec.d)).copy())
        r_full = np.broadcast_to(r, (m, spec.d)).copy()
        xp = ad.mul(h, rbar_full)
        outs = {}
        for subnet in ("s", "t"):
            cur = xp
            for index in range(n_linear):
                w, b = params.linear(layer, subnet, index)
                w_leaf = tape.leaf(w)
                b_leaf = tape.leaf(b)
                leaves.extend((w_leaf, b_leaf))
                cur = ad.affine(cur, w_leaf, b_leaf)
                if index < n_linear - 1:
                    cur = ad.leaky_relu(cur)
            outs[subnet] = ad.tanh(cur) if subnet == "s" else cur
        h = ad.coupling(h, outs["s"], outs["t"], r_full)
        masked_s = ad.mul(outs["s"], tape.constant(r_full))
        layer_det = ad.matmul(masked_s, ones_col)
        log_det = layer_det if log_det is None else ad.add(log_det, layer_det)
    return h, log_det, leaves


def grad_from_leaves(spec: FlowSpec, leaves: list["ad.DiffNode"]) -> np.ndarray:
    """Assemble the flat gradient vector from leaf adjoints (same layout)."""
    parts = []
    for leaf in leaves:
        adj = leaf.adjoint if leaf.adjoint is not None else np.zeros_like(leaf.value)
        parts.append(np.asarray(adj).ravel())
    flat = np.concatenate(parts)
    if flat.shape != (spec.param_count(),):
        raise AssertionError("gradient layout does not match parameter layout")
    return flat


# --- persistence ------------------------------------------------------------

_MAGIC = b"SGFL"
_HEADER = struct.Struct("<4sIIIIIqQ")  # magic, version, d, pairs, hidden, layers, seed, count


def save_params(params: FlowParams, path: str, seed: int = 0) -> None:
    """Little-endian file: fixed header then the flat float64 parameter list."""
    spec = params.spec
    header = _HEADER.pack(_MAGIC, 1, spec.d, spec.coupling_pairs, spec.hidden,
                          spec.n_hidden_layers, seed, params.vector.size)
    data = params.vector.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def load_params(path: str) -> tuple[FlowParams, int]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, pairs, hidden, layers, seed, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path} is not a flow parameter file")
    vector = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=count)
    spec = FlowSpec(d=d, coupling_pairs=pairs, hidden=hidden, n_hidden_layers=layers)
    return FlowParams(spec=spec, vector=vector.astype(np.float64)), seed

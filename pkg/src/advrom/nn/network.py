"""Layer stacks, flat parameter views and ROMNN1 checkpoints."""
import numpy as np

from ..errors import ArgumentError, RomIOError
from ..formats import read_sections, write_sections
from .layers import LAYER_KINDS

NN_MAGIC = b"ROMNN1"


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None, update_stats=True):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng, update_stats=update_stats)
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield f"{i}.{layer.kind}.{name}", arr

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{i}.{layer.kind}.{name}", layer.grads[name]

    def named_buffers(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.buffers.items():
                yield f"{i}.{layer.kind}.{name}", arr

    def spec(self):
        return [{"kind": layer.kind, **layer.config()} for layer in self.layers]

    @classmethod
    def from_spec(cls, spec):
        layers = []
        for entry in spec:
            entry = dict(entry)
            kind = entry.pop("kind")
            if kind not in LAYER_KINDS:
                raise RomIOError(f"unknown layer kind {kind!r} in checkpoint")
            layers.append(LAYER_KINDS[kind](**entry))
        return cls(layers)


class ParamGroup:
    """Several named networks seen as one ordered parameter collection.

    The optimiser works on the flat vector view; block names are kept so
    errors can point at the offending layer.
    """

    def __init__(self, nets):
        self.nets = dict(nets)

    def blocks(self):
        out = []
        for net_name, net in self.nets.items():
            for i, layer in enumerate(net.layers):
                for pname in layer.params:
                    out.append((f"{net_name}/{i}.{layer.kind}.{pname}", layer, pname))
        return out

    def block_names(self):
        return [b[0] for b in self.blocks()]

    def block_sizes(self):
        return [layer.params[p].size for _, layer, p in self.blocks()]

    def zero_grad(self):
        for net in self.nets.values():
            net.zero_grad()

    def get_flat(self):
        blocks = self.blocks()
        if not blocks:
            return np.zeros(0)
        return np.concatenate([layer.params[p].ravel() for _, layer, p in blocks])

    def grad_flat(self):
        blocks = self.blocks()
        if not blocks:
            return np.zeros(0)
        return np.concatenate([layer.grads[p].ravel() for _, layer, p in blocks])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for _, layer, p in self.blocks():
            arr = layer.params[p]
            layer.params[p] = flat[pos:pos + arr.size].reshape(arr.shape).copy()
            pos += arr.size
        if pos != flat.size:
            raise ArgumentError(f"flat vector has {flat.size} entries, parameters need {pos}")

    @property
    def size(self):
        return sum(self.block_sizes())


def save_checkpoint(path, nets, manifest=None, optimizers=None):
    """Write named networks (and optionally optimiser states) as ROMNN1."""
    sections = {"manifest": {"networks": {k: v.spec() for k, v in nets.items()},
                             "extra": manifest or {},
                             "optimizers": sorted((optimizers or {}).keys())}}
    for net_name, net in nets.items():
        for name, arr in net.named_params():
            sections[f"param/{net_name}/{name}"] = arr
        for name, arr in net.named_buffers():
            sections[f"buffer/{net_name}/{name}"] = arr
    for opt_name, state in (optimizers or {}).items():
        sections[f"opt/{opt_name}/m"] = state.m
        sections[f"opt/{opt_name}/v"] = state.v
        sections[f"opt/{opt_name}/hyper"] = np.array(
            [state.t, state.lr, state.beta1, state.beta2, state.eps])
    write_sections(path, NN_MAGIC, sections)


def load_checkpoint(path):
    """Return ``(nets, manifest_extra, optimizer_states)``."""
    from .optim import NadamState

    sec = read_sections(path, NN_MAGIC)
    if "manifest" not in sec:
        raise RomIOError(f"{path}: checkpoint without manifest section")
    man = sec["manifest"]
    nets = {}
    for net_name, spec in man["networks"].items():
        net = Sequential.from_spec(spec)
        for i, layer in enumerate(net.layers):
            for store, prefix in ((layer.params, "param"), (layer.buffers, "buffer")):
                for pname in list(store):
                    key = f"{prefix}/{net_name}/{i}.{layer.kind}.{pname}"
                    if key not in sec:
                        raise RomIOError(f"{path}: missing section {key!r}")
                    if sec[key].shape != store[pname].shape:
                        raise RomIOError(f"{path}: section {key!r} has shape {sec[key].shape}, "
                                         f"expected {store[pname].shape}")
                    store[pname] = sec[key].copy()
        net.zero_grad()
        nets[net_name] = net
    opts = {}
    for opt_name in man.get("optimizers", []):
        t, lr, b1, b2, eps = sec[f"opt/{opt_name}/hyper"]
        opts[opt_name] = NadamState(m=sec[f"opt/{opt_name}/m"].copy(),
                                    v=sec[f"opt/{opt_name}/v"].copy(), t=int(t),
                                    lr=lr, beta1=b1, beta2=b2, eps=eps)
    return nets, man.get("extra", {}), opts


def recalibrate_batchnorm(net: Sequential, x):
    """Set every batch-norm layer's running statistics to the population
    statistics of its input over ``x``, layer by layer, in inference mode."""
    from .layers import BatchNorm

    for layer in net.layers:
        if isinstance(layer, BatchNorm):
            layer.buffers["running_mean"] = x.mean(axis=0)
            layer.buffers["running_var"] = x.var(axis=0)
        x = layer.forward(x, train=False)
    return x

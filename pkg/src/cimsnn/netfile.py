"""Network description files (YAML) and the two reference topologies.

Schema (unknown keys are rejected at every level)::

    precision: 4                 # weight bits: 4, 6 or 8 (Vmem = 2*w - 1)
    timesteps: 20
    neuron: {model: IF|LIF, reset: hard|soft, threshold: 8, leak: 0, saturate: false}
    input: {h: 64, w: 64, channels: 2}
    layers:
      - {type: Conv, out: 16}                # kernel 3, stride 1, same padding
      - {type: Conv, out: 16, stride: 2, kernel: [3, 3], padding: 1}
      - {type: MaxPool}                      # 2x2, stride 2
      - {type: FC, out: 11}
      - {type: FC, out: 4, neuron: {model: LIF, leak: 1, threshold: 4}}

``in`` may be given on any layer; it is inferred from the previous layer and
checked when present.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .config import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronSpec,
    validate_precision,
)
from .errors import ParseError, ValidationError

_TOP_KEYS = {"precision", "timesteps", "neuron", "input", "layers"}
_NEURON_KEYS = {"model", "reset", "threshold", "leak", "saturate"}
_INPUT_KEYS = {"h", "w", "channels"}
_LAYER_KEYS = {"type", "in", "out", "kernel", "stride", "padding", "neuron"}


class _LineDict(dict):
    line = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    mapping = _LineDict(loader.construct_mapping(node, deep=True))
    mapping.line = node.start_mark.line + 1
    return mapping


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ParseError("expected a mapping", line=getattr(mapping, "line", None), field=where)
    unknown = set(mapping) - allowed
    if unknown:
        raise ParseError(f"unknown key(s) {sorted(unknown)}", line=mapping.line, field=where)


def _int(mapping, key, where, default=None):
    if key not in mapping:
        if default is None:
            raise ParseError("missing required key", line=mapping.line, field=f"{where}.{key}")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", line=mapping.line, field=f"{where}.{key}")
    return value


def _neuron(mapping, where, base=None):
    _check_keys(mapping, _NEURON_KEYS, where)
    base = base or NeuronSpec()
    try:
        return NeuronSpec(
            model=mapping.get("model", base.model),
            reset=mapping.get("reset", base.reset),
            threshold=_int(mapping, "threshold", where, base.threshold),
            leak=_int(mapping, "leak", where, base.leak),
            saturate=bool(mapping.get("saturate", base.saturate)),
        )
    except ValueError as exc:
        raise ParseError(str(exc), line=mapping.line, field=where) from exc


def network_from_dict(doc) -> NetworkSpec:
    _check_keys(doc, _TOP_KEYS, "<root>")
    for key in ("precision", "timesteps", "input", "layers"):
        if key not in doc:
            raise ParseError("missing required key", line=doc.line, field=key)
    precision = validate_precision(_int(doc, "precision", "<root>"))
    neuron = _neuron(doc["neuron"], "neuron") if "neuron" in doc else NeuronSpec()
    inp = doc["input"]
    _check_keys(inp, _INPUT_KEYS, "input")
    in_shape = (_int(inp, "channels", "input"), _int(inp, "h", "input"), _int(inp, "w", "input"))
    shape = in_shape
    if not isinstance(doc["layers"], list):
        raise ParseError("expected a list", line=doc.line, field="layers")

    layers = []
    for i, entry in enumerate(doc["layers"]):
        where = f"layers[{i}]"
        _check_keys(entry, _LAYER_KEYS, where)
        kind_name = entry.get("type")
        try:
            kind = LayerKind(kind_name)
        except ValueError:
            raise ParseError(f"type must be one of Conv/FC/MaxPool, got {kind_name!r}",
                             line=entry.line, field=f"{where}.type") from None
        c, h, w = shape
        override = _neuron(entry["neuron"], f"{where}.neuron", neuron) if "neuron" in entry else None
        try:
            if kind is LayerKind.CONV:
                kernel = entry.get("kernel", 3)
                kh, kw = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
                layer = LayerSpec(
                    LayerKind.CONV, _int(entry, "in", where, c), _int(entry, "out", where),
                    kh, kw, _int(entry, "stride", where, 1),
                    _int(entry, "padding", where, (kh - 1) // 2), h, w, override,
                )
            elif kind is LayerKind.FC:
                layer = LayerSpec.fc(_int(entry, "in", where, c * h * w), _int(entry, "out", where), override)
            else:
                if "out" in entry or "kernel" in entry or "stride" in entry or "padding" in entry:
                    raise ParseError("MaxPool is fixed at 2x2 stride 2", line=entry.line, field=where)
                layer = LayerSpec.maxpool(_int(entry, "in", where, c), h, w)
        except (ValidationError, TypeError) as exc:
            raise ParseError(str(exc), line=entry.line, field=where) from exc
        layers.append(layer)
        shape = layer.out_shape

    return NetworkSpec(tuple(layers), _int(doc, "timesteps", "<root>"), precision, neuron,
                       in_shape[1], in_shape[2], in_shape[0])


def parse_network(text: str) -> NetworkSpec:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(str(exc.problem), line=mark.line + 1 if mark else None) from exc
    if doc is None:
        raise ParseError("empty network description")
    return network_from_dict(doc)


def load_network(path) -> NetworkSpec:
    return parse_network(Path(path).read_text())


def _neuron_dict(n: NeuronSpec) -> dict:
    return {"model": n.model.value, "reset": n.reset.value, "threshold": n.threshold,
            "leak": n.leak, "saturate": n.saturate}


def network_to_dict(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        entry = {"type": layer.kind.value, "in": layer.in_channels}
        if layer.kind is LayerKind.CONV:
            entry.update(out=layer.out_channels, kernel=[layer.kernel_h, layer.kernel_w],
                         stride=layer.stride, padding=layer.padding)
        elif layer.kind is LayerKind.FC:
            entry["out"] = layer.out_channels
        if layer.neuron is not None:
            entry["neuron"] = _neuron_dict(layer.neuron)
        layers.append(entry)
    return {
        "precision": net.precision.weight_bits,
        "timesteps": net.timesteps,
        "neuron": _neuron_dict(net.neuron),
        "input": {"h": net.input_h, "w": net.input_w, "channels": net.input_channels},
        "layers": layers,
    }


def dump_network(net: NetworkSpec) -> str:
    return yaml.safe_dump(network_to_dict(net), sort_keys=False, default_flow_style=None)


def save_network(net: NetworkSpec, path) -> None:
    Path(path).write_text(dump_network(net))


def gesture_network(input_size=64, timesteps=20, weight_bits=4, neuron=None) -> NetworkSpec:
    """Conv(2,16), 4x Conv(16,16) with a 2x2 pool after every two, then FC(64,11).

    The FC layer needs 16*2*2 inputs, so the leading convolutions take
    stride 2 until the map is 8x8 before the two pools.
    """
    n_stride2 = 0
    size = input_size
    while size > 8:
        if size % 2:
            raise ValidationError(f"input_size must be 8 * 2**k, got {input_size}")
        size //= 2
        n_stride2 += 1
    if size != 8 or n_stride2 > 5:
        raise ValidationError(f"input_size must be 8 * 2**k with k <= 5, got {input_size}")
    neuron = neuron or NeuronSpec(threshold=4)
    plan = [(2, 16), (16, 16), (16, 16), "pool", (16, 16), (16, 16), "pool"]
    layers, c, h, w = [], 2, input_size, input_size
    convs = 0
    for item in plan:
        if item == "pool":
            layer = LayerSpec.maxpool(c, h, w)
        else:
            stride = 2 if convs < n_stride2 else 1
            layer = LayerSpec.conv(item[0], item[1], h, w, kernel=3, stride=stride)
            convs += 1
        layers.append(layer)
        c, h, w = layer.out_shape
    layers.append(LayerSpec.fc(c * h * w, 11))
    return NetworkSpec(tuple(layers), timesteps, validate_precision(weight_bits), neuron,
                       input_size, input_size, 2)


def optical_flow_network(input_h=288, input_w=384, timesteps=10, weight_bits=4, neuron=None) -> NetworkSpec:
    """Conv(2,32), 6x Conv(32,32), Conv(32,2), all 3x3 same-padded."""
    neuron = neuron or NeuronSpec(threshold=4)
    channels = [(2, 32)] + [(32, 32)] * 6 + [(32, 2)]
    layers = [LayerSpec.conv(cin, cout, input_h, input_w) for cin, cout in channels]
    return NetworkSpec(tuple(layers), timesteps, validate_precision(weight_bits), neuron,
                       input_h, input_w, 2)

"""Layer -> tile schedule: operating mode, row balancing, channel and position groups."""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import ceil

from .config import (
    ArchParams,
    LayerKind,
    LayerSpec,
    Mode,
    PrecisionMode,
    WEIGHT_ROWS,
    parallel_channels,
)
from .errors import FanInExceedsCapacity

MODE1_FAN_IN = WEIGHT_ROWS * 3
MODE2_FAN_IN = WEIGHT_ROWS * 9


def select_mode(fan_in: int) -> Mode:
    """Mode 1 up to 3 macros of rows, Mode 2 up to 9; boundaries go to the smaller mode."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    if fan_in <= MODE1_FAN_IN:
        return Mode.MODE1
    if fan_in <= MODE2_FAN_IN:
        return Mode.MODE2
    raise FanInExceedsCapacity(
        f"fan-in {fan_in} exceeds {MODE2_FAN_IN} rows (9 macros x {WEIGHT_ROWS}); "
        f"split the input channels into at least {ceil(fan_in / MODE2_FAN_IN)} partial layers"
    )


def chain_length(mode: Mode) -> int:
    return 3 if Mode(mode) is Mode.MODE1 else 9


def n_chains(mode: Mode) -> int:
    return 3 if Mode(mode) is Mode.MODE1 else 1


def distribute_rows(fan_in: int, n_macros: int) -> list:
    base, extra = divmod(fan_in, n_macros)
    return [base + 1 if i < extra else base for i in range(n_macros)]


@dataclass(frozen=True)
class TileSchedule:
    layer: LayerSpec
    precision: PrecisionMode
    mode: Mode
    channel_groups: tuple      # tuples of output channel indices
    position_groups: tuple     # tuples of output position indices
    rows_per_macro: tuple      # per compute macro along one chain
    loop_order: tuple = ("channel_group", "position_group", "timestep")

    @property
    def row_offsets(self) -> list:
        out, acc = [], 0
        for n in self.rows_per_macro:
            out.append((acc, acc + n))
            acc += n
        return out

    @property
    def channels_per_chain(self) -> int:
        return self.precision.weights_per_row

    def chain_channels(self, group) -> list:
        """Split one channel group over the chains; a chain holds <= 48/W channels."""
        k = self.channels_per_chain
        return [tuple(group[i:i + k]) for i in range(0, len(group), k)]

    def tiles(self):
        for cg in self.channel_groups:
            for pg in self.position_groups:
                yield cg, pg

    @property
    def n_tiles(self) -> int:
        return len(self.channel_groups) * len(self.position_groups)

    def to_dict(self) -> dict:
        return {
            "kind": self.layer.kind.value,
            "fan_in": self.layer.fan_in,
            "precision": str(self.precision),
            "mode": self.mode.value,
            "n_channel_groups": len(self.channel_groups),
            "n_position_groups": len(self.position_groups),
            "channel_groups": [list(g) for g in self.channel_groups],
            "position_groups": [list(g) for g in self.position_groups],
            "rows_per_macro": list(self.rows_per_macro),
            "loop_order": list(self.loop_order),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def tile_layer(layer: LayerSpec, p: PrecisionMode, arch: ArchParams = ArchParams()) -> TileSchedule:
    if layer.kind is LayerKind.MAXPOOL:
        raise ValueError("MaxPool layers run host-side and are not mapped")
    mode = select_mode(layer.fan_in)
    rows = distribute_rows(layer.fan_in, chain_length(mode))
    width = parallel_channels(mode, p)
    channels = list(range(layer.out_channels))
    channel_groups = tuple(tuple(channels[i:i + width]) for i in range(0, len(channels), width))
    per_group = arch.ifspad_cols if layer.kind is LayerKind.CONV else 1
    positions = list(range(layer.n_positions))
    position_groups = tuple(tuple(positions[i:i + per_group]) for i in range(0, len(positions), per_group))
    return TileSchedule(layer, p, mode, channel_groups, position_groups, tuple(rows))


def map_network(net, arch: ArchParams = ArchParams()) -> list:
    """Schedules for every weighted layer; ``None`` for host-side pooling."""
    out = []
    for i, layer in enumerate(net.layers):
        if not layer.has_weights:
            out.append(None)
            continue
        try:
            out.append(tile_layer(layer, net.precision, arch))
        except FanInExceedsCapacity as exc:
            raise FanInExceedsCapacity(str(exc), layer_index=i) from None
    return out

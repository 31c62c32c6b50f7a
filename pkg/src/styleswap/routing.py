"""Assembly of generator inputs from per-image encodings.

Face swapping feeds the layers below the border index with target codes and
the rest with source codes; ID mixing further splits the source side into a
global part (the ConvUp/Conv pair at the coarsest source-side resolution)
and a local part (everything above). Style maps always come from the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ArgumentError, ConfigurationError
from .generator import (
    GeneratorConfig,
    LayerDescriptor,
    LayerKind,
    StyleCodeSet,
    StyleMapSet,
    build_layer_table,
)

TARGET = "target"
SOURCE = "source"
GLOBAL_SOURCE = "global_source"
LOCAL_SOURCE = "local_source"

ROLES = (TARGET, SOURCE, GLOBAL_SOURCE, LOCAL_SOURCE)


@dataclass(frozen=True)
class RoutingPlan:
    """Which image role supplies the code at each layer index.

    ``map_source`` names the role supplying every style map.
    """

    name: str
    code_sources: tuple[str, ...]
    map_source: str = TARGET

    def __len__(self) -> int:
        return len(self.code_sources)

    def roles(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.code_sources) | {self.map_source}))

    def indices_for(self, role: str) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.code_sources) if r == role)

    def describe(self, table: Sequence[LayerDescriptor] | None = None) -> str:
        lines = [f"plan: {self.name}", f"style maps: {self.map_source}"]
        header = f"{'layer':>5}  {'code':<13}"
        if table is not None:
            header = f"{'layer':>5}  {'res':>5}  {'kind':<8}  {'code':<13}  map"
        lines.append(header)
        for i, role in enumerate(self.code_sources):
            if table is None:
                lines.append(f"{i:>5}  {role:<13}")
            else:
                layer = table[i]
                map_role = self.map_source if layer.takes_style_map else "-"
                lines.append(
                    f"{i:>5}  {layer.resolution:>5}  {layer.kind.value:<8}  {role:<13}  {map_role}"
                )
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "code_sources": list(self.code_sources),
            "map_source": self.map_source,
        }


def _validate_border(cfg: GeneratorConfig) -> tuple[LayerDescriptor, ...]:
    table = build_layer_table(cfg)
    if not 0 < cfg.border_index < len(table):
        raise ConfigurationError(
            [f"border index {cfg.border_index} outside (0, {len(table)})"]
        )
    return table


def plan_face_swap(cfg: GeneratorConfig) -> RoutingPlan:
    """Codes below the border come from the target, the rest from the source."""
    table = _validate_border(cfg)
    sources = tuple(
        TARGET if i < cfg.border_index else SOURCE for i in range(len(table))
    )
    return RoutingPlan(name="face_swap", code_sources=sources)


def plan_id_mix(cfg: GeneratorConfig) -> RoutingPlan:
    """Like face swap, but the ConvUp/Conv layers at the coarsest source-side
    resolution take the global source; all remaining source-side layers take
    the local source."""
    table = _validate_border(cfg)
    b = cfg.border_index
    global_resolution = table[b].resolution
    sources = []
    for layer in table:
        if layer.index < b:
            sources.append(TARGET)
        elif layer.resolution == global_resolution and layer.kind is not LayerKind.TO_RGB:
            sources.append(GLOBAL_SOURCE)
        else:
            sources.append(LOCAL_SOURCE)
    return RoutingPlan(name="id_mix", code_sources=tuple(sources))


def custom_plan(
    cfg: GeneratorConfig, assignments: Sequence[tuple[range, str]], name: str = "custom"
) -> RoutingPlan:
    """Build a plan from ordered (index range -> role) assignments; later
    entries override earlier ones. Every layer must end up assigned."""
    table = build_layer_table(cfg)
    sources: list[str | None] = [None] * len(table)
    for rng, role in assignments:
        if role not in ROLES:
            raise ArgumentError(f"unknown role {role!r}; expected one of {ROLES}")
        for i in rng:
            if not 0 <= i < len(table):
                raise ArgumentError(f"layer index {i} outside [0, {len(table)})")
            sources[i] = role
    missing = [i for i, s in enumerate(sources) if s is None]
    if missing:
        raise ArgumentError(f"layers {missing} have no assigned code source")
    return RoutingPlan(name=name, code_sources=tuple(sources))  # type: ignore[arg-type]


def assemble(
    codes_by_image: Mapping[str, StyleCodeSet],
    maps_target: StyleMapSet,
    plan: RoutingPlan,
) -> tuple[StyleCodeSet, StyleMapSet]:
    """Select the per-layer codes named by the plan; maps pass through."""
    for role in set(plan.code_sources):
        if role not in codes_by_image:
            raise ArgumentError(
                f"plan {plan.name!r} needs codes for role {role!r}; "
                f"got roles {sorted(codes_by_image)}"
            )
    picked = tuple(
        codes_by_image[role][i] for i, role in enumerate(plan.code_sources)
    )
    return StyleCodeSet(picked), maps_target

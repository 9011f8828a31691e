"""Material descriptions and their lumped spring-chain equivalents.

A leg segment is a solid cylinder. Its mass comes from the bulk density and
its axial spring constant from the cantilever relation ``k = 3 E I / L**3``
with ``I = pi r**4 / 4``. Segments are stacked in series from the hip
(index 0) to the foot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence


class MaterialError(ValueError):
    """Raised for physically invalid material or geometry parameters."""


class AshbyClass(str, Enum):
    METAL_CERAMIC = "metal_ceramic"
    POLYMER_NATURAL = "polymer_natural"


@dataclass(frozen=True)
class AshbyBounds:
    ashby_class: AshbyClass
    density_min: float
    density_max: float
    modulus_min: float
    modulus_max: float

    def __post_init__(self):
        if not self.density_min < self.density_max:
            raise MaterialError(f"empty density range for {self.ashby_class.value}")
        if not self.modulus_min < self.modulus_max:
            raise MaterialError(f"empty modulus range for {self.ashby_class.value}")


DEFAULT_BOUNDS = {
    AshbyClass.METAL_CERAMIC: AshbyBounds(AshbyClass.METAL_CERAMIC, 1.75e3, 2.25e4, 1.1e10, 1.0e12),
    # lower density bound is 5e2 kg/m^3
    AshbyClass.POLYMER_NATURAL: AshbyBounds(AshbyClass.POLYMER_NATURAL, 5.0e2, 3.5e3, 1.0e8, 9.0e9),
}


@dataclass(frozen=True)
class MaterialSpec:
    """A (density, modulus) point.

    ``rigid`` marks a material that is simulated as a single rigid link with
    no spring chain; its modulus is conventionally ``inf``.
    """

    name: str
    density: float  # kg/m^3
    modulus: float  # Pa
    ashby_class: AshbyClass | None = None
    rigid: bool = False

    def __post_init__(self):
        if not (self.density > 0 and math.isfinite(self.density)):
            raise MaterialError(f"{self.name}: density must be positive and finite, got {self.density}")
        if not self.modulus > 0:
            raise MaterialError(f"{self.name}: modulus must be positive, got {self.modulus}")
        if not self.rigid and not math.isfinite(self.modulus):
            raise MaterialError(f"{self.name}: only rigid materials may have infinite modulus")


@dataclass(frozen=True)
class SegmentSpec:
    material: MaterialSpec
    length: float  # m
    radius: float  # m

    def __post_init__(self):
        if not self.length > 0:
            raise MaterialError(f"segment length must be positive, got {self.length}")
        if not self.radius > 0:
            raise MaterialError(f"segment radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class SegmentedLeg:
    """Ordered chain of segments; index 0 sits next to the hopper base."""

    segments: tuple[SegmentSpec, ...]
    masses: tuple[float, ...]
    stiffnesses: tuple[float, ...]
    damping: tuple[float, ...]
    rigid: bool = False

    def __post_init__(self):
        n = len(self.segments)
        if n < 1:
            raise MaterialError("a leg needs at least one segment")
        if not (len(self.masses) == len(self.stiffnesses) == len(self.damping) == n):
            raise MaterialError("per-segment arrays must match the segment count")
        if any(c < 0 for c in self.damping):
            raise MaterialError("damping coefficients must be non-negative")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(s.length for s in self.segments)

    @property
    def total_length(self) -> float:
        return sum(self.lengths)

    @property
    def total_mass(self) -> float:
        return sum(self.masses)

    @property
    def n_flexible(self) -> int:
        return 0 if self.rigid else self.n_segments

    def equivalent_stiffness(self) -> float:
        if self.rigid:
            return math.inf
        return series_equivalent_stiffness(self.stiffnesses)

    def reversed(self) -> "SegmentedLeg":
        return SegmentedLeg(
            segments=self.segments[::-1],
            masses=self.masses[::-1],
            stiffnesses=self.stiffnesses[::-1],
            damping=self.damping[::-1],
            rigid=self.rigid,
        )

    def label(self) -> str:
        return "-".join(s.material.name for s in self.segments)


@dataclass(frozen=True)
class LegGeometry:
    radius: float = 0.02
    lengths: tuple[float, ...] = (1.0 / 3, 1.0 / 3, 1.0 / 3)

    @classmethod
    def uniform(cls, n_segments: int, total_length: float = 1.0, radius: float = 0.02) -> "LegGeometry":
        if n_segments < 1:
            raise MaterialError("need at least one segment")
        return cls(radius=radius, lengths=(total_length / n_segments,) * n_segments)

    @property
    def total_length(self) -> float:
        return sum(self.lengths)


def porosity_from_bulk_density(bulk_density: float, particle_density: float) -> float:
    """Porosity ``1 - rho_b / rho_s`` of a material."""
    if not particle_density > 0:
        raise MaterialError(f"particle density must be positive, got {particle_density}")
    if bulk_density < 0 or bulk_density > particle_density:
        raise MaterialError(
            f"bulk density {bulk_density} must lie in [0, {particle_density}] (porosity in [0, 1])"
        )
    return 1.0 - bulk_density / particle_density


def bulk_density_from_porosity(porosity: float, particle_density: float) -> float:
    if not 0.0 <= porosity <= 1.0:
        raise MaterialError(f"porosity must lie in [0, 1], got {porosity}")
    return particle_density * (1.0 - porosity)


def second_moment_of_area(radius: float) -> float:
    return math.pi * radius**4 / 4.0


def segment_mass(spec: SegmentSpec) -> float:
    return spec.material.density * math.pi * spec.radius**2 * spec.length


def stiffness_from_modulus(spec: SegmentSpec) -> float:
    return 3.0 * spec.material.modulus * second_moment_of_area(spec.radius) / spec.length**3


def series_equivalent_stiffness(stiffnesses: Sequence[float]) -> float:
    if len(stiffnesses) == 0:
        raise MaterialError("need at least one stiffness")
    compliance = 0.0
    for k in stiffnesses:
        if not k > 0:
            raise MaterialError(f"stiffness must be positive, got {k}")
        compliance += 1.0 / k
    return 1.0 / compliance


def build_leg(
    materials: Sequence[MaterialSpec],
    geometry: LegGeometry,
    damping_ratio: float = 0.05,
) -> SegmentedLeg:
    """Build a leg with one segment per material, hip first.

    Damping per segment is ``2 * zeta * sqrt(k * m)``. A single rigid
    material yields a one-link rigid leg spanning the full geometry length.
    """
    if len(materials) == 0:
        raise MaterialError("need at least one material")
    if damping_ratio < 0:
        raise MaterialError(f"damping ratio must be non-negative, got {damping_ratio}")
    if any(m.rigid for m in materials):
        if len(materials) != 1:
            raise MaterialError("rigid materials cannot be mixed into a spring chain")
        seg = SegmentSpec(materials[0], geometry.total_length, geometry.radius)
        return SegmentedLeg((seg,), (segment_mass(seg),), (math.inf,), (0.0,), rigid=True)
    if len(materials) != len(geometry.lengths):
        raise MaterialError(
            f"{len(materials)} materials given for {len(geometry.lengths)} segment lengths"
        )
    segments = tuple(SegmentSpec(m, L, geometry.radius) for m, L in zip(materials, geometry.lengths))
    masses = tuple(segment_mass(s) for s in segments)
    stiffnesses = tuple(stiffness_from_modulus(s) for s in segments)
    damping = tuple(2.0 * damping_ratio * math.sqrt(k * m) for k, m in zip(stiffnesses, masses))
    return SegmentedLeg(segments, masses, stiffnesses, damping)


def mono_leg(material: MaterialSpec, geometry: LegGeometry, damping_ratio: float = 0.05) -> SegmentedLeg:
    if material.rigid:
        return build_leg([material], geometry, damping_ratio)
    return build_leg([material] * len(geometry.lengths), geometry, damping_ratio)


def validate_ashby(spec: MaterialSpec, bounds: AshbyBounds) -> bool:
    """Closed-interval membership of ``spec`` in an Ashby class box."""
    return (
        bounds.density_min <= spec.density <= bounds.density_max
        and bounds.modulus_min <= spec.modulus <= bounds.modulus_max
    )


def in_ashby_union(density: float, modulus: float, bounds: Mapping[AshbyClass, AshbyBounds]) -> bool:
    probe = MaterialSpec("probe", density, modulus)
    return any(validate_ashby(probe, b) for b in bounds.values())


@dataclass
class MaterialCatalog:
    entries: dict[str, MaterialSpec] = field(default_factory=dict)
    bounds: dict[AshbyClass, AshbyBounds] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __getitem__(self, name: str) -> MaterialSpec:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"unknown material {name!r}; known: {sorted(self.entries)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self) -> list[str]:
        return list(self.entries)

    def validate(self) -> None:
        for spec in self.entries.values():
            if spec.ashby_class is not None and not validate_ashby(spec, self.bounds[spec.ashby_class]):
                raise MaterialError(
                    f"{spec.name} ({spec.density} kg/m^3, {spec.modulus} Pa) lies outside "
                    f"the {spec.ashby_class.value} bounds"
                )

    @classmethod
    def from_config(cls, section: Mapping) -> "MaterialCatalog":
        bounds = {}
        for key, entry in section.get("ashby", {}).items():
            cls_ = AshbyClass(key)
            (rho_lo, rho_hi), (e_lo, e_hi) = entry["density_kg_m3"], entry["modulus_pa"]
            bounds[cls_] = AshbyBounds(cls_, float(rho_lo), float(rho_hi), float(e_lo), float(e_hi))
        entries = {}
        for name, entry in section.get("catalog", {}).items():
            rigid = bool(entry.get("rigid", False))
            modulus = float(entry.get("modulus_pa", math.inf if rigid else 0.0))
            ashby = entry.get("ashby_class")
            entries[name] = MaterialSpec(
                name=name,
                density=float(entry["density_kg_m3"]),
                modulus=modulus,
                ashby_class=AshbyClass(ashby) if ashby else None,
                rigid=rigid,
            )
        catalog = cls(entries=entries, bounds=bounds or dict(DEFAULT_BOUNDS))
        catalog.validate()
        return catalog

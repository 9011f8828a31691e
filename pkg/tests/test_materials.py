import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopmat.materials import (
    DEFAULT_BOUNDS,
    AshbyClass,
    LegGeometry,
    MaterialCatalog,
    MaterialError,
    MaterialSpec,
    SegmentSpec,
    build_leg,
    bulk_density_from_porosity,
    in_ashby_union,
    mono_leg,
    porosity_from_bulk_density,
    segment_mass,
    series_equivalent_stiffness,
    stiffness_from_modulus,
    validate_ashby,
)
from hopmat.config import load_config

PVC = MaterialSpec("PVC", 1390.0, 3.0e9, AshbyClass.POLYMER_NATURAL)
TI = MaterialSpec("Ti", 4430.0, 1.14e11, AshbyClass.METAL_CERAMIC)
SS = MaterialSpec("SS", 8000.0, 2.0e11, AshbyClass.METAL_CERAMIC)
GEOM = LegGeometry.uniform(3, 1.0, 0.02)

positive = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False, allow_infinity=False)


# porosity


@pytest.mark.parametrize(
    "bulk, particle, expected",
    [(8000.0, 8000.0, 0.0), (0.0, 8000.0, 1.0), (4000.0, 8000.0, 0.5)],
)
def test_porosity_examples(bulk, particle, expected):
    assert porosity_from_bulk_density(bulk, particle) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("bulk, particle", [(9000.0, 8000.0), (-1.0, 8000.0), (100.0, 0.0)])
def test_porosity_rejects_out_of_range(bulk, particle):
    with pytest.raises(MaterialError):
        porosity_from_bulk_density(bulk, particle)


@given(st.floats(0.0, 1.0), st.floats(1.0, 3e4))
def test_porosity_round_trip(phi, rho_s):
    rho_b = bulk_density_from_porosity(phi, rho_s)
    assert porosity_from_bulk_density(rho_b, rho_s) == pytest.approx(phi, abs=1e-12)


@given(st.floats(1.0, 3e4), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_porosity_decreases_with_bulk_density(rho_s, f1, f2):
    lo, hi = sorted((f1, f2))
    if hi - lo < 1e-9:
        return
    assert porosity_from_bulk_density(lo * rho_s, rho_s) > porosity_from_bulk_density(hi * rho_s, rho_s)


# segment mass and stiffness


@pytest.mark.parametrize(
    "rho, r, L, expected",
    [(1000.0, 0.05, 0.2, 1000.0 * math.pi * 0.05**2 * 0.2), (8000.0, 0.02, 0.1, 8000.0 * math.pi * 0.02**2 * 0.1)],
)
def test_segment_mass_examples(rho, r, L, expected):
    m = segment_mass(SegmentSpec(MaterialSpec("x", rho, 1e9), L, r))
    assert m == pytest.approx(expected, rel=1e-12)
    # frozen hand values
    assert m == pytest.approx({1000.0: 1.5708, 8000.0: 1.0053}[rho], abs=1e-4)


def _k_hand(E, r, L):
    return 3.0 * E * (math.pi * r**4 / 4.0) / L**3


@pytest.mark.parametrize("E, expected", [(2.0e11, 6.032e5), (3.0e9, 9.048e3)])
def test_stiffness_examples(E, expected):
    k = stiffness_from_modulus(SegmentSpec(MaterialSpec("x", 1000.0, E), 0.5, 0.02))
    assert k == pytest.approx(expected, rel=1e-3)
    assert k == pytest.approx(_k_hand(E, 0.02, 0.5), rel=1e-12)


def test_segment_rejects_bad_geometry():
    with pytest.raises(MaterialError):
        SegmentSpec(SS, 0.0, 0.02)
    with pytest.raises(MaterialError):
        SegmentSpec(SS, 0.1, -0.02)


@given(positive, st.floats(0.001, 0.1), st.floats(0.01, 2.0), st.floats(1.1, 10.0))
def test_stiffness_scaling(E, r, L, s):
    mat = MaterialSpec("x", 1000.0, E)
    k = stiffness_from_modulus(SegmentSpec(mat, L, r))
    assert stiffness_from_modulus(SegmentSpec(MaterialSpec("y", 1000.0, s * E), L, r)) / k == pytest.approx(s, rel=1e-9)
    assert stiffness_from_modulus(SegmentSpec(mat, L, s * r)) / k == pytest.approx(s**4, rel=1e-9)
    assert stiffness_from_modulus(SegmentSpec(mat, s * L, r)) / k == pytest.approx(s**-3, rel=1e-9)


# series stiffness


def test_series_example():
    assert series_equivalent_stiffness([3.0, 6.0]) == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("ks", [[], [1.0, 0.0], [2.0, -1.0]])
def test_series_rejects(ks):
    with pytest.raises(MaterialError):
        series_equivalent_stiffness(ks)


@given(st.lists(positive, min_size=1, max_size=8))
def test_series_bounded_by_softest(ks):
    keq = series_equivalent_stiffness(ks)
    assert keq <= min(ks) * (1 + 1e-12)
    assert keq == pytest.approx(1.0 / sum(1.0 / k for k in ks), rel=1e-12)


@given(positive, st.integers(1, 10))
def test_identical_springs_divide(k, n):
    assert series_equivalent_stiffness([k] * n) == pytest.approx(k / n, rel=1e-12)


# legs


def test_build_leg_gradient_order_and_reversal():
    leg = build_leg([PVC, TI, SS], GEOM)
    assert leg.label() == "PVC-Ti-SS"
    rev = leg.reversed()
    assert rev.label() == "SS-Ti-PVC"
    assert rev != leg
    assert rev.total_mass == pytest.approx(leg.total_mass, rel=1e-12)
    assert rev.equivalent_stiffness() == pytest.approx(leg.equivalent_stiffness(), rel=1e-12)
    assert build_leg([SS, TI, PVC], GEOM) == rev


def test_build_leg_damping():
    leg = build_leg([SS], LegGeometry((0.02), (1.0,)), damping_ratio=0.1)
    k, m = leg.stiffnesses[0], leg.masses[0]
    assert leg.damping[0] == pytest.approx(2 * 0.1 * math.sqrt(k * m), rel=1e-12)


def test_build_leg_rejects_count_mismatch_and_negative_damping():
    with pytest.raises(MaterialError):
        build_leg([SS, SS], GEOM)
    with pytest.raises(MaterialError):
        build_leg([SS] * 3, GEOM, damping_ratio=-0.1)
    with pytest.raises(MaterialError):
        build_leg([], GEOM)


def test_rigid_leg():
    md = MaterialSpec("MD", 1000.0, math.inf, rigid=True)
    leg = mono_leg(md, GEOM)
    assert leg.rigid and leg.n_segments == 1 and leg.n_flexible == 0
    assert leg.equivalent_stiffness() == math.inf
    assert leg.total_mass == pytest.approx(1000.0 * math.pi * 0.02**2 * 1.0, rel=1e-12)
    with pytest.raises(MaterialError):
        build_leg([md, SS], LegGeometry.uniform(2))


def test_material_rejects_nonphysical():
    with pytest.raises(MaterialError):
        MaterialSpec("bad", -1.0, 1e9)
    with pytest.raises(MaterialError):
        MaterialSpec("bad", 1000.0, 0.0)
    with pytest.raises(MaterialError):
        MaterialSpec("bad", 1000.0, math.inf)


materials = st.builds(
    lambda rho, e: MaterialSpec("m", rho, e),
    st.floats(100.0, 3e4),
    st.floats(1e8, 1e12),
)


@given(st.lists(materials, min_size=3, max_size=3))
def test_leg_mass_conservation(mats):
    leg = build_leg(mats, GEOM)
    expected = sum(m.density * math.pi * GEOM.radius**2 * L for m, L in zip(mats, GEOM.lengths))
    assert leg.total_mass == pytest.approx(expected, rel=1e-12)


@given(materials, st.integers(1, 6))
def test_mono_leg_equivalent_stiffness(mat, n):
    geom = LegGeometry.uniform(n, 1.0, 0.02)
    k_single = stiffness_from_modulus(SegmentSpec(mat, 1.0 / n, 0.02))
    assert mono_leg(mat, geom).equivalent_stiffness() == pytest.approx(k_single / n, rel=1e-12)


@settings(max_examples=50)
@given(st.lists(materials, min_size=3, max_size=3))
def test_reversed_gradient_invariants(mats):
    leg = build_leg(mats, GEOM)
    rev = build_leg(mats[::-1], GEOM)
    assert rev.total_mass == pytest.approx(leg.total_mass, rel=1e-12)
    assert rev.equivalent_stiffness() == pytest.approx(leg.equivalent_stiffness(), rel=1e-12)


# Ashby classes


def test_validate_ashby_examples():
    metal = DEFAULT_BOUNDS[AshbyClass.METAL_CERAMIC]
    polymer = DEFAULT_BOUNDS[AshbyClass.POLYMER_NATURAL]
    assert validate_ashby(SS, metal)
    assert not validate_ashby(PVC, metal)
    assert validate_ashby(PVC, polymer)
    corner = MaterialSpec("corner", metal.density_min, metal.modulus_max)
    assert validate_ashby(corner, metal)
    just_out = MaterialSpec("out", metal.density_min * (1 - 1e-12), metal.modulus_max)
    assert not validate_ashby(just_out, metal)


def test_ashby_union():
    assert in_ashby_union(8000.0, 2e11, DEFAULT_BOUNDS)
    assert not in_ashby_union(1390.0, 2e11, DEFAULT_BOUNDS)  # light and stiff: in neither class


def test_catalog_from_default_config():
    cat = MaterialCatalog.from_config(load_config()["materials"])
    assert set(cat.names()) == {"MD", "PVC", "Al", "Ti", "SS"}
    assert cat["MD"].rigid
    with pytest.raises(KeyError):
        cat["unobtainium"]


def test_catalog_rejects_out_of_class_entry():
    section = {"catalog": {"fake": {"density_kg_m3": 100.0, "modulus_pa": 1e9, "ashby_class": "polymer_natural"}}}
    with pytest.raises(MaterialError):
        MaterialCatalog.from_config(section)

import numpy as np
import pytest

from triconv.caps import build_caps, cap_angle

# Vertex counts of repeated icosahedral subdivision are 10*4^level + 2, and
# the shipped aperture-to-level rule lands near 10 A^2 centers.
DENSITY_CAP = 12


def random_dirs(count, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal((count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.mark.parametrize("aperture", [1, 2, 4, 8])
def test_cover_multiplicity_between_one_and_three(aperture):
    caps = build_caps(aperture)
    chi = caps.counts(random_dirs(20000, seed=aperture))
    assert chi.min() >= 1
    assert chi.max() <= 3


@pytest.mark.parametrize("aperture", [1, 2, 4, 8, 16])
def test_center_count_quadratic_in_aperture(aperture):
    caps = build_caps(aperture)
    assert len(caps) <= DENSITY_CAP * aperture**2


@pytest.mark.parametrize("aperture", [2, 4, 8])
def test_center_separation_comparable_to_inverse_aperture(aperture):
    caps = build_caps(aperture)
    c = caps.centers
    dots = np.clip(c @ c.T, -1, 1)
    np.fill_diagonal(dots, -1.0)
    nearest = np.arccos(np.max(dots, axis=1))
    assert nearest.min() >= 1 / (2 * aperture)
    assert nearest.min() <= 2 / aperture


def test_cap_radius_scales_like_inverse_aperture():
    for aperture in (2, 4, 8, 16):
        rad = build_caps(aperture).radius
        assert 0.25 / aperture <= rad <= 1.0 / aperture


def test_bad_aperture_rejected():
    with pytest.raises(ValueError):
        build_caps(3)
    with pytest.raises(ValueError):
        build_caps(0)


def test_cap_angle_of_a_cap_with_itself_is_zero():
    caps = build_caps(4)
    assert cap_angle(caps, 5, 5) == 0.0


def test_cap_angle_vanishes_for_antipodal_caps():
    caps = build_caps(4)
    c0 = caps.centers[0]
    j2 = int(np.argmin(caps.centers @ c0))
    assert np.allclose(caps.centers[j2], -c0, atol=1e-12)
    assert cap_angle(caps, 0, j2) < 1e-12


def test_cap_angle_near_orthogonal_pair():
    caps = build_caps(8)
    dots = np.abs(caps.centers @ caps.centers[0])
    j2 = int(np.argmin(dots))
    ang = cap_angle(caps, 0, j2)
    # Sampling inside the caps can only shrink the center angle, by at
    # most one cap diameter per side.
    center_ang = float(np.arccos(dots[j2]))
    assert ang <= center_ang + 1e-12
    assert ang >= center_ang - 2 * caps.radius - 0.02
    assert abs(ang - np.pi / 2) <= 0.5


def test_sample_lattice_stays_inside_cap():
    caps = build_caps(4)
    pts = caps.sample_lattice(3)
    assert pts.shape == (65, 3)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    cos = pts @ caps.centers[3]
    assert np.all(cos >= np.cos(caps.radius) - 1e-12)


def test_deterministic_rebuild():
    a = build_caps(4)
    b = build_caps(4)
    assert np.array_equal(a.centers, b.centers)
    assert a.radius == b.radius

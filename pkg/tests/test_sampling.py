import math

import numpy as np
import pytest

from signedchord.geometry import Body, Difference, box, shell, sphere
from signedchord.sampling import (RandomSource, RejectionStall, StreamPlan, fan_out,
                                  hitting_mu_lines, sample_interior_point, sample_interior_points,
                                  sample_isotropic_direction, sample_mu_line, sample_mu_lines,
                                  sample_nu_ray, sample_point_pair, sample_point_pairs)
from signedchord.signedhist import SignedHistogram, Tally, two_sample_test

N = 1_000_000


def _within(samples, ref, sigmas=4.0):
    m = samples.mean()
    return abs(m - ref) < sigmas * samples.std(ddof=1) / math.sqrt(samples.size)


def test_isotropic_direction_moments(rng):
    v = sample_isotropic_direction(rng, N)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    for k in range(3):
        assert _within(v[:, k], 0.0)
    assert _within(v[:, 2] ** 2, 1 / 3)
    assert sample_isotropic_direction(rng).shape == (3,)


def test_interior_points_unit_ball(rng, unit_sphere):
    p = sample_interior_points(rng, unit_sphere, N)
    for k in range(3):
        assert _within(p[:, k], 0.0)
    assert _within(np.einsum("ij,ij->i", p, p), 3 / 5)


def test_interior_points_shell_inside(rng, unit_shell):
    p = sample_interior_points(rng, unit_shell, 100_000)
    assert unit_shell.contains(p).all()
    assert sample_interior_point(rng, unit_shell).shape == (3,)


def test_rejection_stall(rng):
    # a slab of relative thickness 1e-8 inside its bounding box
    solid = Difference(box((0, 0, 0), (1, 1, 1)), box((1e-8, -1, -1), (2, 2, 2)))
    body = Body.from_solid(solid, {"volume": 1e-8, "surface": 2.0})
    with pytest.raises(RejectionStall):
        sample_interior_points(rng, body, 10, window=1_000_000)


def test_mu_lines_meet_bounding_sphere(rng):
    c = np.array([1.0, -2.0, 0.5])
    o, d = sample_mu_lines(rng, c, 3.0, 10_000)
    # distance from the centre to each line
    r = np.linalg.norm(np.cross(c - o, d), axis=1)
    assert np.all(r <= 3.0)
    assert np.allclose(np.einsum("ij,ij->i", o - c, d), 0.0, atol=1e-12)
    o1, d1 = sample_mu_line(rng, (c, 3.0))
    assert o1.shape == d1.shape == (3,)


@pytest.mark.parametrize("radius,prob", [(2.0, 0.25), (4.0, 0.0625)])
def test_hit_probability_projected_area(rng, unit_sphere, radius, prob):
    o, d = sample_mu_lines(rng, np.zeros(3), radius, N)
    hits = (unit_sphere.intersect(o, d).counts() > 0).astype(float)
    assert _within(hits, prob)


def test_hitting_lines_count_all_draws(rng, unit_sphere):
    o, d, iv, tried = hitting_mu_lines(rng, unit_sphere, 5000, np.zeros(3), 2.0)
    assert len(o) == iv.n_lines == 5000
    assert np.all(iv.counts() == 1)
    # tried ~ 5000 / (1/4); binomial-negative spread is about 4 * sqrt(5000 * 3)
    assert abs(tried - 20000) < 4 * math.sqrt(5000 * 0.75) / 0.25


def test_sphere_chords_follow_l_over_2(rng, unit_sphere):
    _, _, iv, _ = hitting_mu_lines(rng, unit_sphere, 200_000)
    lengths = iv.total_lengths()
    # mu(l) = l/2 on [0, 2]: mean 4/3
    assert _within(lengths, 4 / 3)


def test_nu_ray_and_pairs(rng, unit_sphere):
    o, d = sample_nu_ray(rng, unit_sphere)
    assert unit_sphere.contains(o[None])[0] and abs(np.linalg.norm(d) - 1) < 1e-12
    a, b = sample_point_pairs(rng, unit_sphere, N)
    r = np.linalg.norm(a - b, axis=1)
    assert r.max() <= 2.0
    assert np.array_equal(r, np.linalg.norm(b - a, axis=1))
    assert _within(r, 36 / 35)
    p, q = sample_point_pair(rng, unit_sphere)
    assert p.shape == q.shape == (3,)


def test_random_source_determinism():
    a = RandomSource(7, 3, "x").generator().random(10)
    b = RandomSource(7, 3, "x").generator().random(10)
    c = RandomSource(7, 4, "x").generator().random(10)
    d = RandomSource(7, 3, "y").generator().random(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_plan_chunks():
    plan = StreamPlan(1, 4)
    assert plan.chunks(10) == [3, 3, 2, 2]
    assert plan.chunks(2) == [1, 1]
    assert plan.chunks(0) == []


def _lengths_chunk(rng, m, body):
    _, _, iv, _ = hitting_mu_lines(rng, body, m)
    return Tally().fill(iv.total_lengths())


def test_worker_count_does_not_change_results(unit_shell):
    one = fan_out(_lengths_chunk, StreamPlan(5, 4, 1), "t", 4000, unit_shell)
    two = fan_out(_lengths_chunk, StreamPlan(5, 4, 2), "t", 4000, unit_shell)
    assert (one.sy, one.syy, one.n) == (two.sy, two.syy, two.n)


def test_fan_out_rejects_empty():
    with pytest.raises(ValueError):
        fan_out(_lengths_chunk, StreamPlan(), "t", 0, None)


def test_chord_histogram_invariant_under_rigid_motion(rng):
    a = Body.from_solid(shell(1.0, 0.5))
    b = Body.from_solid(Difference(sphere(1.0, (0.4, -0.3, 0.2)), sphere(0.5, (0.4, -0.3, 0.2))))
    center, radius = np.zeros(3), 2.0
    ha, hb = SignedHistogram.uniform(0, 2, 64), SignedHistogram.uniform(0, 2, 64)
    for body, h in ((a, ha), (b, hb)):
        _, _, iv, _ = hitting_mu_lines(rng, body, 200_000, center, radius)
        h.fill(iv.hi - iv.lo)
    assert two_sample_test(ha, hb)[2] > 1e-3

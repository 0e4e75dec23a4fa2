import math

import numpy as np
import pytest

from signedchord.estimators import NonConvexUnsupported, estimate_chords
from signedchord.paths import (MeanPathRow, WalkConfig, kink_pair_check, mean_path_report,
                               run_walks, simulate_entering_walk, simulate_walks)
from signedchord.sampling import StreamPlan
from signedchord.signedhist import two_sample_test


@pytest.mark.parametrize("straight", [False, True])
def test_kink_identity_exact(unit_sphere, unit_box, plan, straight):
    for body in (unit_sphere, unit_box):
        rep = kink_pair_check(body, plan, 10_000, straight=straight)
        assert rep.n == 10_000 and rep.passed, rep.to_json()
        assert rep.max_rel_residual < 1e-9


def test_kink_requires_convex(unit_shell, plan):
    with pytest.raises(NonConvexUnsupported):
        kink_pair_check(unit_shell, plan, 10)
    with pytest.raises(ValueError):
        kink_pair_check(unit_shell.__class__.from_solid(unit_shell.solid.a), plan, 0)


def test_walk_config_validation(unit_sphere):
    with pytest.raises(ValueError):
        WalkConfig(0.0, unit_sphere)
    with pytest.raises(ValueError):
        WalkConfig(1.0, unit_sphere, max_steps=0)


@pytest.mark.parametrize("fixture", ["unit_sphere", "unit_box", "unit_shell"])
def test_path_record_bookkeeping(fixture, request, rng):
    body = request.getfixturevalue(fixture)
    for _ in range(50):
        rec = simulate_entering_walk(WalkConfig(0.3, body), rng)
        assert not rec.truncated
        assert len(rec.legs) == rec.n_scatters + 1 == len(rec.vertices) - 1
        assert rec.in_body_length == pytest.approx(math.fsum(rec.legs), rel=1e-12)
        assert rec.in_body_length > 0
        if body.metrics.convex:
            hops = [np.linalg.norm(b - a) for a, b in zip(rec.vertices, rec.vertices[1:])]
            assert np.allclose(hops, rec.legs, rtol=1e-9, atol=1e-12)


def test_truncation(unit_sphere, rng):
    # walks starting at the surface may escape early; the rest stop at the step cap
    for _ in range(20):
        rec = simulate_entering_walk(WalkConfig(1e-3, unit_sphere, max_steps=3), rng)
        assert rec.truncated == (rec.n_scatters == 3) and rec.n_scatters <= 3
    w = simulate_walks(WalkConfig(1e-3, unit_sphere, max_steps=3), rng, 1000)
    assert np.array_equal(w.truncated, w.n_scatters == 3) and w.truncated.mean() > 0.5
    rows = mean_path_report([WalkConfig(1e-3, unit_sphere, max_steps=3)], StreamPlan(1, 2), 100)
    assert rows[0].flag == "truncation" and not rows[0].passed


def test_no_scattering_limit_reproduces_chords(unit_sphere, plan):
    walks = run_walks(WalkConfig(1e12, unit_sphere), plan, 200_000, bins=64)
    assert walks.n_scatters == 0
    chords = estimate_chords(unit_sphere, StreamPlan(77, 8), 200_000, bins=64)
    assert two_sample_test(walks.hist, chords.mu_O)[2] > 1e-3


@pytest.mark.parametrize("mfp", [0.5, 2.0])
def test_sphere_mean_path(unit_sphere, plan, mfp):
    rows = mean_path_report([WalkConfig(mfp, unit_sphere)], plan, 200_000)
    r = rows[0]
    assert r.reference == pytest.approx(4 / 3) and r.passed, r.to_json()
    assert r.mean_scatters > 0 and r.truncated_fraction == 0


def test_box_mean_path(unit_box, plan):
    r = mean_path_report([WalkConfig(0.3, unit_box)], plan, 200_000)[0]
    assert r.reference == pytest.approx(2 / 3) and r.passed


def test_empty_report(unit_sphere, plan):
    assert mean_path_report([WalkConfig(1.0, unit_sphere)], plan, 0) == []


def test_row_formats(unit_sphere, plan):
    r = mean_path_report([WalkConfig(1.0, unit_sphere)], plan, 1000)[0]
    assert len(r.to_csv().split(",")) == len(MeanPathRow.CSV_HEADER.split(","))
    assert "pass" in r.to_json() and "passed" not in r.to_json()

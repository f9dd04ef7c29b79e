import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stripstab.errors import ConfigurationError, DomainError, ProfileError
from stripstab.profiles import (
    AdmissibilityWarning, Concavity, check_admissibility, couette, eval_profile, load_tabulated,
    make_profile, poiseuille, tabulated, tanh_symmetric,
)


def test_poiseuille_values():
    assert eval_profile(poiseuille(), 0.5) == (1.0, 0.0, -8.0)
    assert eval_profile(poiseuille(), 0.0) == (0.0, 4.0, -8.0)


def test_tabulated_matches_parabola():
    y = np.linspace(0.0, 1.0, 64)
    p = tabulated(y, 4 * y * (1 - y))
    np.testing.assert_allclose(eval_profile(p, 0.3), (0.84, 1.6, -8.0), atol=1e-8)


def test_tabulated_from_csv(tmp_path):
    y = np.linspace(0.0, 1.0, 33)
    path = tmp_path / "prof.csv"
    path.write_text("y,U\n" + "\n".join(f"{float(a)!r},{float(4 * a * (1 - a))!r}" for a in y))
    p = load_tabulated(path)
    np.testing.assert_allclose(eval_profile(p, 0.7), (0.84, -1.6, -8.0), atol=1e-8)


def test_tabulated_rejects_bad_input(tmp_path):
    with pytest.raises(ProfileError):
        tabulated([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    with pytest.raises(ProfileError):
        tabulated(np.linspace(0.1, 1.0, 8), np.zeros(8))
    with pytest.raises(ConfigurationError):
        load_tabulated(tmp_path / "missing.csv")


def test_domain_error():
    with pytest.raises(DomainError):
        eval_profile(poiseuille(), 1.5)
    with pytest.raises(DomainError):
        eval_profile(poiseuille(), -1e-3)


def test_admissibility_poiseuille():
    r = check_admissibility(poiseuille())
    assert (r.symmetric, r.wall_conditions, r.concavity) == (True, True, Concavity.CONCAVE)


def test_admissibility_couette_warns():
    with pytest.warns(AdmissibilityWarning):
        r = check_admissibility(couette())
    assert not r.symmetric and not r.admissible


def test_tanh_profile_is_concave():
    # U'' < 0 throughout for beta = 10: the product of two saturating tanh
    # factors never turns convex, so the class is concave rather than neither
    p = tanh_symmetric(10.0)
    r = check_admissibility(p)
    assert r.symmetric and r.wall_conditions
    y = np.linspace(0.0, 1.0, 2001)
    assert np.all(p.on_grid(y)[2] < 0)
    assert r.concavity is Concavity.CONCAVE


def test_wall_violation_is_an_error():
    shifted = tabulated(np.linspace(0, 1, 16), np.linspace(0, 1, 16) + 0.1)
    with pytest.raises(ProfileError):
        check_admissibility(shifted)


def test_make_profile_kinds():
    assert make_profile("poiseuille").name == "poiseuille"
    assert make_profile("tanh", beta=5.0).params == (5.0,)
    with pytest.raises(ConfigurationError):
        make_profile("tabulated")
    with pytest.raises(ConfigurationError):
        make_profile("nope")


PROFILES = [poiseuille(), tanh_symmetric(10.0), tanh_symmetric(4.0)]


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.sampled_from(range(len(PROFILES))))
def test_reflection_invariance(y, k):
    p = PROFILES[k]
    u, du, d2u = eval_profile(p, y)
    ur, dur, d2ur = eval_profile(p, 1.0 - y)
    assert abs(u - ur) < 1e-10
    assert abs(du + dur) < 1e-10 * max(1.0, abs(du))
    assert abs(d2u - d2ur) < 1e-10 * max(1.0, abs(d2u))


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1 - 1e-3), st.sampled_from(range(len(PROFILES))))
def test_derivatives_match_centered_differences(y, k):
    p, h = PROFILES[k], 1e-5
    u0, du, d2u = eval_profile(p, y)
    up, um = eval_profile(p, y + h)[0], eval_profile(p, y - h)[0]
    fd1 = (up - um) / (2 * h)
    dp, dm = eval_profile(p, y + h)[1], eval_profile(p, y - h)[1]
    fd2 = (dp - dm) / (2 * h)
    scale1 = max(abs(du), 1.0)
    scale2 = max(abs(d2u), 1.0)
    assert abs(fd1 - du) / scale1 < 1e-6
    assert abs(fd2 - d2u) / scale2 < 1e-6

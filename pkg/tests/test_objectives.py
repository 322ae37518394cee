import math

import numpy as np
import pytest

from sgdlab.core import LabError, rng_substream
from sgdlab.objectives import (
    OBJECTIVE_IDS,
    DegenerateInputError,
    OutsideWindowError,
    catalog,
    distance_to_stationary_set,
    gradient_check,
    local_pl_ratio,
    make_objective,
)

# Quartic oracle: with y = x - 5/2 the raw product is y^4 - 5/2 y^2 + 9/16, so
# g' = 4y^3 - 5y vanishes at y = 0, +-sqrt(5)/2 and g'' = 12 y^2 - 5.
QUARTIC_MIN = (2.5 - math.sqrt(5) / 2, 2.5 + math.sqrt(5) / 2)
QUARTIC_MAX = 2.5
QUARTIC_SHIFT = 1.0  # raw minimum is 25/16 - 25/8 + 9/16 = -1
QUARTIC_C_WINDOW = 12 * 12.5**2 - 5  # |g''| at x = -10


def window_points(obj, k, seed):
    lo, hi = obj.window
    return lo + (hi - lo) * rng_substream(seed, 0).uniform((k, obj.dimension))


class TestCatalog:
    def test_ids(self):
        assert [o.id for o in catalog()] == list(OBJECTIVE_IDS)

    def test_quad_example(self):
        q = make_objective("quad", c=1.0)
        assert q.value(np.array([2.0])) == 2.0
        assert q.grad(np.array([2.0]))[0] == 2.0

    def test_sin2_examples(self):
        s = make_objective("sin2")
        assert s.value(np.array([math.pi / 2])) == pytest.approx(1.0, abs=1e-15)
        assert s.grad(np.array([math.pi / 2]))[0] == pytest.approx(0.0, abs=1e-15)
        assert s.value(np.zeros(1)) == 0.0 and s.grad(np.zeros(1))[0] == 0.0

    def test_quartic_against_closed_form(self):
        q = make_objective("quartic")
        assert q.shift == pytest.approx(QUARTIC_SHIFT, abs=1e-12)
        comps = q.metadata.components
        xs = [float(c.anchor[0]) for c in comps]
        assert xs == pytest.approx([QUARTIC_MIN[0], QUARTIC_MAX, QUARTIC_MIN[1]], abs=1e-12)
        assert [c.is_minimum for c in comps] == [True, False, True]
        assert [c.value for c in comps] == pytest.approx([0.0, 1.5625, 0.0], abs=1e-12)
        assert q.known_lipschitz == pytest.approx(QUARTIC_C_WINDOW)
        assert q.known_local_pl == pytest.approx(10.0)  # 2|g''| at the maximum
        assert q.lipschitz_window_only

    def test_finite_sum_quad(self):
        f = make_objective("finite_sum_quad", centers=[[-1.0], [1.0]])
        assert f.value(np.zeros(1)) == 0.5
        assert f.infimum == 0.5
        assert f.grad(np.array([0.3]))[0] == pytest.approx(0.3)
        assert f.component_grad(np.zeros(1), 0)[0] == 1.0

    def test_batch_shapes(self):
        for obj in catalog():
            theta = window_points(obj, 7, 1)
            assert obj.value(theta).shape == (7,)
            assert obj.grad(theta).shape == (7, obj.dimension)

    def test_unknown_objective(self):
        with pytest.raises(LabError, match="unknown objective"):
            make_objective("rosenbrock")

    def test_bad_params(self):
        with pytest.raises(LabError):
            make_objective("quad", c=-1.0)
        with pytest.raises(LabError):
            make_objective("sin2", c=2.0)


class TestCatalogInvariants:
    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_nonnegative(self, obj):
        assert np.all(obj.value(window_points(obj, 10**4, 2)) >= -1e-12)

    def test_quartic_minimum_is_zero(self):
        q = make_objective("quartic")
        x = np.linspace(0.0, 5.0, 2_000_001)[:, None]
        assert abs(q.value(x).min()) < 1e-9

    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_gradient_matches_finite_differences(self, obj):
        pts = -5 + 10 * rng_substream(3, 0).uniform((100, obj.dimension))
        assert gradient_check(obj, pts, h=1e-5) < 1e-6

    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_stationary_metadata(self, obj):
        rng = rng_substream(4, 0)
        for comp in obj.metadata.components:
            pts = comp.sample(1000, rng, obj.window)
            assert np.all(obj.in_window(pts))
            assert np.max(np.linalg.norm(obj.grad(pts), axis=-1)) < 1e-8
            assert np.max(np.abs(obj.value(pts) - comp.value)) < 1e-12

    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_lipschitz_consistent(self, obj):
        x, y = window_points(obj, 5000, 5), window_points(obj, 5000, 6)
        q = np.linalg.norm(obj.grad(x) - obj.grad(y), axis=-1) / np.linalg.norm(x - y, axis=-1)
        assert q.max() <= obj.known_lipschitz + 1e-6

    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_gradient_bound_near_components(self, obj):
        # |grad g|^2 <= 2c |g - g_i| within distance 0.1 of each component
        c = obj.known_lipschitz
        rng = rng_substream(7, 0)
        for comp in obj.metadata.components:
            base = comp.sample(2000, rng, obj.window)
            theta = base + 0.1 * (2 * rng.uniform(base.shape) - 1) / math.sqrt(obj.dimension)
            gsq = np.sum(obj.grad(theta) ** 2, axis=-1)
            assert np.all(gsq <= 2 * c * np.abs(obj.value(theta) - comp.value) + 1e-9)

    @pytest.mark.parametrize("obj", catalog(), ids=lambda o: o.id)
    def test_global_gradient_bound(self, obj):
        theta = window_points(obj, 10**4, 8)
        gsq = np.sum(obj.grad(theta) ** 2, axis=-1)
        assert np.all(gsq <= 2 * obj.known_lipschitz * (obj.value(theta) - obj.infimum) + 1e-9)


class TestDistance:
    def test_sin2_lattice(self):
        s = make_objective("sin2")
        assert distance_to_stationary_set(s, [0.3]) == pytest.approx(0.3)
        assert distance_to_stationary_set(s, [math.pi / 2]) == pytest.approx(0.0, abs=1e-15)
        # 1.2 is 0.3708 from pi/2 and 1.2 from 0
        assert distance_to_stationary_set(s, [1.2]) == pytest.approx(math.pi / 2 - 1.2)
        assert distance_to_stationary_set(s, [-3.0]) == pytest.approx(math.pi - 3.0)

    def test_quad_origin(self):
        assert distance_to_stationary_set(make_objective("quad", dim=3), [0.0, 0.0, 0.0]) == 0.0

    def test_quad_multi_dim(self):
        assert distance_to_stationary_set(make_objective("quad", dim=2), [3.0, 4.0]) == 5.0

    def test_outside_window(self):
        with pytest.raises(OutsideWindowError):
            distance_to_stationary_set(make_objective("sin2"), [11.0])

    def test_tie_breaks_to_smaller_index(self):
        s = make_objective("sin2")
        assert s.metadata.nearest(np.array([math.pi / 4])) == 0

    def test_brute_force_lattice(self):
        s = make_objective("sin2")
        theta = window_points(s, 500, 9)
        lattice = np.arange(-8, 9) * math.pi / 2
        brute = np.min(np.abs(theta - lattice), axis=-1)
        assert np.allclose(s.distance(theta), brute, atol=1e-12)


class TestGradientCheck:
    def test_quad_exact(self):
        q = make_objective("quad")
        assert gradient_check(q, [[0.5], [3.0], [-7.0]], h=1e-5) < 1e-8

    def test_wrong_field_detected(self):
        q = make_objective("quad")
        err = gradient_check(q, [[1.0]], h=1e-5, grad=np.zeros_like)
        assert err == pytest.approx(1.0, rel=1e-6) and err > 0.1

    @pytest.mark.parametrize("h", [1e-9, 1e-2])
    def test_step_range(self, h):
        with pytest.raises(LabError):
            gradient_check(make_objective("quad"), [[1.0]], h=h)


class TestLocalPL:
    def test_quad(self):
        assert local_pl_ratio(make_objective("quad"), [0.1]) == pytest.approx(2.0)

    def test_sin2_near_min(self):
        # sin^2(2x)/sin^2(x) = 4 cos^2 x
        assert local_pl_ratio(make_objective("sin2"), [0.01]) == pytest.approx(4 * math.cos(0.01) ** 2)

    def test_cos2_symmetry(self):
        assert local_pl_ratio(make_objective("cos2"), [math.pi / 2 + 0.01]) == pytest.approx(
            4 * math.cos(0.01) ** 2, rel=1e-9)

    def test_negative_near_maximum_unless_absolute(self):
        s = make_objective("sin2")
        x = [math.pi / 2 - 0.01]
        assert local_pl_ratio(s, x) < 0
        assert local_pl_ratio(s, x, absolute=True) == pytest.approx(4 * math.cos(0.01) ** 2, rel=1e-6)

    def test_on_component(self):
        with pytest.raises(DegenerateInputError):
            local_pl_ratio(make_objective("quad"), [0.0])

import numpy as np
import pytest

from ddrmpc.plants import (
    LtiPlant,
    LurePlant,
    PlantError,
    PolytopicPlant,
    get_nonlinearity,
    interpolate_vertices,
    load_plant,
    plant_from_dict,
    save_plant,
    sector_check,
    step_lti,
    step_lure,
)

from conftest import A1, A2, B_ANG


class TestStepLti:
    def test_angular_zero_input(self):
        plant = LtiPlant(A1, B_ANG)
        out = step_lti(plant, [0.95, 0.0], [0.0])
        assert np.allclose(out, [0.95, 0.0])

    def test_angular_unit_input(self):
        plant = LtiPlant(A1, B_ANG)
        out = step_lti(plant, [0.95, 0.0], [1.0])
        assert np.allclose(out, [0.95, 0.787])

    def test_zero_dynamics(self):
        plant = LtiPlant(np.zeros((3, 3)), np.zeros((3, 1)))
        out = step_lti(plant, [1.0, -2.0, 5.0], [0.0])
        assert np.array_equal(out, np.zeros(3))

    def test_dimension_mismatch(self):
        plant = LtiPlant(A1, B_ANG)
        with pytest.raises(PlantError):
            step_lti(plant, [1.0], [0.0])


class TestStepLure:
    def test_origin_fixed_point(self):
        gamma = get_nonlinearity("sin_plus_id")
        plant = LurePlant(np.zeros((2, 2)), np.zeros((2, 1)), np.ones((2, 1)),
                          np.array([[1.0, 0.0]]), gamma, [[2.0]])
        out = step_lure(plant, [0.0, 3.0], [0.0])
        # H x = 0 and gamma(0) = 0
        assert np.array_equal(out, np.zeros(2))

    def test_arm_hand_arithmetic(self, arm_plant):
        out = step_lure(arm_plant, [1.1, 0.2, 0.0, 0.0], [0.0])
        # H x = x3 = 0 so the nonlinearity is silent; A x by hand
        assert np.allclose(out, [1.104, -0.8742, 0.0, 0.429], atol=1e-12)

    def test_zero_coupling_reduces_to_lti(self):
        gamma = get_nonlinearity("sin_plus_id")
        rng = np.random.default_rng(0)
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        lure = LurePlant(A, B, np.zeros((3, 1)), rng.normal(size=(1, 3)), gamma, [[2.0]])
        lti = LtiPlant(A, B)
        for _ in range(10):
            x = rng.normal(size=3)
            u = rng.normal(size=2)
            assert np.allclose(step_lure(lure, x, u), step_lti(lti, x, u), atol=0)


class TestInterpolateVertices:
    def test_degenerate_mixture(self):
        plant = PolytopicPlant([(A1, B_ANG), (A2, B_ANG)], (1.0, 0.0))
        member = interpolate_vertices(plant)
        assert np.array_equal(member.A, A1)
        assert np.array_equal(member.B, B_ANG)

    def test_angular_mixture(self, angular_polytope):
        member = interpolate_vertices(angular_polytope)
        assert np.allclose(member.A, [[1.0, 0.1], [0.0, 0.8415]])

    def test_identical_vertices(self):
        plant = PolytopicPlant([(A1, B_ANG), (A1, B_ANG)], (0.5, 0.5))
        member = interpolate_vertices(plant)
        assert np.allclose(member.A, A1)

    def test_affine_in_closed_loop(self, angular_polytope):
        # interpolating then closing the loop equals interpolating the
        # per-vertex closed loops
        rng = np.random.default_rng(1)
        for _ in range(10):
            lam = rng.dirichlet([1.0, 1.0])
            K = rng.normal(size=(1, 2))
            member = interpolate_vertices(angular_polytope, lam)
            closed = member.A + member.B @ K
            mix = sum(l * (Aj + Bj @ K) for l, (Aj, Bj) in zip(lam, angular_polytope.vertices))
            assert np.allclose(closed, mix, atol=1e-12)

    def test_invalid_weights(self):
        with pytest.raises(PlantError):
            PolytopicPlant([(A1, B_ANG), (A2, B_ANG)], (0.8, 0.1))
        with pytest.raises(PlantError):
            PolytopicPlant([(A1, B_ANG), (A2, B_ANG)], (-0.5, 1.5))


class TestSectorCheck:
    def test_origin_boundary(self):
        rep = sector_check(get_nonlinearity("sin_plus_id"), 2.0, np.array([0.0]))
        assert rep.min_product == 0.0
        assert rep.ok

    def test_half_pi_hand_value(self):
        rep = sector_check(get_nonlinearity("sin_plus_id"), 2.0, np.array([np.pi / 2]))
        g = 1.0 + np.pi / 2
        assert rep.min_product == pytest.approx(g * (np.pi - g), abs=1e-12)
        assert rep.min_product == pytest.approx(1.4674, abs=1e-4)

    def test_slope_outside_sector(self):
        double = get_nonlinearity("tabulated", ([-100.0, 100.0], [-200.0, 200.0]))
        rep = sector_check(double, 1.0, np.array([1.0]))
        assert rep.min_product == pytest.approx(-2.0)
        assert rep.violating_z == 1.0
        assert not rep.ok

    def test_default_grid_clean_for_arm_nonlinearity(self):
        rep = sector_check(get_nonlinearity("sin_plus_id"), 2.0)
        assert rep.grid.size == 10_000
        assert rep.grid[0] == -10.0 and rep.grid[-1] == 10.0
        assert rep.min_product >= 0.0

    def test_empty_grid_rejected(self):
        with pytest.raises(PlantError):
            sector_check(get_nonlinearity("zero"), 1.0, np.array([]))


class TestNonlinearities:
    def test_registry(self):
        assert get_nonlinearity("zero")(np.array([3.0]))[0] == 0.0
        sat = get_nonlinearity("saturation")
        assert np.allclose(sat(np.array([-5.0, 0.3, 5.0])), [-1.0, 0.3, 1.0])
        with pytest.raises(PlantError):
            get_nonlinearity("no_such_map")

    def test_tabulated_interpolation(self):
        tab = get_nonlinearity("tabulated", ([0.0, 1.0, 2.0], [0.0, 2.0, 2.0]))
        assert tab(np.array([0.5]))[0] == pytest.approx(1.0)


class TestPlantFiles:
    def test_lti_roundtrip(self, tmp_path):
        plant = LtiPlant(A1, B_ANG)
        path = tmp_path / "p.json"
        save_plant(plant, path)
        back = load_plant(path)
        assert np.array_equal(back.A, plant.A)
        assert np.array_equal(back.B, plant.B)

    def test_polytopic_roundtrip(self, tmp_path, angular_polytope):
        path = tmp_path / "p.json"
        save_plant(angular_polytope, path)
        back = load_plant(path)
        assert back.zeta == 2
        for (Aa, Ba), (Ab, Bb) in zip(back.vertices, angular_polytope.vertices):
            assert np.array_equal(Aa, Ab)
            assert np.array_equal(Ba, Bb)
        assert np.array_equal(back.mixing_weights, angular_polytope.mixing_weights)

    def test_lure_roundtrip(self, tmp_path, arm_plant):
        path = tmp_path / "p.json"
        save_plant(arm_plant, path)
        back = load_plant(path)
        assert np.array_equal(back.A, arm_plant.A)
        assert np.array_equal(back.E, arm_plant.E)
        assert back.gamma.name == "sin_plus_id"
        assert np.array_equal(back.beta, arm_plant.beta)

    def test_roundtrip_precision(self, tmp_path):
        # decimal round-trip must carry at least 15 significant digits;
        # json repr floats are exact
        val = 0.12345678901234567
        plant = LtiPlant([[val]], [[1.0]])
        path = tmp_path / "p.json"
        save_plant(plant, path)
        assert load_plant(path).A[0, 0] == val

    def test_unknown_kind(self):
        with pytest.raises(PlantError):
            plant_from_dict({"kind": "fuzzy"})

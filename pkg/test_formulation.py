import json

import numpy as np
import pytest

from rtep.core.exceptions import AssemblyError
from rtep.models.network import UncertaintyBox
from rtep.services.formulation import (
    H_CONE,
    assemble_compact,
    build_deterministic_tep,
    build_relaxed_tep,
    build_uncertain_tep,
    dump_compact,
    evaluate_blocks,
    evaluate_named_rows,
    fixed_topology_rows,
    merge_pairs,
    nonconvex_start,
)
from rtep.services.netcase import build_uncertainty_box


def _row(system, label):
    return system.labels.index(label)


class TestModelBuilders:
    """Test cases for the named-constraint builders"""

    def test_relaxed_variable_layout(self, three_bus):
        """Test the slave, cone and binary index maps of the relaxation"""
        space = build_relaxed_tep(three_bus).space
        assert space.y_s.size == 3 + 3 + 3 + 3 + 2 + 2 + 3 + 3 + 4 * 6
        assert space.y_cone.size == 4 * 3
        assert space.y_m.size == 6
        assert not space.y_s.has("e")
        assert space.y_s.names[space.y_s.at("theta", 0)] == "theta[1]"
        assert space.y_m.names[1] == "x[1-2#2]"
        assert len(set(space.y_s.names)) == space.y_s.size

    def test_nonconvex_layout(self, three_bus):
        """Test that the non-convex model carries e, f and voltage-product definitions"""
        model = build_deterministic_tep(three_bus)
        assert model.space.y_s.has("e") and model.space.y_s.has("f")
        assert not model.space.y_s.has("theta")
        assert len(model.rows_in("Be")) == 2 * three_bus.n_buses
        # c_ii per bus, (c_ij, s_ij) per corridor, f at the reference bus
        assert len(model.definitions) == 3 + 2 * 3 + 1
        assert not model.cones

    def test_relaxed_row_counts(self, three_bus):
        """Test the number of rows in each block"""
        model = build_relaxed_tep(three_bus)
        assert len(model.rows_in("A")) == 3
        # per candidate: 4 caps, 4 links and the angle row, each two-sided
        assert len(model.rows_in("TG")) == 6 * 18
        assert len(model.rows_in("Be")) == 6
        assert len(model.rows_in("Bie")) == 12 + 8 + 6 + 6 + 6 + 12

    def test_one_cone_per_corridor(self, three_bus):
        """Test four D forms and one cone per corridor"""
        model = build_relaxed_tep(three_bus)
        assert len(model.cones) == len(three_bus.corridors)
        assert all(len(link.d) == 4 for link in model.cones)

    def test_angle_rows_use_eps_theta(self, three_bus):
        """Test the base-line and candidate angle-consistency bounds"""
        model = build_relaxed_tep(three_bus)
        rows = {row.label: row for row in model.rows}
        assert rows["angle_ij0[1-2].hi"].rhs == pytest.approx(0.0044)
        assert rows["angle_ijk[1-2#1].hi"].rhs == pytest.approx(0.0044 + np.pi)
        assert rows["angle_ijk[1-2#1].hi"].m == {0: pytest.approx(np.pi)}

    def test_reference_angle_pinned(self, three_bus):
        """Test that the reference bus angle box is [0, 0]"""
        rows = {row.label: row for row in build_relaxed_tep(three_bus).rows}
        assert rows["theta[1].hi"].rhs == 0.0
        assert rows["theta[1].lo"].rhs == 0.0
        assert rows["theta[2].hi"].rhs == pytest.approx(np.pi / 2)

    def test_sequential_rows(self, three_bus):
        """Test x_ij^k <= x_ij^(k-1)"""
        row = build_relaxed_tep(three_bus).rows_in("A")[0]
        assert row.label == "seq[1-2#2]"
        assert row.m == {1: 1.0, 0: -1.0}
        assert row.rhs == 0.0

    def test_wrong_box_size(self, three_bus, two_bus):
        """Test that a box of another case is rejected"""
        with pytest.raises(AssemblyError):
            build_uncertain_tep(three_bus, build_uncertainty_box(two_bus, 10.0, 0.0))


class TestAssembleCompact:
    """Test cases for assemble_compact"""

    @pytest.fixture(scope="class")
    def robust(self, three_bus):
        box = build_uncertainty_box(three_bus, 10.0, 50.0)
        model = build_uncertain_tep(three_bus, box)
        return model, assemble_compact(model)

    def test_block_shapes(self, robust):
        """Test mutually consistent block dimensions"""
        model, compact = robust
        n_s, n_m = compact.n_s, compact.n_m
        assert compact.A.shape == (3, n_m)
        assert compact.T.shape == (108, n_m) and compact.G.shape == (108, n_s)
        assert compact.B_e.shape == (6, n_s) and compact.J_e.shape == (6, 6)
        assert compact.B_ie.shape == (50, n_s) and compact.J_ie.shape == (50, 6)
        assert compact.U.shape == (12, n_s)
        assert compact.t_e.shape == (6,) and compact.t_ie.shape == (50,)

    def test_h_is_fixed(self, robust):
        """Test that H is diag(1, 1, 1, -1)"""
        _, compact = robust
        np.testing.assert_array_equal(compact.H, np.diag([1.0, 1.0, 1.0, -1.0]))
        np.testing.assert_array_equal(H_CONE, compact.H)

    def test_block_evaluation_matches_named_rows(self, robust):
        """Test that block residuals equal named-row residuals at random points"""
        model, compact = robust
        rng = np.random.default_rng(7)
        for _ in range(100):
            y_s = rng.normal(size=compact.n_s)
            y_m = rng.integers(0, 2, size=compact.n_m).astype(float)
            xi = rng.uniform(compact.box.lower, compact.box.upper)
            named = evaluate_named_rows(model, y_s, y_m, xi)
            blocks = evaluate_blocks(compact, y_s, y_m, xi)
            for block in ("A", "TG", "Be", "Bie"):
                np.testing.assert_allclose(blocks[block], named[block], rtol=0, atol=1e-12)

    def test_assembly_is_deterministic(self, three_bus, robust):
        """Test that assembling twice gives identical sparse structures"""
        _, first = robust
        second = assemble_compact(build_uncertain_tep(three_bus, first.box))
        for name in ("A", "T", "G", "B_e", "J_e", "B_ie", "J_ie", "U"):
            a, b = getattr(first, name), getattr(second, name)
            np.testing.assert_array_equal(a.indptr, b.indptr)
            np.testing.assert_array_equal(a.indices, b.indices)
            np.testing.assert_array_equal(a.data, b.data)

    def test_every_row_has_one_dual_label(self, robust):
        """Test that dual labels are unique over all blocks"""
        _, compact = robust
        total = sum(len(infos) for infos in compact.row_info.values())
        assert len(compact.dual_label_map()) == total
        block, row = compact.dual_label_map()["lambda_p[2]"]
        assert block == "Be"
        assert compact.row_info["Be"][row].label == "balance_P[2]"

    def test_j_e_sparsity(self, robust):
        """Test that xi enters only the balance rows of its own bus"""
        _, compact = robust
        J_e = compact.J_e.toarray()
        # P balance: +xi_d at each load bus, -xi_r at the RES bus 2
        np.testing.assert_array_equal(J_e[:3, :3], np.eye(3))
        np.testing.assert_array_equal(J_e[:3, 3:], np.diag([0.0, -1.0, 0.0]))
        # Q balance: delta_i * xi_d
        np.testing.assert_allclose(J_e[3:, :3], np.diag([0.8, 0.8, 0.8666666666666667]))
        np.testing.assert_array_equal(J_e[3:, 3:], 0.0)

    def test_no_xi_column_for_unloaded_bus(self, two_bus):
        """Test that a bus without load has no xi_d entries"""
        compact = assemble_compact(build_uncertain_tep(two_bus, build_uncertainty_box(two_bus, 10.0, 0.0)))
        assert compact.J_e[:, 0].nnz == 0
        assert compact.J_ie[:, 0].nnz == 0
        assert compact.J_e[:, 1].nnz == 2

    def test_zero_box_matches_relaxed_model(self, three_bus):
        """Test that a zero-width box reproduces the deterministic relaxation"""
        robust = assemble_compact(build_uncertain_tep(three_bus, build_uncertainty_box(three_bus, 0.0, 0.0)))
        relaxed = assemble_compact(build_relaxed_tep(three_bus))
        for name in ("A", "T", "G", "B_e", "B_ie", "U"):
            assert (getattr(robust, name) != getattr(relaxed, name)).nnz == 0
        for name in ("h", "r", "t_e", "t_ie", "F_s", "F_m"):
            np.testing.assert_array_equal(getattr(robust, name), getattr(relaxed, name))
        assert np.all(robust.box.width == 0.0)

    def test_cone_selector(self, robust):
        """Test that y_cone = -U y_s gives (2c_ij, 2s_ij, c_ii - c_jj, c_ii + c_jj)"""
        _, compact = robust
        ys = compact.space.y_s
        y_s = np.zeros(compact.n_s)
        y_s[ys.span("c_ii")] = [1.02, 0.98, 1.0]
        y_s[ys.span("c_ij")] = [0.99, 0.97, 0.96]
        y_s[ys.span("s_ij")] = [0.03, -0.02, 0.01]
        D = compact.cone_values(y_s)
        np.testing.assert_allclose(D[0], [1.98, 0.06, 0.04, 2.0])
        np.testing.assert_allclose(D[1], [1.94, -0.04, 0.02, 2.02])

    def test_cone_identity_point(self, robust):
        """Test the cone value at D = (0, 0, 0, 1)"""
        _, compact = robust
        d = np.array([0.0, 0.0, 0.0, 1.0])
        assert d @ compact.H @ d == -1.0

    def test_costs(self, robust, three_bus):
        """Test the installation and operating cost vectors"""
        _, compact = robust
        ys = compact.space.y_s
        np.testing.assert_allclose(compact.F_m, np.repeat([0.570776, 0.684932, 0.456621], 2))
        np.testing.assert_allclose(compact.F_s[ys.span("P_g")], [0.18, 0.22])
        np.testing.assert_allclose(compact.F_s[ys.span("CP_d")], three_bus.gamma_d)
        np.testing.assert_allclose(compact.F_s[ys.span("CP_r")], three_bus.gamma_r)
        assert compact.F_c == 0.0

    def test_nonconvex_has_no_compact_form(self, three_bus):
        """Test that the non-convex model cannot be assembled"""
        with pytest.raises(AssemblyError):
            assemble_compact(build_deterministic_tep(three_bus))

    def test_dump(self, robust, tmp_path):
        """Test the JSON dump of the compact model"""
        _, compact = robust
        path = dump_compact(compact, tmp_path / "model.json")
        document = json.loads(path.read_text())
        assert document["case"] == "three_bus"
        assert document["blocks"]["B_e"]["shape"] == [6, compact.n_s]
        assert document["H"][3][3] == -1.0
        assert len(document["variables"]["y_m"]) == 6
        assert document["rows"]["Be"][0]["dual"] == "lambda_p[1]"


class TestMergePairs:
    """Test cases for merge_pairs"""

    def test_pairs_fold_to_intervals(self, three_bus):
        """Test the folded generator and voltage intervals"""
        compact = assemble_compact(build_relaxed_tep(three_bus))
        merged = merge_pairs(compact.B_ie, compact.t_ie, compact.row_info["Bie"])
        assert merged.A.shape[0] == 25
        rows = dict(zip(merged.labels, zip(merged.lo, merged.hi)))
        assert rows["P_g[1@1]"] == pytest.approx((0.0, 2.5))
        assert rows["Q_g[2@2]"] == pytest.approx((-0.5, 1.2))
        assert rows["V[3]"] == pytest.approx((0.95 ** 2, 1.05 ** 2))

    def test_equalities_keep_rhs(self, three_bus):
        """Test that equality rows keep lo = hi and have no partner"""
        compact = assemble_compact(build_relaxed_tep(three_bus))
        merged = merge_pairs(compact.B_e, compact.t_e, compact.row_info["Be"])
        np.testing.assert_array_equal(merged.lo, merged.hi)
        np.testing.assert_array_equal(merged.lower, -1)
        assert merged.hi[1] == pytest.approx(0.75 - 1.0)


class TestFixedTopology:
    """Test cases for fixed_topology_rows and nonconvex_start"""

    def test_flat_start_satisfies_definitions(self, three_bus):
        """Test that the flat start meets every voltage-product definition"""
        model = build_deterministic_tep(three_bus)
        system = fixed_topology_rows(model, np.zeros(6))
        values = system.value(nonconvex_start(model))
        for definition in model.definitions:
            assert values[_row(system, definition.label)] == pytest.approx(0.0, abs=1e-14)

    def test_perturbed_start_satisfies_definitions(self, three_bus):
        """Test that perturbed starts stay consistent and keep f_ref = 0"""
        model = build_deterministic_tep(three_bus)
        system = fixed_topology_rows(model, np.ones(6))
        x0 = nonconvex_start(model, np.random.default_rng(3), 0.05)
        values = system.value(x0)
        for definition in model.definitions:
            assert values[_row(system, definition.label)] == pytest.approx(0.0, abs=1e-12)
        assert x0[model.space.y_s.at("f", 0)] == 0.0

    def test_installed_line_links_close(self, three_bus):
        """Test that x = 1 turns the link rows into equalities"""
        model = build_deterministic_tep(three_bus)
        system = fixed_topology_rows(model, np.ones(6))
        k = _row(system, "P_ijk_link[1-3#2]")
        assert system.lo[k] == pytest.approx(0.0) and system.hi[k] == pytest.approx(0.0)
        k = _row(system, "P_ijk_cap[1-3#2]")
        assert system.lo[k] == pytest.approx(-0.7) and system.hi[k] == pytest.approx(0.7)

    def test_absent_line_pins_flows(self, three_bus):
        """Test that x = 0 fixes the candidate flows to zero"""
        model = build_deterministic_tep(three_bus)
        system = fixed_topology_rows(model, np.zeros(6))
        k = _row(system, "Q_jik_cap[2-3#1]")
        assert system.lo[k] == pytest.approx(0.0) and system.hi[k] == pytest.approx(0.0)

    def test_xi_shifts_balance(self, three_bus):
        """Test that xi moves the balance right-hand sides"""
        box = build_uncertainty_box(three_bus, 10.0, 0.0)
        model = build_deterministic_tep(three_bus, box)
        xi = np.array([0.05, 0.0, 0.0, 0.0, 0.0, 0.0])
        base = fixed_topology_rows(model, np.zeros(6))
        shifted = fixed_topology_rows(model, np.zeros(6), xi)
        k = _row(base, "balance_P[1]")
        assert shifted.hi[k] == pytest.approx(base.hi[k] - 0.05)

    def test_relaxed_model_rejected(self, three_bus):
        """Test that fixed-topology rows need the non-convex model"""
        with pytest.raises(AssemblyError):
            fixed_topology_rows(build_relaxed_tep(three_bus), np.zeros(6))

    def test_wrong_plan_length(self, three_bus):
        """Test that a plan of the wrong length is rejected"""
        with pytest.raises(AssemblyError):
            fixed_topology_rows(build_deterministic_tep(three_bus), np.zeros(4))

    def test_wrong_xi_length(self, three_bus):
        """Test that xi of the wrong length is rejected"""
        model = build_deterministic_tep(three_bus, UncertaintyBox(u_d=0, u_r=0, xi_min=[0.0] * 6, xi_max=[0.0] * 6))
        with pytest.raises(AssemblyError):
            fixed_topology_rows(model, np.zeros(6), np.zeros(3))

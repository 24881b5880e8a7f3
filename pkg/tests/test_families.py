import io
import math

import numpy as np
import pytest

from consensuslab import (
    ConductanceMatrix,
    append_cycle_tail,
    check_stabilization,
    check_stochastic,
    directed_torus,
    drift_cycle,
    drift_line,
    drift_line_stationary,
    family,
    from_conductance,
    is_irreducible,
    lazy_srw_grid,
    lazy_torus,
    read_fam,
    stationary_direct,
    suggested_tail_length,
    write_fam,
)


class TestLazySrwGrid:
    def test_path_weights_from_degrees(self):
        m = lazy_srw_grid(1, 1, 0.0)  # 3-node path
        pi = stationary_direct(m)
        assert pi.to_list() == pytest.approx([0.25, 0.5, 0.25], abs=1e-14)

    def test_interior_row_with_self_confidence(self):
        m = lazy_srw_grid(2, 2, 0.1)
        fam = family("grid", dim=2, tau=0.1)
        origin = fam.label_index(2)[(0, 0)]
        row = m.row_dict(origin)
        assert row[origin] == 0.1
        off = [p for j, p in row.items() if j != origin]
        assert len(off) == 4 and all(p == pytest.approx(0.225, abs=1e-16) for p in off)

    def test_corner_row(self):
        m = lazy_srw_grid(2, 1, 0.0)
        corner = 0  # label (-1, -1)
        row = m.row_dict(corner)
        assert len(row) == 2 and all(p == 0.5 for p in row.values())

    def test_validates_tau(self):
        with pytest.raises(ValueError):
            lazy_srw_grid(1, 2, 1.0)
        with pytest.raises(ValueError):
            lazy_srw_grid(1, 2, -0.1)


class TestDirectedTorus:
    def test_d1_is_directed_cycle(self):
        m = directed_torus(1, 1)
        assert m.n == 3
        for i in range(3):
            idx, val = m.row(i)
            assert len(idx) == 1 and val[0] == 1.0
        pi = stationary_direct(m)
        assert pi.to_list() == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_d2_rows_have_two_halves(self):
        m = directed_torus(2, 1)
        assert m.n == 9
        for i in range(9):
            _, val = m.row(i)
            assert list(val) == [0.5, 0.5]

    @pytest.mark.parametrize("d,n", [(1, 3), (2, 2), (3, 1)])
    def test_doubly_stochastic(self, d, n):
        m = directed_torus(d, n)
        cols = np.asarray(m.to_scipy().sum(axis=0)).ravel()
        assert np.allclose(cols, 1.0, atol=1e-12)


class TestLazyTorus:
    @pytest.mark.parametrize("d,n,tau", [(1, 2, 0.0), (2, 2, 0.1), (2, 3, 0.5)])
    def test_doubly_stochastic_uniform(self, d, n, tau):
        m = lazy_torus(d, n, tau)
        cols = np.asarray(m.to_scipy().sum(axis=0)).ravel()
        assert np.allclose(cols, 1.0, atol=1e-12)
        pi = stationary_direct(m)
        assert pi.max_weight() == pytest.approx(1.0 / m.n, abs=1e-12)

    def test_off_diagonal_weights(self):
        m = lazy_torus(2, 2, 0.1)
        row = m.row_dict(0)
        off = [p for j, p in row.items() if j != 0]
        assert all(p == (1.0 - 0.1) / 4 for p in off)

    def test_d1_rows(self):
        m = lazy_torus(1, 1, 0.5)
        row = m.row_dict(1)  # middle label 0
        assert row[1] == 0.5
        assert row[0] == 0.25 and row[2] == 0.25


class TestDriftLine:
    def test_closed_form_small(self):
        pi = stationary_direct(drift_line(3, 1 / 3))
        assert pi.to_list() == pytest.approx([4 / 7, 2 / 7, 1 / 7], abs=1e-14)

    def test_symmetric_is_uniform(self):
        pi = stationary_direct(drift_line(6, 0.5))
        assert pi.to_list() == pytest.approx([1 / 6] * 6, abs=1e-13)

    def test_max_weight_approaches_drift_limit(self):
        # with delta = 0.75 the top weight tends to 1 - (1-delta)/delta = 2/3
        pi = stationary_direct(drift_line(80, 0.75))
        assert pi.max_weight() == pytest.approx(2 / 3, abs=1e-9)

    @pytest.mark.parametrize("delta", [0.25, 1 / 3, 0.6, 0.75])
    def test_matches_closed_form(self, delta):
        for n in (2, 7, 23, 60):
            pi = stationary_direct(drift_line(n, delta))
            closed = drift_line_stationary(n, delta)
            assert max(abs(a - b) for a, b in zip(pi.to_list(), closed)) < 1e-12

    def test_validates_parameters(self):
        with pytest.raises(ValueError):
            drift_line(1, 0.3)
        with pytest.raises(ValueError):
            drift_line(5, 0.0)


class TestDriftCycle:
    def test_unperturbed_uniform(self):
        m = drift_cycle(11, 0.75)
        pi = stationary_direct(m)
        assert pi.to_list() == pytest.approx([1 / 11] * 11, abs=1e-13)

    def test_perturbed_changes_only_row_zero(self):
        fam = family("drift_cycle", delta=0.75)
        base = drift_cycle(14, 0.75, False)
        pert = drift_cycle(14, 0.75, True)
        zero = fam.label_index(14)[0]
        assert pert.rows_equal(base, [i for i in range(14) if i != zero])
        assert not pert.rows_equal(base, [zero])

    def test_perturbed_weight_at_zero_stays_bounded(self):
        fam = family("drift_cycle", delta=0.75, perturb_zero=True)
        values = []
        for n in (30, 60, 90):
            idx = fam.label_index(n)[0]
            values.append(stationary_direct(fam.matrix(n))[idx])
        assert min(values) > 0.25
        assert max(values) - min(values) < 1e-6

    def test_perturbed_row_targets_are_successors(self):
        m = drift_cycle(12, 0.6, True)
        fam = family("drift_cycle", delta=0.6)
        index = fam.label_index(12)
        assert m.row_dict(index[0]) == {index[1]: 0.6, index[2]: 0.4}

    def test_requires_three_states(self):
        with pytest.raises(ValueError):
            drift_cycle(2, 0.6)


class TestConductance:
    def test_unit_conductances_give_srw(self):
        c = ConductanceMatrix.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
        p = from_conductance(c)
        assert p == lazy_srw_grid(1, 1, 0.0)

    def test_diagonal_term_reproduces_lazy_walk(self):
        # self-conductance degree * tau/(1-tau) turns the SRW lazy
        tau = 0.3
        edges = [(0, 1, 1.0), (1, 2, 1.0)]
        diag = [(0, 1 * tau / (1 - tau)), (1, 2 * tau / (1 - tau)),
                (2, 1 * tau / (1 - tau))]
        p = from_conductance(ConductanceMatrix.from_edges(3, edges, diagonal=diag))
        lazy = lazy_srw_grid(1, 1, tau)
        for i in range(3):
            got, want = p.row_dict(i), lazy.row_dict(i)
            assert got.keys() == want.keys()
            assert all(abs(got[k] - want[k]) < 1e-15 for k in got)

    def test_scaling_invariance(self):
        c = ConductanceMatrix.from_edges(4, [(0, 1, 1.0), (1, 2, 2.0),
                                             (2, 3, 5.0), (3, 0, 2.0)])
        assert from_conductance(c) == from_conductance(c.scaled(2.0))

    def test_rejects_asymmetry_and_disconnection(self):
        with pytest.raises(ValueError, match="asymmetric"):
            ConductanceMatrix(2, {(0, 1): 1.0, (1, 0): 2.0})
        island = ConductanceMatrix.from_edges(
            4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(ValueError, match="connected"):
            from_conductance(island)

    def test_declared_value_set_enforced(self):
        with pytest.raises(ValueError, match="declared"):
            ConductanceMatrix.from_edges(2, [(0, 1, 3.0)], theta=(1.0, 2.0))

    def test_detailed_balance(self, rng):
        values = [1.0, 2.0, 5.0]
        for _ in range(10):
            n = int(rng.integers(3, 7))
            edges = [(i, i + 1, values[int(rng.integers(0, 3))])
                     for i in range(n - 1)]
            if rng.random() < 0.5:
                edges.append((0, n - 1, values[int(rng.integers(0, 3))]))
            c = ConductanceMatrix.from_edges(n, edges, theta=values)
            p = from_conductance(c)
            total = math.fsum(c.row_sums)
            for i in range(n):
                for j in p.out_neighbors(i):
                    lhs = (c.row_sums[i] / total) * p.row_dict(i)[j]
                    rhs = (c.row_sums[j] / total) * p.row_dict(j)[i]
                    assert abs(lhs - rhs) < 1e-14


class TestAppendCycleTail:
    def two_state(self):
        return drift_line(2, 0.5)

    def test_structure(self):
        out = append_cycle_tail(self.two_state(), exit_node=1, entry_node=0,
                                tail_length=3)
        assert out.n == 5
        assert out.row_dict(2) == {3: 1.0}
        assert out.row_dict(3) == {4: 1.0}
        assert out.row_dict(4) == {0: 1.0}
        assert check_stochastic(out, tolerance=1e-12).ok
        assert is_irreducible(out)

    def test_exit_row_respread_uniformly(self):
        base = lazy_srw_grid(1, 1, 0.0)  # path 0-1-2
        out = append_cycle_tail(base, exit_node=1, entry_node=0, tail_length=2)
        assert out.row_dict(1) == {0: 1 / 3, 2: 1 / 3, 3: 1 / 3}

    def test_self_loop_mass_preserved(self):
        base = lazy_srw_grid(1, 1, 0.2)
        out = append_cycle_tail(base, exit_node=1, entry_node=2, tail_length=1)
        row = out.row_dict(1)
        assert row[1] == 0.2
        assert row[0] == row[2] == row[3] == pytest.approx(0.8 / 3, abs=1e-16)

    def test_exit_weight_strictly_decreases(self):
        base = lazy_srw_grid(1, 1, 0.0)
        exit_node = 1
        before = stationary_direct(base)[exit_node]
        out = append_cycle_tail(base, exit_node, 0, 4)
        after = stationary_direct(out)[exit_node]
        assert after < before

    def test_tail_return_time_at_least_tail_length(self):
        from consensuslab import expected_return

        out = append_cycle_tail(self.two_state(), 1, 0, 5)
        for tail_state in range(2, 7):
            assert expected_return(out, tail_state) >= 5

    def test_suggested_tail_length(self):
        # path 0-1-2 SRW, exit at 2: worst path probability is from 0
        # (0 -> 1 -> 2 with probabilities 1 and 1/2), degree of exit is 1
        base = lazy_srw_grid(1, 1, 0.0)
        m = suggested_tail_length(base, exit_node=2)
        assert m == math.ceil((1 + 1) * 3 / 0.5)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            append_cycle_tail(self.two_state(), 0, 1, 0)
        with pytest.raises(ValueError):
            append_cycle_tail(self.two_state(), 5, 0, 2)


class TestFamiliesAndNesting:
    @pytest.mark.parametrize("fam,sizes", [
        (family("grid", dim=2, tau=0.1), (1, 2, 3)),
        (family("directed_torus", dim=1), (1, 2, 3)),
        (family("lazy_torus", dim=2, tau=0.1), (1, 2, 3)),
        (family("drift_line", delta=0.6), (2, 3, 4)),
        (family("drift_cycle", delta=0.75), (3, 4, 5, 6, 7)),
        (family("conductance_line", values=(1.0, 2.0)), (2, 3, 4)),
    ])
    def test_nested_labels_and_valid_matrices(self, fam, sizes):
        prev = None
        for n in sizes:
            labels = fam.labels(n)
            assert len(labels) == len(set(labels))
            if prev is not None:
                assert set(prev) <= set(labels)
            prev = labels
            m = fam.matrix(n)
            assert m.n == len(labels)
            assert check_stochastic(m, tolerance=1e-12).ok
            assert is_irreducible(m)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown family kind"):
            family("mystery")

    def test_fam_round_trip(self, tmp_path):
        fam = family("lazy_torus", dim=2, tau=0.1)
        path = tmp_path / "f.json"
        write_fam(fam, path)
        again = read_fam(path)
        assert again.kind == fam.kind and again.params == fam.params
        buf = io.StringIO()
        write_fam(again, buf)
        assert buf.getvalue() == path.read_text()


class TestStabilization:
    def test_grid_origin_stable_from_the_start(self):
        report = check_stabilization(family("grid", dim=2, tau=0.1), (0, 0), (1, 6))
        assert report.stabilization_index == 1

    def test_drift_line_boundary_node(self):
        k = 3
        report = check_stabilization(family("drift_line", delta=0.6), k, (k, k + 5))
        assert report.stabilization_index == k + 1

    def test_torus_wrap_node_stabilizes_after_wrap_stops(self):
        report = check_stabilization(family("directed_torus", dim=1), (2,), (2, 6))
        assert report.stabilization_index == 3

    def test_not_stabilized_when_row_changes_at_last_size(self):
        report = check_stabilization(family("directed_torus", dim=1), (2,), (2, 3))
        assert report.stabilization_index is None
        assert not report.stabilized

    def test_node_absent_from_first_size(self):
        with pytest.raises(ValueError, match="absent"):
            check_stabilization(family("drift_line", delta=0.6), 9, (2, 5))

    def test_requires_a_real_range(self):
        with pytest.raises(ValueError):
            check_stabilization(family("grid", dim=1, tau=0.0), (0,), (3, 3))

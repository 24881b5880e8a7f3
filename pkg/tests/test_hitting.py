import math

import numpy as np
import pytest

from consensuslab import (
    HittingDiagnosisError,
    HittingQuery,
    SparseStochasticMatrix,
    drift_cycle,
    drift_line,
    expected_hitting,
    expected_return,
    family,
    gamblers_ruin_expected,
    hitting_times,
    homophily,
    kac_check,
    lazy_torus,
    max_hitting_from,
    ruin_chain,
    stationary_direct,
)
from conftest import random_stochastic


def three_cycle():
    return SparseStochasticMatrix.from_rows([{1: 1.0}, {2: 1.0}, {0: 1.0}])


class TestExpectedHitting:
    def test_start_inside_target_is_zero(self):
        assert expected_hitting(drift_line(5, 0.4), {2}, 2) == 0.0

    def test_one_step_absorption(self):
        m = ruin_chain(2, 0.5)  # states 0,1,2; both ends absorbing
        assert expected_hitting(m, {0, 2}, 1) == pytest.approx(1.0, abs=1e-14)

    def test_symmetric_gamblers_ruin(self):
        m = ruin_chain(4, 0.5)
        assert expected_hitting(m, {0, 4}, 2) == pytest.approx(4.0, abs=1e-12)

    def test_unreachable_target_diagnosed(self):
        # two absorbing states; from 1 the walk may slide into 0 and
        # never reach {4}
        m = ruin_chain(4, 0.5)
        with pytest.raises(HittingDiagnosisError) as err:
            expected_hitting(m, {4}, 1)
        assert 0 in err.value.trapped

    def test_hitting_vector_matches_scalar(self):
        m = drift_line(8, 0.3)
        h = hitting_times(m, {0, 7})
        for k in range(8):
            assert expected_hitting(m, {0, 7}, k) == pytest.approx(float(h[k]), abs=1e-10)

    def test_growing_target_weakly_decreases_hitting(self, rng):
        from consensuslab import is_irreducible

        checked = 0
        while checked < 25:
            m = random_stochastic(rng, n=7)
            if not is_irreducible(m):
                continue
            s = {int(rng.integers(0, 7))}
            extra = {int(rng.integers(0, 7))}
            h_small = hitting_times(m, s)
            h_big = hitting_times(m, s | extra)
            assert all(h_big[i] <= h_small[i] + 1e-9 for i in range(7))
            checked += 1


class TestExpectedReturn:
    def test_deterministic_cycle(self):
        for i in range(3):
            assert expected_return(three_cycle(), i) == pytest.approx(3.0, abs=1e-14)

    def test_drift_line_from_kac(self):
        # state 1 (index 0) has weight 4/7, so its return time is 7/4
        assert expected_return(drift_line(3, 1 / 3), 0) == pytest.approx(7 / 4, abs=1e-13)

    def test_doubly_stochastic_returns_state_count(self):
        m = lazy_torus(2, 1, 0.1)
        for i in (0, 4, 8):
            assert expected_return(m, i) == pytest.approx(m.n, abs=1e-10)

    def test_reducible_rejected(self):
        m = SparseStochasticMatrix.from_dense(np.array([[1.0, 0.0], [0.5, 0.5]]))
        from consensuslab import ReducibleMatrixError

        with pytest.raises(ReducibleMatrixError):
            expected_return(m, 0)


class TestKac:
    def test_deterministic_cycle_exact(self):
        report = kac_check(three_cycle(), tol=1e-8)
        assert report.passed
        assert report.worst == 0.0

    def test_torus_homophily_community(self):
        fam = family("lazy_torus", dim=2, tau=0.1)
        m = fam.matrix(3)
        index = fam.label_index(3)
        w = [index[(x, y)] for x in (-1, 0, 1) for y in (-1, 0, 1)]
        report = kac_check(homophily(m, w, 100.0), nodes=w, tol=1e-8)
        assert report.passed

    def test_perturbed_drift_cycle_node_zero(self):
        fam = family("drift_cycle", delta=0.75, perturb_zero=True)
        m = fam.matrix(20)
        zero = fam.label_index(20)[0]
        report = kac_check(m, nodes=[zero], tol=1e-8)
        assert report.passed

    def test_deviations_indexed_by_node(self):
        report = kac_check(drift_line(6, 0.6), nodes=[0, 3], tol=1e-8)
        assert set(report.deviations) == {0, 3}


class TestReturnTimeBoundedness:
    def test_perturbed_cycle_return_time_stabilizes(self):
        # the expected return to state 0 settles within 1% beyond n = 50
        fam = family("drift_cycle", delta=0.75, perturb_zero=True)
        values = []
        for n in (50, 100, 150, 200):
            m = fam.matrix(n)
            zero = fam.label_index(n)[0]
            values.append(expected_return(m, zero))
        assert (max(values) - min(values)) / min(values) < 0.01


class TestGamblersRuin:
    def test_first_step_absorbs(self):
        for p in (0.2, 0.5, 0.9):
            assert gamblers_ruin_expected(2, p, 1) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_product_form(self):
        assert gamblers_ruin_expected(4, 0.5, 2) == 4.0
        assert gamblers_ruin_expected(10, 0.5, 3) == 21.0

    def test_against_linear_solve(self):
        for barrier, p, k in ((6, 0.75, 1), (10, 0.25, 5)):
            chain = ruin_chain(barrier, p)
            solved = expected_hitting(chain, {0, barrier}, k)
            assert abs(gamblers_ruin_expected(barrier, p, k) - solved) < 1e-10

    def test_near_half_uses_symmetric_branch(self):
        assert gamblers_ruin_expected(8, 0.5 + 1e-14, 4) == 16.0

    def test_rejects_bad_start(self):
        with pytest.raises(ValueError):
            gamblers_ruin_expected(5, 0.5, 0)
        with pytest.raises(ValueError):
            gamblers_ruin_expected(5, 0.5, 5)


class TestDiagnostics:
    def test_max_hitting_from_probe_set(self):
        m = drift_line(10, 0.5)
        h = hitting_times(m, {0})
        assert max_hitting_from(m, [3, 5], 0) == pytest.approx(float(h[5]), abs=1e-12)

    def test_query_type_validates(self):
        with pytest.raises(ValueError):
            HittingQuery(target_set=frozenset())

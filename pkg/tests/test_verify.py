import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wffd import verify as V
from wffd.bounds import Theorem, outer_antipodal
from wffd.errors import ConfigurationError, DomainError
from wffd.fading import make_discrete, make_strong_set


# ---------------------------------------------------------- recursion_term
def test_recursion_first_index_has_empty_conditioning():
    assert V.recursion_term([0.7, 2.0], 3.0, 1) == pytest.approx(0.5 * math.log2(9 * 0.49 + 2), abs=1e-12)


def test_recursion_hand_value():
    assert V.recursion_term([1.0, 1.0], 2.0, 2) == pytest.approx(0.5 * math.log2(20 / 6), abs=1e-12)
    assert V.recursion_term([1.0, 1.0], 2.0, 2) == pytest.approx(0.86848, abs=5e-6)


@settings(max_examples=100, deadline=None)
@given(
    deltas=st.lists(st.floats(1e-3, 50.0), min_size=1, max_size=10),
    c=st.floats(0.01, 100.0),
)
def test_recursion_telescopes(deltas, c):
    total = sum(V.recursion_term(deltas, c, i) for i in range(1, len(deltas) + 1))
    closed = 0.5 * len(deltas) + 0.5 * math.log2((c * c * math.fsum(d * d for d in deltas) + 2) / 2)
    assert total == pytest.approx(closed, abs=1e-12, rel=1e-13)


@pytest.mark.parametrize("i", [0, 3, -1])
def test_recursion_index_out_of_range(i):
    with pytest.raises(DomainError):
        V.recursion_term([1.0, 2.0], 2.0, i)


def test_recursion_rejects_nonpositive_delta():
    with pytest.raises(DomainError):
        V.recursion_term([1.0, 0.0], 2.0, 1)


# --------------------------------------------------- strong_condition_check
def test_strong_set_passes_every_index():
    cert = V.strong_condition_check(make_strong_set(3.0, 3), 3.0)
    assert cert.passed
    assert len(cert.details["margins"]) == 2
    assert all(m >= 0 for m in cert.details["margins"])


def test_boundary_set_passes():
    c = 2.01
    a = 1 / (c - 1)
    cert = V.strong_condition_check(make_discrete([a, c * a, c * c * a], [1 / 3] * 3), c)
    assert cert.passed
    assert cert.details["hypothesis_failures"] == []


def test_crowded_set_fails_at_first_index():
    cert = V.strong_condition_check(make_discrete([0.5, 0.75], [0.5, 0.5]), 3.0)
    assert not cert.passed
    assert cert.details["failing_indices"] == [1]
    assert cert.details["hypothesis_failures"][0]["index"] == 1
    assert cert.worst_case is not None and cert.worst_case.margin < 0


def test_threshold_only_blocks_when_enforced():
    f = make_strong_set(3.0, 3)
    loose = V.strong_condition_check(f, 3.0)
    strict = V.strong_condition_check(f, 3.0, enforce_threshold=True)
    assert any(h["condition"] == "threshold" for h in loose.details["hypothesis_failures"])
    assert loose.passed and not strict.passed


@pytest.mark.parametrize("c", [2.0, 1.0])
def test_strong_check_needs_gain_above_two(c):
    with pytest.raises(DomainError):
        V.strong_condition_check(make_discrete([1.0, 5.0], [0.5, 0.5]), c)


# ----------------------------------------------------- quantization_penalty
@settings(max_examples=100, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_penalty_at_inverse_gain_step(c):
    assert V.quantization_penalty(c, 1 / c) == pytest.approx(0.5 * math.log2(3), abs=1e-12)


def test_penalty_hand_values():
    assert V.quantization_penalty(2.0, 1.0) == pytest.approx(0.5 * math.log2(6), abs=1e-12)
    assert V.quantization_penalty(2.0, 1.0) == pytest.approx(1.29248, abs=5e-6)
    assert V.quantization_penalty(1.0, 1e-9) == pytest.approx(0.5, abs=1e-12)


def test_penalty_domain():
    with pytest.raises(DomainError):
        V.quantization_penalty(0.0, 1.0)


# --------------------------------------------------------------- SweepGrid
@pytest.mark.parametrize("p,c", [((), (1.0,)), ((1.0,), ()), ((0.0,), (1.0,)), ((1.0,), (-2.0,)), ((math.inf,), (1.0,))])
def test_grid_validation(p, c):
    with pytest.raises(ConfigurationError):
        V.SweepGrid(p, c)


def test_default_grid_axes():
    g = V.default_grid("antipodal")
    assert len(g.p_values) == 50 and len(g.c_values) == 50
    assert g.p_values[0] == pytest.approx(0.01) and g.p_values[-1] == pytest.approx(1000.0)
    assert g.c_values[0] == pytest.approx(0.01) and g.c_values[-1] == pytest.approx(100.0)


# --------------------------------------------------------------- gap_suite
def test_antipodal_gap_on_default_grid():
    cert = V.gap_suite("antipodal")
    assert cert.passed
    assert cert.worst_case.realized <= 1.0 + 1e-9
    # the worst case sits on the flat low-gain regime, whose gap is exactly one bit
    assert cert.worst_case.realized == pytest.approx(1.0, abs=1e-9)
    assert cert.details["evaluated"] == 2500


def test_fat_tail_gap_on_high_gain_window():
    grid = V.SweepGrid(np.geomspace(0.1, 100, 15), np.geomspace(2.05, 10, 10))
    cert = V.gap_suite(Theorem.FAT_TAIL, grid)
    assert cert.passed
    assert cert.worst_case.realized <= 3.0


def test_single_point_grid():
    cert = V.gap_suite("antipodal", V.SweepGrid([3.0], [0.5]))
    assert cert.worst_case.P == 3.0 and cert.worst_case.c == 0.5
    assert cert.worst_case.realized == pytest.approx(1.0, abs=1e-12)
    assert cert.details["evaluated"] == 1


def test_no_applicable_point_is_a_configuration_error():
    # the fat-tail result needs c > 2
    with pytest.raises(ConfigurationError):
        V.gap_suite("fat_tail", V.SweepGrid([1.0, 10.0], [0.5, 1.0]))


def test_fading_theorem_without_laws_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        V.gap_suite("mode", V.SweepGrid([1.0], [1.0]))


def test_realized_gaps_are_never_negative():
    grid = V.SweepGrid(np.geomspace(0.1, 100, 8), np.geomspace(0.05, 20, 8), V.DEFAULT_DISTRIBUTIONS[Theorem.MODE])
    cert = V.gap_suite("mode", grid)
    assert cert.passed
    assert cert.worst_case.realized >= 0


def test_certificates_are_reproducible():
    grid = V.SweepGrid([0.5, 5.0, 50.0], [0.3, 3.0], V.DEFAULT_DISTRIBUTIONS[Theorem.MODE][:2])
    a, b = V.gap_suite("mode", grid), V.gap_suite("mode", grid)
    da, db = a.to_dict(), b.to_dict()
    da.pop("runtime"), db.pop("runtime")
    assert da == db


def test_certificate_json_round_trip():
    cert = V.gap_suite("ccdp", V.SweepGrid([1.0, 10.0], [0.5, 5.0]))
    d = json.loads(cert.to_json())
    assert d["claim_id"] == "gap.ccdp"
    assert d["status"] == "pass"
    assert set(d["worst_case"]) == {"P", "c", "dist", "realized", "allowed", "margin"}


# ----------------------------------------------------- monotonicity_suite
def test_antipodal_slice_example():
    cs = [0.5, 1.0, 2.0, 4.0]
    vals = [outer_antipodal(3.0, c)[0] for c in cs]
    assert vals == pytest.approx([1.5, 1.5, 0.0, 0.0], abs=1e-12)
    assert V.monotonicity_suite("antipodal", V.SweepGrid([3.0], cs)).passed


def test_low_gain_slice_is_flat():
    cert = V.monotonicity_suite("antipodal", V.SweepGrid([2.0], [0.1, 0.4, 0.9, 1.0]))
    assert cert.passed
    assert cert.worst_case.realized == 0.0


def test_fat_outer_strictly_decreasing():
    cert = V.monotonicity_suite("fat_tail", V.SweepGrid([0.3, 3.0, 300.0], [2.1, 3.0, 5.0, 9.0]))
    assert cert.passed
    assert cert.worst_case.realized < 0


def test_monotone_suite_reports_order_independent_of_input():
    a = V.monotonicity_suite("ccdp", V.SweepGrid([1.0, 10.0], [4.0, 0.5, 2.0]))
    b = V.monotonicity_suite("ccdp", V.SweepGrid([1.0, 10.0], [0.5, 2.0, 4.0]))
    assert a.worst_case == b.worst_case


@pytest.mark.parametrize("th", ["antipodal", "ccdp", "fat_tail"])
def test_distribution_free_outer_bounds_monotone_on_default_grid(th):
    assert V.monotonicity_suite(th).passed

import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diiv import (
    DirectedDesign,
    EdgeContrast,
    MissingCell,
    NonBinary,
    ObservationTable,
    OrderingViolation,
    ZeroDenominator,
    align_instrument,
    aligned_cell_means,
    diiv_estimate,
    diiv_from_cells,
    diiv_ratio,
    edge_contrasts,
    flip_instrument,
    lambda_weight,
    pool_and_flip,
    pooled_iv,
)

from conftest import hand_parallel_table, random_joint_table, random_parallel_table

# RF = pC*tau_C - pF*tau_F, FS = pC - pF at 4-decimal env-(a) shares, tau_C=3, tau_F=2,
# evaluated in exact rationals
_PC = (Fraction("0.1365"), Fraction("0.0395"))
_PF = (Fraction("0.0159"), Fraction("0.0395"))
_RF = [float(_PC[j] * 3 - _PF[j] * 2) for j in range(2)]
_FS = [float(_PC[j] - _PF[j]) for j in range(2)]
DIIV_FIG1A = 2.804311774461028
POOL_FIG1A = 3.459369817578773


class TestEdgeContrasts:
    def test_hand_frame_one(self, hand_table):
        c = edge_contrasts(hand_table, 1)
        assert c.rf == pytest.approx(0.75, abs=1e-15)
        assert c.fs == pytest.approx(0.5, abs=1e-15)
        assert c.cell_counts[(1, 1)] == 4 and c.cell_counts[(0, 0)] == 4

    def test_hand_frame_two(self, hand_table):
        c = edge_contrasts(hand_table, 2)
        assert (c.rf, c.fs) == pytest.approx((0.0, 0.25), abs=1e-15)

    def test_constant_outcome_has_zero_reduced_form(self, hand_table):
        t = hand_table.replace(y=np.full(hand_table.n, 7.5))
        assert edge_contrasts(t, 1).rf == 0.0

    def test_perfect_compliance(self, hand_table):
        t = hand_table.replace(d=hand_table.z1)
        assert edge_contrasts(t, 1).fs == 1.0

    def test_empty_cell(self):
        t = ObservationTable(y=[1.0, 2.0, 3.0], d=[1, 0, 1], z1=[1, 1, 0], h=[1, 1, 0])
        with pytest.raises(MissingCell):
            edge_contrasts(t, 1)

    def test_joint_mode_conditions_on_other_instrument(self):
        t = ObservationTable(
            y=[5.0, 1.0, 3.0, 100.0], d=[1, 0, 1, 1], z1=[1, 0, 0, 1], z2=[0, 0, 1, 1]
        )
        c1 = edge_contrasts(t, 1)
        c2 = edge_contrasts(t, 2)
        assert (c1.rf, c1.fs) == (4.0, 1.0)
        assert (c2.rf, c2.fs) == (2.0, 1.0)

    def test_non_binary_rejected(self):
        with pytest.raises(NonBinary):
            ObservationTable(y=[1.0, 2.0], d=[0, 2], z1=[0, 1], h=[1, 1])

    def test_bad_index(self, hand_table):
        with pytest.raises(ValueError):
            edge_contrasts(hand_table, 3)


class TestDiivRatio:
    def test_single_active_instrument(self):
        r = diiv_ratio(EdgeContrast(1, 1), EdgeContrast(0, 0))
        assert r.tau == 1.0 and r.method == "ratio"

    def test_env_a_contrasts(self):
        r = diiv_ratio(EdgeContrast(_RF[0], _FS[0]), EdgeContrast(_RF[1], _FS[1]))
        assert r.tau == pytest.approx(DIIV_FIG1A, rel=1e-12)
        # 2.8047 is the value at unrounded env-(a) shares
        assert r.tau == pytest.approx(2.8047, abs=1e-3)

    def test_flip_with_negative_orientation(self):
        c1, c2 = EdgeContrast(_RF[0], _FS[0]), EdgeContrast(_RF[1], _FS[1])
        a = diiv_ratio(c1, c2)
        b = diiv_ratio(c1, c2.flipped(), DirectedDesign(1, -1))
        assert a.tau == b.tau

    def test_identical_arms(self):
        with pytest.raises(ZeroDenominator):
            diiv_ratio(EdgeContrast(0.3, 0.2), EdgeContrast(0.1, 0.2))

    def test_near_identical_arms(self):
        with pytest.raises(ZeroDenominator):
            diiv_ratio(EdgeContrast(0.3, 0.2), EdgeContrast(0.1, 0.2 + 1e-12))

    def test_hand_table(self, hand_table):
        r = diiv_estimate(hand_table)
        assert r.tau == pytest.approx(3.0, rel=1e-14)
        assert r.tau == r.numerator / r.denominator


class TestPooled:
    def test_env_a_is_outside_effect_range(self):
        t = (_RF[0] + _RF[1]) / (_FS[0] + _FS[1])
        assert t == pytest.approx(POOL_FIG1A, rel=1e-12)
        assert not 2 <= t <= 3

    def test_hand_table(self, hand_table):
        assert pooled_iv(hand_table) == pytest.approx(0.75 / 0.75, rel=1e-14)

    def test_dead_second_arm_is_standard_iv(self, hand_table):
        y, d = hand_table.y.copy(), hand_table.d.copy()
        frame2 = hand_table.h == 0
        y[frame2], d[frame2] = 0.0, 0
        t = hand_table.replace(y=y, d=d)
        assert pooled_iv(t) == pytest.approx(0.75 / 0.5, rel=1e-14)

    def test_equal_arms(self, hand_table):
        first = hand_table.take(np.arange(8))
        twin = ObservationTable(
            y=np.concatenate([first.y, first.y]),
            d=np.concatenate([first.d, first.d]),
            z1=np.concatenate([first.z1, first.z1]),
            h=[1] * 8 + [0] * 8,
        )
        assert pooled_iv(twin) == pytest.approx(1.5, rel=1e-14)


class TestFlipAndAlign:
    def test_flip(self):
        assert flip_instrument([0, 1, 1, 0]).tolist() == [1, 0, 0, 1]

    def test_flip_involution(self):
        z = np.array([0, 1, 1, 0, 1])
        assert np.array_equal(flip_instrument(flip_instrument(z)), z)

    def test_flip_rejects_non_binary(self):
        with pytest.raises(NonBinary):
            flip_instrument([0, 0.5])

    @pytest.mark.parametrize("z,s,expected", [(1, 1, 1), (1, -1, 0), (0, -1, 1), (0, 1, 0)])
    def test_align(self, z, s, expected):
        assert align_instrument([z], s).tolist() == [expected]

    def test_align_rejects_bad_sign(self):
        with pytest.raises(ValueError):
            align_instrument([0, 1], 0)

    def test_pool_and_flip_matches_ratio_on_hand_table(self, hand_table):
        assert pool_and_flip(hand_table) == pytest.approx(diiv_estimate(hand_table).tau, rel=1e-12)

    def test_flipped_contrast_is_negated(self, hand_table):
        c = edge_contrasts(hand_table, 2)
        t = hand_table.replace(z1=np.where(hand_table.h == 0, 1 - hand_table.z1, hand_table.z1))
        cf = edge_contrasts(t, 2)
        assert (cf.rf, cf.fs) == (-c.rf, -c.fs)


class TestDiivFromCells:
    def test_unit_edges_never_read_corner(self):
        r = diiv_from_cells((0, 1, 0, None), (0, 1, 0, None))
        assert r.tau == 1.0

    def test_env_a_cells(self):
        # aligned cells consistent with the share-weighted contrasts, baseline arbitrary
        y00, d00 = 0.9, 0.4
        y = {(0, 0): y00, (1, 0): y00 + _RF[0], (0, 1): y00 + _RF[1], (1, 1): float("nan")}
        d = {(0, 0): d00, (1, 0): d00 + _FS[0], (0, 1): d00 + _FS[1], (1, 1): float("nan")}
        assert diiv_from_cells(y, d).tau == pytest.approx(DIIV_FIG1A, rel=1e-12)

    def test_identical_edges(self):
        with pytest.raises(ZeroDenominator):
            diiv_from_cells((0.1, 0.5, 0.5, 0.0), (0.2, 0.3, 0.3, 0.0))


class TestLambda:
    def test_rounded_shares_env_a(self):
        # 3-decimal rounded shares; 0.805 only arises from the unrounded ones
        assert lambda_weight(0.137, 0.039, 0.016, 0.039) == pytest.approx(0.8099173553719, rel=1e-12)

    def test_rounded_shares_env_b(self):
        assert lambda_weight(0.039, 0.016, 0.039, 0.137) == pytest.approx(0.1900826446281, rel=1e-12)

    def test_four_decimal_shares(self):
        assert lambda_weight(0.1365, 0.0395, 0.0159, 0.0395) == pytest.approx(0.805, abs=1e-3)
        assert lambda_weight(0.0395, 0.0159, 0.0395, 0.1365) == pytest.approx(0.195, abs=1e-3)

    def test_single_type_limits(self):
        assert lambda_weight(0.2, 0.1, 0.05, 0.05) == 1.0
        assert lambda_weight(0.1, 0.1, 0.05, 0.2) == 0.0

    def test_zero_denominator(self):
        with pytest.raises(ZeroDenominator):
            lambda_weight(0.1, 0.1, 0.2, 0.2)

    def test_ordering_violation_warns(self):
        with pytest.warns(OrderingViolation):
            lam = lambda_weight(0.3, 0.1, 0.2, 0.1)
        assert lam > 1

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
    def test_range_under_ordering(self, p):
        pC1, pC2 = max(p[0], p[1]), min(p[0], p[1])
        pF1, pF2 = min(p[2], p[3]), max(p[2], p[3])
        if (pC1 - pC2) - (pF1 - pF2) <= 1e-9:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            lam = lambda_weight(pC1, pC2, pF1, pF2)
        assert 0.0 <= lam <= 1.0


class TestProperties:
    @pytest.mark.parametrize("seed", range(20))
    def test_flip_antisymmetry(self, seed):
        rng = np.random.default_rng(seed)
        t = random_joint_table(rng)
        for j, col in ((1, "z1"), (2, "z2")):
            c = edge_contrasts(t, j)
            cf = edge_contrasts(t.replace(**{col: flip_instrument(getattr(t, col))}), j)
            assert (cf.rf, cf.fs) == (-c.rf, -c.fs)

    @pytest.mark.parametrize("seed", range(20))
    def test_pool_and_flip_equals_ratio(self, seed):
        t = random_parallel_table(np.random.default_rng(seed), balanced=False)
        assert pool_and_flip(t) == pytest.approx(diiv_estimate(t).tau, rel=1e-12)

    @pytest.mark.parametrize("signs", [(1, 1), (-1, -1)])
    @pytest.mark.parametrize("seed", range(20))
    def test_aligned_cells_match_raw_ratio_equal_signs(self, seed, signs):
        t = random_joint_table(np.random.default_rng(seed))
        design = DirectedDesign(*signs)
        y, d, _ = aligned_cell_means(t, design)
        raw = diiv_estimate(t, design)
        assert diiv_from_cells(y, d).tau == pytest.approx(raw.tau, rel=1e-12)

    @pytest.mark.parametrize("signs", [(1, -1), (-1, 1)])
    @pytest.mark.parametrize("seed", range(20))
    def test_aligned_cells_match_aligned_baseline_ratio(self, seed, signs):
        # with mixed signs the aligned (0,0) cell is a raw (0,1)/(1,0) cell, so the
        # matching raw contrasts hold the other instrument at its aligned-zero value
        t = random_joint_table(np.random.default_rng(seed))
        s1, s2 = signs
        design = DirectedDesign(s1, s2)
        y, d, _ = aligned_cell_means(t, design)
        c1 = edge_contrasts(t, 1, baseline=(1 - s2) // 2)
        c2 = edge_contrasts(t, 2, baseline=(1 - s1) // 2)
        ref = diiv_ratio(c1, c2, design)
        assert diiv_from_cells(y, d).tau == pytest.approx(ref.tau, rel=1e-12)

    def test_mixed_signs_differ_from_raw_baseline(self):
        # counterexample: aligned ratio is not the raw (0,0)-baseline ratio when s1 != s2
        t = ObservationTable(
            y=[0.0, 1.0, 2.0, 10.0], d=[0, 1, 1, 1], z1=[0, 1, 0, 1], z2=[0, 0, 1, 1]
        )
        design = DirectedDesign(1, -1)
        y, d, _ = aligned_cell_means(t, design)
        aligned = diiv_from_cells(y, d).tau
        raw = diiv_estimate(t, design).tau
        assert aligned == pytest.approx(10.0)
        assert raw == pytest.approx(1.5)

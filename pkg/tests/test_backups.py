import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gosafeopt.backups import BackupStore, TierSpec, boundary_check, \
    boundary_check_tiered, default_stride, distance_from_covariance, \
    harvest, safe_state_contains, subset_select
from gosafeopt.confidence import BoundsTable
from gosafeopt.gp import Kernel


def margin_table(margins, q=1):
    # one grid point per margin, every constraint lower bound equal to it
    margins = np.asarray(margins, dtype=float)
    lower = np.column_stack([np.full(margins.size, -np.inf)]
                            + [margins] * q)
    return BoundsTable(lower, np.full_like(lower, np.inf))


def store_of(states, lipschitz_x=1.0, jump=0.1, noise=0.0):
    states = np.asarray(states, dtype=float)
    states = states.reshape(len(states), -1)
    return BackupStore(np.arange(len(states)), states, lipschitz_x, jump,
                       noise)


class TestHarvest:

    @pytest.mark.parametrize('stride, expected', [(1, 10), (5, 2), (3, 4),
                                                  (20, 1)])
    def test_count(self, stride, expected):
        store = BackupStore.empty(2, 1.0, 0.1)
        out = harvest(store, 4, np.ones((10, 2)), stride)
        assert len(out) == expected
        assert np.all(out.params == 4)

    def test_stride_offsets(self):
        states = np.arange(10.0)[:, None]
        out = harvest(BackupStore.empty(1, 1.0, 0.1), 0, states, 5)
        assert out.states[:, 0].tolist() == [0.0, 5.0]

    def test_append_only(self):
        s1 = harvest(BackupStore.empty(1, 1.0, 0.1), 0, np.zeros((3, 1)))
        s2 = harvest(s1, 1, np.ones((2, 1)))
        assert len(s1) == 3
        assert np.array_equal(s2.params[:3], s1.params)
        assert np.array_equal(s2.states[:3], s1.states)

    def test_invalid_stride(self):
        with pytest.raises(ValueError):
            harvest(BackupStore.empty(1, 1.0, 0.1), 0, np.zeros((3, 1)), 0)

    @pytest.mark.parametrize('horizon, stride', [(10, 1), (100, 2),
                                                 (400, 8), (49, 1)])
    def test_default_stride(self, horizon, stride):
        assert default_stride(horizon) == stride


class TestBoundaryCheck:

    def test_continue_inside(self):
        d = boundary_check(store_of([0.0]), margin_table([1.0]), [0.5])
        assert not d.trigger and d.backup is None

    def test_trigger_outside(self):
        d = boundary_check(store_of([0.0]), margin_table([1.0]), [1.0])
        assert d.trigger and d.backup == 0

    def test_backup_has_largest_margin(self):
        store = store_of([0.0, 0.0])
        d = boundary_check(store, margin_table([0.2, 0.5]), [3.0])
        assert d.trigger and d.backup == 1

    def test_backup_trades_margin_for_distance(self):
        # scores 0.5 - 0.0 and 2.0 - 1.9: the nearer, smaller margin wins
        store = store_of([3.0, 1.1], jump=1.0)
        d = boundary_check(store, margin_table([0.5, 2.0]), [3.0])
        assert d.trigger and d.backup == 0

    def test_tie_lowest_entry(self):
        d = boundary_check(store_of([1.0, -1.0]), margin_table([0.3, 0.3]),
                           [0.0])
        assert d.trigger and d.entry == 0

    def test_every_constraint_must_certify(self):
        lower = np.array([[-np.inf, 1.0, 0.05]])
        table = BoundsTable(lower, np.full_like(lower, np.inf))
        assert boundary_check(store_of([0.0]), table, [0.0]).trigger

    def test_noise_margin_enlarges_need(self):
        store = store_of([0.0], noise=0.5)
        assert boundary_check(store, margin_table([1.0]), [0.5]).trigger

    def test_empty_store_rejected(self):
        with pytest.raises(ValueError):
            boundary_check(BackupStore.empty(1, 1.0, 0.1), margin_table([1]),
                           [0.0])

    def test_equivalence_with_membership(self):
        rng = np.random.default_rng(7)
        store = BackupStore(rng.integers(0, 6, 40), rng.normal(size=(40, 3)),
                            1.5, 0.2, 0.05)
        table = margin_table(rng.uniform(-0.5, 2.0, 6), q=2)
        margins = store.margins(table)
        for x in rng.normal(scale=1.5, size=(1000, 3)):
            cont = not boundary_check(store, table, x, margins).trigger
            assert cont == safe_state_contains(store, table, x, margins)


class TestSafeStateContains:

    def test_zero_radius(self):
        store = store_of([0.3], lipschitz_x=2.0, jump=0.25)
        assert safe_state_contains(store, margin_table([0.5]), [0.3])

    def test_negative_radius(self):
        store = store_of([0.0], jump=0.5)
        table = margin_table([0.4])
        assert not any(safe_state_contains(store, table, [x])
                       for x in np.linspace(-1, 1, 21))

    def test_empty(self):
        assert not safe_state_contains(BackupStore.empty(1, 1.0, 0.1),
                                       margin_table([1.0]), [0.0])


TIERS = TierSpec(eta_l=0.4, eta_u=0.6, d_l=0.2, d_u=0.5)


class TestTiered:

    def test_interior_and_marginal_cover(self):
        store = store_of([0.0, 0.5])
        d = boundary_check_tiered(store, margin_table([1.0, 0.5]), [0.4],
                                  TIERS)
        assert not d.trigger

    def test_interior_alone_covers_near(self):
        d = boundary_check_tiered(store_of([0.0]), margin_table([1.0]),
                                  [0.1], TIERS)
        assert not d.trigger

    def test_no_interior(self):
        d = boundary_check_tiered(store_of([0.0]), margin_table([0.5]),
                                  [0.0], TIERS)
        assert d.trigger and d.backup == 0

    def test_nearest_marginal_is_backup(self):
        store = store_of([0.0, 0.9])
        d = boundary_check_tiered(store, margin_table([1.0, 0.5]), [0.8],
                                  TIERS)
        assert d.trigger and d.backup == 1

    def test_flags_empty_marginal(self):
        # interior entry within d_u but not d_l, and no marginal entries
        d = boundary_check_tiered(store_of([0.0]), margin_table([1.0]),
                                  [0.3], TIERS)
        assert d.trigger and d.empty_marginal

    def test_unsafe_entries_never_backups(self):
        store = store_of([0.0, 2.0])
        d = boundary_check_tiered(store, margin_table([1.0, 0.1]), [1.9],
                                  TIERS)
        assert d.trigger and d.backup == 0

    def test_fallback_without_tiers(self):
        store = store_of([0.0, 0.0])
        d = boundary_check_tiered(store, margin_table([0.1, 0.3]), [0.0],
                                  TIERS)
        assert d.trigger and d.backup == 1

    @pytest.mark.parametrize('args', [(0.6, 0.4, 0.1, 0.2),
                                      (0.4, 0.6, 0.3, 0.2),
                                      (0.4, 0.6, -0.1, 0.2)])
    def test_invalid_spec(self, args):
        with pytest.raises(ValueError):
            TierSpec(*args)

    def test_conservative_flag(self):
        assert TIERS.is_conservative(1.0, 0.1)
        assert not TIERS.is_conservative(1.0, 0.2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_tiered_continue_implies_exact(self, seed):
        rng = np.random.default_rng(seed)
        jump = rng.uniform(0, 0.2)
        lx = rng.uniform(0.5, 2.0)
        d_u = rng.uniform(0.1, 0.6)
        tiers = TierSpec(0.0, lx * (d_u + jump) + rng.uniform(0, 0.1),
                         rng.uniform(0, d_u), d_u)
        store = BackupStore(rng.integers(0, 8, 30),
                            rng.uniform(-1, 1, (30, 2)), lx, jump)
        table = margin_table(rng.uniform(-0.5, 2.0, 8), q=2)
        margins = store.margins(table)
        for x in rng.uniform(-1.5, 1.5, (100, 2)):
            if not boundary_check_tiered(store, table, x, tiers,
                                         margins).trigger:
                assert not boundary_check(store, table, x, margins).trigger


class TestDistanceFromCovariance:

    @pytest.mark.parametrize('kappa', [0.94, 0.90])
    def test_squared_exponential(self, kappa):
        expected = math.sqrt(-2 * math.log(kappa))
        assert distance_from_covariance(Kernel('se', 1.0), kappa) == \
            pytest.approx(expected, abs=1e-12)

    def test_rounded_values(self):
        kern = Kernel('se', 1.0)
        assert distance_from_covariance(kern, 0.94) == \
            pytest.approx(0.3518, abs=1e-4)
        assert distance_from_covariance(kern, 0.90) == \
            pytest.approx(0.4590, abs=1e-4)

    def test_output_scale_gives_zero(self):
        assert distance_from_covariance(Kernel('se', 1.0), 1.0) == 0.0

    @pytest.mark.parametrize('kappa', [0.1, 0.5, 0.9, 0.99])
    def test_matern_round_trip(self, kappa):
        kern = Kernel('matern32', 1.0, 2.0)
        r = distance_from_covariance(kern, 2.0 * kappa)
        assert kern.profile(r) == pytest.approx(2.0 * kappa, abs=1e-10)

    @pytest.mark.parametrize('kappa', [0.0, -0.5, 1.5])
    def test_out_of_range(self, kappa):
        with pytest.raises(ValueError):
            distance_from_covariance(Kernel('se', 1.0), kappa)

    def test_tier_distances_scale_with_lengthscale(self):
        tiers = TierSpec.from_covariance(Kernel('se', 2.0), 0.9, 0.94,
                                         0.4, 0.6)
        assert tiers.d_l == pytest.approx(2 * 0.3518, abs=2e-4)
        assert tiers.d_u == pytest.approx(2 * 0.4590, abs=2e-4)

    def test_anisotropic_rejected(self):
        with pytest.raises(ValueError):
            TierSpec.from_covariance(Kernel('se', [1.0, 2.0]), 0.9, 0.94,
                                     0.4, 0.6)


class TestSubsetSelect:

    def test_identity_at_threshold(self):
        store = store_of(np.zeros(10))
        out = subset_select(store, margin_table(np.ones(10)), 10, 5,
                            np.random.default_rng(0))
        assert out is store

    def test_size_and_order(self):
        store = store_of(np.arange(20.0))
        out = subset_select(store, margin_table(np.ones(20)), 10, 5,
                            np.random.default_rng(0))
        assert len(out) == 5
        assert np.all(np.diff(out.params) > 0)

    def test_uniform_when_weights_equal(self):
        store = store_of(np.arange(6.0))
        table = margin_table(np.full(6, 0.7))
        counts = np.zeros(6)
        rng = np.random.default_rng(1)
        for _ in range(3000):
            counts[subset_select(store, table, 5, 2, rng).params] += 1
        # each entry is kept with probability 1/3
        assert np.allclose(counts / 3000, 1 / 3, atol=0.04)

    def test_prefers_small_margins(self):
        store = store_of(np.arange(3.0))
        table = margin_table([0.0, 2.0, 2.0])
        rng = np.random.default_rng(2)
        kept = [subset_select(store, table, 2, 1, rng).params[0]
                for _ in range(500)]
        # weights 1, exp(-4), exp(-4)
        assert np.mean(np.equal(kept, 0)) > 0.9

    def test_deterministic_given_seed(self):
        store = store_of(np.arange(30.0))
        table = margin_table(np.linspace(0, 1, 30))
        a = subset_select(store, table, 10, 4, np.random.default_rng(5))
        b = subset_select(store, table, 10, 4, np.random.default_rng(5))
        assert np.array_equal(a.params, b.params)

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            subset_select(store_of([0.0]), margin_table([1.0]), 5, 5,
                          np.random.default_rng(0))

"""Profiles, capacity tables and the fixture network."""

import numpy as np
import pandas as pd
import pytest

from dlmp.exceptions import DayRangeError, ProfileFormatError
from dlmp.services.netmodel import validate
from dlmp.services.pflow import InjectionSet, solve_ac
from dlmp.services.runner import STATUS_OK, run_network
from dlmp.services.scenario import (
    DEEPEST_11KV, GROUP_FEEDS, STEPS_PER_DAY, YEAR_STEPS, ProfileSet, Scenario, _group_buses,
    build_fixture, capacity_table, installed_capacity, load_profiles, representative_day,
    save_profiles, synthesize_year,
)

HEADER = 'timestamp,demand_factor,pv_cf,wind_cf,mip_gbp_mwh\n'


def write_rows(path, rows):
    path.write_text(HEADER + ''.join(row + '\n' for row in rows), encoding='utf-8')
    return path


def half_hours(n, pv='0.0'):
    stamps = pd.date_range('2015-01-01T00:00', periods=n, freq='30min')
    return [f'{s:%Y-%m-%dT%H:%M},0.62,{pv},0.41,38.5' for s in stamps]


@pytest.fixture(scope='module')
def year():
    return synthesize_year(1)


class TestLoadProfiles:

    def test_single_row(self, tmp_path):
        profiles = load_profiles(write_rows(tmp_path / 'p.csv', ['2015-01-01T00:00,0.62,0.0,0.41,38.5']))
        assert len(profiles) == 1
        assert profiles.demand_factor[0] == 0.62
        assert profiles.mip_gbp_mwh[0] == 38.5

    def test_out_of_range_names_row(self, tmp_path):
        rows = half_hours(8)
        rows[6] = rows[6].replace(',0.0,', ',1.2,')
        with pytest.raises(ProfileFormatError, match='row 7: pv_cf out of range'):
            load_profiles(write_rows(tmp_path / 'p.csv', rows))

    def test_full_year_length(self, tmp_path, year):
        path = save_profiles(year.slice(0, YEAR_STEPS - 1), tmp_path / 'short.csv')
        with pytest.raises(ProfileFormatError, match='expected 17520 rows for a full year, found 17519'):
            load_profiles(path, full_year=True)
        assert len(load_profiles(path)) == YEAR_STEPS - 1

    @pytest.mark.parametrize('row, message', [
        ('2015-01-01T00:30,0.62,0.0,0.41', 'row 2: expected 5 columns, found 4'),
        ('2015-01-01T00:30,high,0.0,0.41,38.5', 'row 2: demand_factor is not numeric'),
        ('2015-01-01T00:00,0.62,0.0,0.41,38.5', 'row 2: timestamps are not increasing'),
        ('2015-01-01T01:30,0.62,0.0,0.41,38.5', 'row 2: timestamps are not half-hourly'),
        ('yesterday,0.62,0.0,0.41,38.5', 'row 2: bad timestamp'),
        ('2015-01-01T00:30,0.0,0.0,0.41,38.5', 'row 2: demand_factor out of range'),
        ('2015-01-01T00:30,0.62,0.0,-0.1,38.5', 'row 2: wind_cf out of range'),
    ])
    def test_bad_rows(self, tmp_path, row, message):
        path = write_rows(tmp_path / 'p.csv', ['2015-01-01T00:00,0.62,0.0,0.41,38.5', row])
        with pytest.raises(ProfileFormatError, match=message):
            load_profiles(path)

    def test_negative_price_accepted(self, tmp_path):
        rows = ['2015-01-01T00:00,0.5,0.0,0.9,-32.3']
        assert load_profiles(write_rows(tmp_path / 'p.csv', rows)).mip_gbp_mwh[0] == -32.3

    def test_bad_header(self, tmp_path):
        path = tmp_path / 'p.csv'
        path.write_text('time,demand,pv,wind,price\n', encoding='utf-8')
        with pytest.raises(ProfileFormatError, match='header'):
            load_profiles(path)

    def test_save_load_keeps_values(self, tmp_path, year):
        day = year.day(200)
        back = load_profiles(save_profiles(day, tmp_path / 'day.csv'))
        np.testing.assert_array_equal(back.pv_cf, day.pv_cf)
        np.testing.assert_array_equal(back.mip_gbp_mwh, day.mip_gbp_mwh)
        assert list(back.timestamps) == list(day.timestamps)


class TestSynthesizeYear:

    def test_length_and_ranges(self, year):
        assert len(year) == YEAR_STEPS
        assert year.n_days == 365
        assert year.demand_factor.max() == pytest.approx(1.0)
        assert year.demand_factor.min() > 0
        assert 0 <= year.wind_cf.min() and year.wind_cf.max() <= 1

    def test_no_sun_at_midnight(self, year):
        midnight = year.pv_cf.reshape(-1, STEPS_PER_DAY)[:, :2]
        assert np.all(midnight == 0.0)

    def test_deterministic(self, year):
        again = synthesize_year(1)
        for name in ('demand_factor', 'pv_cf', 'wind_cf', 'mip_gbp_mwh'):
            np.testing.assert_array_equal(getattr(again, name), getattr(year, name))

    def test_other_seed_differs(self, year):
        assert not np.array_equal(synthesize_year(2).mip_gbp_mwh, year.mip_gbp_mwh)

    def test_price_extremes(self, year):
        assert np.any(year.mip_gbp_mwh < 0)
        assert np.any(year.mip_gbp_mwh > 90)

    def test_study_days(self, year):
        winter = representative_day(year, 'winter')
        summer = representative_day(year, 'summer')
        assert year.timestamps[winter * STEPS_PER_DAY].month in (1, 2, 11, 12)
        assert year.timestamps[summer * STEPS_PER_DAY].month in (5, 6, 7, 8)
        assert year.day(winter).demand_factor.max() == pytest.approx(1.0)
        with pytest.raises(ValueError):
            representative_day(year, 'autumn')

    def test_day_range(self, year):
        with pytest.raises(DayRangeError):
            year.day(365)


class TestScenario:

    def test_steps_default_to_whole_profile(self):
        assert Scenario('n.json', 'p.csv').steps(96) == (0, 96)

    def test_range_beyond_profile(self):
        with pytest.raises(DayRangeError):
            Scenario('n.json', 'p.csv', time_range=(48, 144)).steps(96)

    def test_rejects_unknown_case(self):
        with pytest.raises(ValueError, match='capacity case'):
            Scenario('n.json', 'p.csv', capacity_case='2030')

    def test_rejects_empty_range(self):
        with pytest.raises(ValueError):
            Scenario('n.json', 'p.csv', time_range=(10, 10))

    def test_profile_lengths_checked(self):
        with pytest.raises(ProfileFormatError):
            ProfileSet(pd.date_range('2015-01-01', periods=2, freq='30min'),
                       [0.5, 0.5], [0.0], [0.1, 0.1], [40.0, 40.0])


class TestCapacityTable:

    def test_current_totals(self):
        table = capacity_table('current')
        assert abs(table.total() - 2642) <= 1.0 + 1e-9
        assert table.fuel_total('gas') == table.get('gas', 400) == pytest.approx(1045)
        assert table.fuel_total('pv') == pytest.approx(980, abs=1.0)
        assert table.share('pv', 33) == pytest.approx(0.91, abs=0.005)

    def test_future_totals(self):
        table = capacity_table('future')
        assert abs(table.total() - 3506) <= 1.0 + 1e-9
        assert table.fuel_total('pv') == pytest.approx(1601, abs=1.0)
        assert table.fuel_total('wind') == pytest.approx(362, abs=1.0)
        assert table.fuel_total('biomass') == pytest.approx(497, abs=1.0)

    def test_rows_cover_table(self):
        table = capacity_table('future')
        assert sum(mw for _, _, mw in table.rows()) == pytest.approx(table.total())


class TestFixture:

    @pytest.mark.parametrize('case', ['current', 'future'])
    def test_validates(self, case):
        network = build_fixture(case)
        assert validate(network).ok
        assert network.n_bus == 36
        assert network.bus(DEEPEST_11KV).voltage_level == 11
        assert sorted({b.voltage_level for b in network.buses}) == [11, 33, 132, 400]

    @pytest.mark.parametrize('case', ['current', 'future'])
    def test_installed_matches_table(self, case):
        network = build_fixture(case)
        built = installed_capacity(network)
        table = capacity_table(case)
        for fuel, level, mw in table.rows():
            assert built.get(fuel, level) == pytest.approx(mw, abs=1.0)
        assert built.total() == pytest.approx(table.total(), abs=1.0)

    def test_peak_demand(self):
        for case in ('current', 'future'):
            loads = build_fixture(case).loads
            assert sum(ld.p_peak_mw for ld in loads) == pytest.approx(1860.6, abs=1e-6)

    def test_cases_share_everything_but_generation(self):
        current, future = build_fixture('current'), build_fixture('future')
        assert [(b.id, b.voltage_level) for b in current.buses] == [(b.id, b.voltage_level) for b in future.buses]
        assert current.branches == future.branches
        assert current.loads == future.loads
        assert current.generators != future.generators

    def test_deterministic(self):
        assert build_fixture('future') == build_fixture('future')

    def test_two_boundary_buses(self):
        network = build_fixture('current')
        boundary = [b.id for b in network.buses if b.region_tag == 'boundary']
        assert boundary == [1, 2]
        assert network.buses[network.slack_index].id == 1
        assert [g.bus for g in network.generators if g.is_grid] == [1]

    def test_peak_power_flow_holds_voltage(self):
        """All demand at peak, served from the grid with no local generation."""
        network = build_fixture('current')
        p = np.zeros(network.n_bus)
        q = np.zeros(network.n_bus)
        for load in network.loads:
            p[network.bus_index[load.bus]] -= load.p_peak_mw
            q[network.bus_index[load.bus]] -= load.p_peak_mw * load.q_ratio
        sol = solve_ac(network, InjectionSet(p, q))
        assert sol.converged
        assert sol.v_mag.min() >= 0.9
        assert sol.total_loss_mw < 0.05 * -p.sum()

    @pytest.mark.parametrize('case', ['current', 'future'])
    def test_winter_peak_step_solves(self, case, year):
        peak = int(np.argmax(year.demand_factor))
        results = run_network(build_fixture(case), year.slice(peak, peak + 1), case)
        assert results.status == [STATUS_OK]
        assert np.all(np.isfinite(results.lmp))

    def test_reverse_limits_split_the_cases(self):
        """Current DG never exceeds a 132/33 reverse limit at minimum demand; future DG does."""
        current, future = build_fixture('current'), build_fixture('future')
        for g, feed in enumerate(GROUP_FEEDS):
            area = set(_group_buses(g))
            if g == 0:
                area |= {b.id for b in current.buses if b.voltage_level == 11}
            branch = next(br for br in current.branches if br.from_bus == feed and br.to_bus == _group_buses(g)[0])
            assert branch.is_transformer
            assert branch.forward_limit_mw == 900
            demand = sum(ld.p_peak_mw for ld in current.loads if ld.bus in area)

            def export(network):
                dg = sum(gen.p_max_mw for gen in network.generators if gen.bus in area)
                return dg - 0.3 * demand

            assert export(current) < branch.reverse_limit_mw
            assert export(future) > branch.reverse_limit_mw

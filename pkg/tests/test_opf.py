"""Sequential LP dispatch and nodal price decomposition."""

import dataclasses
import logging

import numpy as np
import pytest

from dlmp.exceptions import InfeasibleDispatchError
from dlmp.services.netmodel import Branch, Bus, Generator, Load, Network, relax_limits
from dlmp.services.opf import DispatchProblem, OpfSettings, decompose_lmp, solve_opf
from dlmp.services.pflow import InjectionSet, solve_ac
from dlmp.services.runner import build_problem
from dlmp.services.scenario import build_fixture
from tests.builders import grid_unit


def problem_for(network, costs=None, available=None, loads=None):
    gens = network.generators
    return DispatchProblem(
        network=network,
        gen_available_mw=available if available is not None else [g.p_max_mw for g in gens],
        gen_cost_gbp_mwh=costs if costs is not None else [g.marginal_cost_gbp_mwh for g in gens],
        load_mw=loads if loads is not None else [ld.p_peak_mw for ld in network.loads],
    )


def lossy_import(r=0.05):
    """Grid at bus 1 priced 40, a 100 MW load at bus 2 through one lossy line."""
    return Network(
        buses=[Bus(1, 'GRID', 132, 'slack'), Bus(2, 'LOAD', 33, 'generator')],
        branches=[Branch(1, 2, r=r, x=0.1)],
        generators=[grid_unit(1), Generator(2, 0.0, 5.0, 200.0, 'ocgt')],
        loads=[Load(2, 100.0)],
        name='lossy-import',
    )


class TestUnconstrained:

    def test_uniform_price(self, lossless_pair):
        sol = solve_opf(problem_for(lossless_pair))
        assert sol.converged
        assert sol.dispatch_mw[0] == pytest.approx(100.0, abs=1e-6)
        np.testing.assert_allclose(sol.lmp_gbp_mwh, 50.0, atol=1e-9)
        np.testing.assert_allclose(sol.lmp_congestion, 0.0, atol=1e-9)
        assert sol.binding_branches == []

    def test_decomposition_rows(self, lossless_pair):
        rows = decompose_lmp(solve_opf(problem_for(lossless_pair)))
        assert [row.bus for row in rows] == [1, 2]
        for row in rows:
            assert (row.energy, row.loss, row.congestion, row.total) == pytest.approx((50.0, 0.0, 0.0, 50.0),
                                                                                     abs=1e-9)


class TestCongestion:

    def test_binding_line_splits_prices(self, congested_pair):
        sol = solve_opf(problem_for(congested_pair))
        assert sol.converged
        assert sol.dispatch_mw == pytest.approx([80.0, 20.0], abs=1e-4)
        assert sol.lmp_gbp_mwh == pytest.approx([50.0, 150.0], abs=1e-6)
        assert sol.lmp_congestion[1] == pytest.approx(100.0, abs=1e-6)
        assert len(sol.binding_branches) == 1
        branch, direction, shadow = sol.binding_branches[0]
        assert (branch, direction) == (0, 'forward')
        assert shadow == pytest.approx(100.0, abs=1e-6)

    def test_congested_decomposition(self, congested_pair):
        rows = {row.bus: row for row in decompose_lmp(solve_opf(problem_for(congested_pair)))}
        b = rows[2]
        assert (b.energy, b.loss, b.congestion, b.total) == pytest.approx((50.0, 0.0, 100.0, 150.0), abs=1e-6)

    def test_export_limit_curtails_and_zeroes_price(self, export_constrained):
        sol = solve_opf(problem_for(export_constrained, costs=[40.0, 0.0]))
        assert sol.converged
        assert sol.dispatch_mw[1] == pytest.approx(50.0, abs=1e-4)
        assert sol.curtailed_mw == pytest.approx([0.0, 10.0], abs=1e-4)
        assert abs(sol.lmp_gbp_mwh[1]) < 1e-9
        assert sol.lmp_gbp_mwh[0] == pytest.approx(40.0, abs=1e-9)
        assert [(k, d) for k, d, _ in sol.binding_branches] == [(0, 'reverse')]

    def test_components_sum_to_total(self, export_constrained):
        sol = solve_opf(problem_for(export_constrained, costs=[40.0, 0.0]))
        total = sol.lmp_energy + sol.lmp_loss + sol.lmp_congestion
        np.testing.assert_allclose(sol.lmp_gbp_mwh, total, rtol=0, atol=1e-9)
        assert np.all(sol.curtailed_mw >= 0)
    def test_export_beyond_unscreened_limit_warns(self, export_constrained, caplog):
        with caplog.at_level(logging.WARNING, logger='dlmp.services.opf'):
            sol = solve_opf(problem_for(export_constrained, costs=[40.0, 0.0]))
        assert sol.converged
        assert any('unscreened branches [0]' in r.getMessage() for r in caplog.records)


def spread(sol):
    return float(sol.lmp_gbp_mwh.max() - sol.lmp_gbp_mwh.min())


class TestLimitRelaxation:

    def test_relaxed_transformer_closes_the_export_gap(self, export_constrained):
        limited = solve_opf(problem_for(export_constrained, costs=[40.0, 0.0]))
        relaxed = solve_opf(problem_for(relax_limits(export_constrained), costs=[40.0, 0.0]))
        assert spread(limited) == pytest.approx(40.0, abs=1e-6)
        assert spread(relaxed) <= spread(limited)
        assert relaxed.curtailed_mw == pytest.approx([0.0, 0.0], abs=1e-4)

    def test_relaxed_line_closes_the_import_gap(self, congested_pair):
        limited = solve_opf(problem_for(congested_pair))
        relaxed = solve_opf(problem_for(relax_limits(congested_pair)))
        assert spread(relaxed) <= spread(limited)
        assert spread(relaxed) == pytest.approx(0.0, abs=1e-9)

    def test_relaxed_fixture_step_spreads_no_wider(self):
        network = build_fixture('future')
        limited = solve_opf(build_problem(network, 0.45, 0.8, 0.3, 40.0))
        relaxed = solve_opf(build_problem(relax_limits(network), 0.45, 0.8, 0.3, 40.0))
        assert relaxed.binding_branches == []
        assert spread(relaxed) <= spread(limited) + 1e-6


class TestExportRegime:

    def test_exporting_bus_prices_below_grid(self):
        net = Network(
            buses=[Bus(1, 'GRID', 132, 'slack'), Bus(2, 'PV', 33, 'generator')],
            branches=[Branch(1, 2, r=0.05, x=0.1)],
            generators=[grid_unit(1), Generator(2, 0.0, 60.0, 0.0, 'pv', profile_driven=True)],
            loads=[Load(2, 10.0)],
            name='lossy-export',
        )
        sol = solve_opf(problem_for(net, costs=[40.0, 0.0]))
        assert sol.binding_branches == []
        assert sol.dispatch_mw[1] == pytest.approx(60.0, abs=1e-4)
        assert sol.lmp_gbp_mwh[0] == pytest.approx(40.0)
        assert sol.lmp_gbp_mwh[1] < 40.0
        assert sol.lmp_loss[1] < 0

    def test_fixture_dg_prices_below_grid_without_congestion(self):
        network = build_fixture('current')
        sol = solve_opf(build_problem(network, 0.45, 0.9, 0.3, 40.0))
        assert sol.converged
        assert sol.binding_branches == []
        grid = sol.lmp_gbp_mwh[network.slack_index]
        assert grid == pytest.approx(40.0, abs=1e-6)
        dg_buses = {g.bus for g in network.generators if not g.is_grid and network.bus(g.bus).voltage_level == 33}
        assert min(sol.lmp_gbp_mwh[network.bus_index[b]] for b in dg_buses) < grid


class TestLosses:

    def finite_difference_sensitivity(self, network, delta_mw=0.1):
        losses = []
        for sign in (1.0, -1.0):
            load = 100.0 + sign * delta_mw
            inj = InjectionSet([0.0, -load], [0.0, -100.0 * network.loads[0].q_ratio])
            losses.append(solve_ac(network, inj).total_loss_mw)
        return (losses[0] - losses[1]) / (2.0 * delta_mw)

    def test_loss_component_matches_finite_difference(self):
        net = lossy_import()
        sol = solve_opf(problem_for(net, costs=[40.0, 200.0], available=[1000.0, 0.0]))
        s = self.finite_difference_sensitivity(net)
        assert sol.lmp_loss[1] == pytest.approx(40.0 * s, rel=1e-3)
        assert sol.lmp_gbp_mwh[1] == pytest.approx(40.0 * (1.0 + s), rel=1e-4)
        assert sol.lmp_energy == pytest.approx([40.0, 40.0])

    def test_held_voltage_linearization_prices_losses(self):
        net = lossy_import()
        problem = problem_for(net, costs=[40.0, 200.0], available=[1000.0, 0.0])
        sol = solve_opf(problem, OpfSettings(voltage_support=True))
        assert sol.lmp_gbp_mwh[0] == pytest.approx(40.0)
        assert 40.0 < sol.lmp_gbp_mwh[1] < 40.0 * 1.25
        assert sol.lmp_loss[1] > 0
        assert sol.total_loss_mw > 0

    def test_energy_conservation(self):
        net = lossy_import()
        sol = solve_opf(problem_for(net, costs=[40.0, 200.0], available=[1000.0, 0.0]))
        assert sol.dispatch_mw.sum() == pytest.approx(100.0 + sol.total_loss_mw, abs=0.05)

    def test_import_price_rises_along_radial_feeder(self, radial_feeder):
        net = dataclasses.replace(radial_feeder, generators=(grid_unit(1), Generator(4, 0.0, 1.0, 300.0, 'ocgt')))
        sol = solve_opf(problem_for(net, costs=[40.0, 300.0], available=[1000.0, 0.0]))
        assert sol.lmp_gbp_mwh[0] == pytest.approx(40.0)
        assert np.all(np.diff(sol.lmp_gbp_mwh) > 0)


class TestErrors:

    def test_not_enough_supply(self, lossless_pair):
        problem = problem_for(lossless_pair, available=[50.0])
        with pytest.raises(InfeasibleDispatchError, match='infeasible dispatch'):
            solve_opf(problem)

    def test_branch_limit_makes_load_unservable(self):
        net = Network(
            buses=[Bus(1, 'A', 33, 'slack'), Bus(2, 'B', 33)],
            branches=[Branch(1, 2, r=0.0, x=0.1, forward_limit_mw=50.0, reverse_limit_mw=50.0)],
            generators=[Generator(1, 0.0, 200.0, 50.0, 'ccgt')],
            loads=[Load(2, 100.0)],
        )
        with pytest.raises(InfeasibleDispatchError):
            solve_opf(problem_for(net))

    @pytest.mark.parametrize('field, value', [
        ('gen_available_mw', [250.0]),
        ('gen_available_mw', [-1.0]),
        ('load_mw', [-5.0]),
        ('load_mw', [1.0, 2.0]),
        ('gen_cost_gbp_mwh', [np.nan]),
    ])
    def test_problem_checked(self, lossless_pair, field, value):
        kwargs = dict(gen_available_mw=[200.0], gen_cost_gbp_mwh=[50.0], load_mw=[100.0])
        kwargs[field] = value
        with pytest.raises(ValueError):
            DispatchProblem(network=lossless_pair, **kwargs)

    def test_settings_from_config(self):
        config = {'opf': {'max_iterations': 7, 'voltage_support': False},
                  'network': {'generator_power_factor': 0.98},
                  'power_flow': {'tolerance_pu': 1e-9}, 'lp': {'degenerate_limit': 10}}
        settings = OpfSettings.from_config(config)
        assert settings.max_iterations == 7
        assert settings.voltage_support is False
        assert settings.generator_power_factor == 0.98
        assert settings.power_flow.tolerance_pu == 1e-9
        assert settings.lp.degenerate_limit == 10
        assert settings.dispatch_tol_mw == 0.01

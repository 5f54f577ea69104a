"""Shared fixtures: small hand-checkable networks and a slow-test switch."""

import pytest

from dlmp.services.netmodel import Branch, Bus, Generator, Load, Network
from tests.builders import grid_unit, two_bus


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the fixture-scale acceptance tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: fixture-scale runs, enabled with --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def lossless_pair():
    return two_bus(r=0.0, load_mw=100.0, limit=200.0)


@pytest.fixture
def congested_pair():
    """Cheap unit at A, dear unit at B, A-B limited to 80 MW."""
    return Network(
        buses=[Bus(1, 'A', 33, 'slack'), Bus(2, 'B', 33, 'generator')],
        branches=[Branch(1, 2, r=0.0, x=0.1, forward_limit_mw=80.0, reverse_limit_mw=80.0)],
        generators=[Generator(1, 0.0, 200.0, 50.0, 'ccgt'),
                    Generator(2, 0.0, 200.0, 150.0, 'ocgt')],
        loads=[Load(2, 100.0)],
        name='congested-pair',
    )


@pytest.fixture
def export_constrained():
    """PV behind a 132/33 transformer whose reverse limit is 40 MW."""
    return Network(
        buses=[Bus(1, 'GSP', 132, 'slack'), Bus(2, 'PRIMARY', 33, 'generator')],
        branches=[Branch(1, 2, r=0.0, x=0.05, forward_limit_mw=100.0, reverse_limit_mw=40.0,
                         is_transformer=True)],
        generators=[grid_unit(1), Generator(2, 0.0, 60.0, 0.0, 'pv', profile_driven=True)],
        loads=[Load(2, 10.0)],
        name='export-constrained',
    )


@pytest.fixture
def radial_feeder():
    """Slack plus a three-segment radial feeder with a load on every bus."""
    buses = [Bus(1, 'SRC', 33, 'slack')] + [Bus(k, f'F{k}', 11) for k in (2, 3, 4)]
    branches = [Branch(1, 2, r=0.02, x=0.06), Branch(2, 3, r=0.02, x=0.06), Branch(3, 4, r=0.02, x=0.06)]
    return Network(
        buses=buses,
        branches=branches,
        generators=[Generator(1, 0.0, 500.0, 40.0, 'ccgt')],
        loads=[Load(k, 10.0) for k in (2, 3, 4)],
        name='radial',
    )


@pytest.fixture
def triangle():
    """Three buses, equal r << x lines; the DC transfer pattern is +-1/3, +-2/3."""
    return Network(
        buses=[Bus(1, 'A', 132, 'slack'), Bus(2, 'B', 132), Bus(3, 'C', 132)],
        branches=[Branch(1, 2, r=0.0005, x=0.1), Branch(2, 3, r=0.0005, x=0.1),
                  Branch(1, 3, r=0.0005, x=0.1)],
        generators=[Generator(1, 0.0, 500.0, 40.0, 'ccgt')],
        loads=[Load(2, 30.0, 1.0), Load(3, 20.0, 1.0)],
        name='triangle',
    )

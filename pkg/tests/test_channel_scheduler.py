import numpy as np
import pytest

from samro.sim import ScenarioConfig
from samro.sim.channel import compute_sinr, pathloss
from samro.sim.scheduler import allocate_resources


@pytest.fixture
def cfg():
    return ScenarioConfig()


def test_pathloss_at_reference_distance_is_pl0(cfg):
    assert pathloss((0.0, 0.0), (cfg.d0, 0.0), cfg) == pytest.approx(cfg.pl0)


def test_pathloss_one_decade_adds_ten_n(cfg):
    pl = pathloss((0.0, 0.0), (10 * cfg.d0, 0.0), cfg)
    assert pl == pytest.approx(cfg.pl0 + 35.0)


def test_pathloss_clamps_short_distances(cfg):
    assert pathloss((0, 0), (0.5, 0), cfg) == pathloss((0, 0), (1.0, 0), cfg)


def test_sinr_single_cell_no_interference():
    assert compute_sinr([[-90.0]], [0], [1.0], -100.0)[0] == pytest.approx(10.0)


def test_sinr_idle_neighbours_do_not_interfere():
    rsrp = np.array([[-90.0, -80.0, -85.0]])
    sinr = compute_sinr(rsrp, [0], [1.0, 0.0, 0.0], -100.0)[0]
    assert sinr == pytest.approx(10.0)


def test_sinr_zero_db_when_signal_equals_interference_plus_noise():
    # one interferer at -90 dBm fully active, noise far below
    sinr = compute_sinr([[-90.0, -90.0]], [0], [1.0, 1.0], -200.0)[0]
    assert sinr == pytest.approx(0.0, abs=1e-9)


def test_sinr_detached_user_is_nan():
    assert np.isnan(compute_sinr([[-90.0, -95.0]], [-1], [1, 1], -100.0)[0])


def test_scheduler_empty_cell(cfg):
    alloc = allocate_resources(np.zeros(0, int), np.zeros(0, bool), np.zeros(0), np.zeros(0),
                               np.zeros(0, int), 9, 2, cfg)
    assert not alloc.load.any() and alloc.rate.size == 0


def test_scheduler_single_user_gets_its_demand(cfg):
    alloc = allocate_resources(np.array([0]), np.array([True]), np.array([30.0]),
                               np.array([5.0]), np.array([0]), 9, 2, cfg)
    assert alloc.rate[0] == pytest.approx(5.0)
    rho = alloc.utilization[0]
    expected = cfg.packet_size / 5.0 + cfg.queue_delay * rho / (1 - rho + cfg.eps_rho)
    assert alloc.latency[0] == pytest.approx(expected)


def test_scheduler_identical_users_share_equally(cfg):
    alloc = allocate_resources(np.array([2, 2]), np.array([True, True]), np.array([0.0, 0.0]),
                               np.array([100.0, 100.0]), np.array([0, 1]), 9, 2, cfg)
    assert alloc.rate[0] == alloc.rate[1] < 100.0
    assert alloc.load[2].sum() == pytest.approx(1.0)

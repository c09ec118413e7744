import numpy as np
import pytest

from isac_uav.music import PreprocessConfig, preprocess_bs
from isac_uav.scene import ArrayGeometry, radial_params, table1_scenario
from isac_uav.waveform import WaveformConfig, steering_vector, synthesize_channel


@pytest.fixture(scope="session")
def scenario():
    return table1_scenario()


@pytest.fixture(scope="session")
def wcfg():
    return WaveformConfig()


@pytest.fixture(scope="session")
def desk_wcfg():
    return WaveformConfig(64, 64)


@pytest.fixture(scope="session")
def geom(wcfg):
    return ArrayGeometry.for_carrier(wcfg.carrier_hz)


@pytest.fixture(scope="session")
def truths(scenario):
    return {s.id: radial_params(s, scenario.uav) for s in scenario.sites}


@pytest.fixture(scope="session")
def noiseless_estimates(scenario, wcfg, geom, truths):
    """Full-size, noise-free per-BS estimates for the reference scenario."""
    cfg = PreprocessConfig()
    out = []
    for s in scenario.sites:
        rp = truths[s.id]
        ch = synthesize_channel(rp, wcfg)
        steer = steering_vector(rp.azimuth, rp.elevation, geom)
        out.append(preprocess_bs(ch, geom, wcfg, cfg, steering=steer, bs_id=s.id))
    return out

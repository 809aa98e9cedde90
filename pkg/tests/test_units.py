import numpy as np

from celldim.units import (THERMAL_NOISE_DBM_PER_HZ, db_to_linear, dbm_to_watts,
                           linear_to_db, watts_to_dbm)


def test_db_round_trip():
    values = np.array([1e-12, 0.5, 1.0, 250.0])
    assert np.allclose(db_to_linear(linear_to_db(values)), values, rtol=1e-12)


def test_dbm_watts_round_trip():
    assert dbm_to_watts(30.0) == 1.0
    assert dbm_to_watts(60.0) == 1000.0
    assert abs(watts_to_dbm(dbm_to_watts(-93.2)) - (-93.2)) < 1e-12


def test_thermal_noise_floor():
    assert THERMAL_NOISE_DBM_PER_HZ == -174.0


def test_array_transparency():
    out = dbm_to_watts(np.array([0.0, 30.0]))
    assert out.shape == (2,)
    assert np.allclose(out, [1e-3, 1.0])

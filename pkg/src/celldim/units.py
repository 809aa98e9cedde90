"""dB / dBm / linear conversions.

Internal arithmetic everywhere else is linear (watts, power ratios);
decibel values appear only in configuration and reports.
"""

import numpy as np

# thermal noise density at 290 K
THERMAL_NOISE_DBM_PER_HZ = -174.0


def db_to_linear(value_db):
    """Power ratio for a dB value. Works on scalars and arrays."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(ratio):
    """dB value of a positive power ratio."""
    return 10.0 * np.log10(ratio)


def dbm_to_watts(power_dbm):
    """Transmit/received power in watts from dBm."""
    return 10.0 ** ((power_dbm - 30.0) / 10.0)


def watts_to_dbm(power_w):
    """dBm from watts."""
    return 10.0 * np.log10(power_w) + 30.0

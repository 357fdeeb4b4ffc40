"""PHOTON optical key-motion sensing: simulator, codec and host pipeline."""

from ._photon import (
    CalibrationEntry,
    Decoder,
    PhotonError,
    SensorModel,
    calibrate_sensor,
    crc16,
    default_session_json,
    detect_pluck_features,
    distinguishable_levels,
    encode_enumerate,
    encode_poll,
    expected_counts,
    parse_smf,
    simulate,
    simulate_keystroke,
    velocity_from_time,
)

__all__ = [
    "CalibrationEntry",
    "Decoder",
    "PhotonError",
    "SensorModel",
    "calibrate_sensor",
    "crc16",
    "default_session_json",
    "detect_pluck_features",
    "distinguishable_levels",
    "encode_enumerate",
    "encode_poll",
    "expected_counts",
    "parse_smf",
    "simulate",
    "simulate_keystroke",
    "velocity_from_time",
]

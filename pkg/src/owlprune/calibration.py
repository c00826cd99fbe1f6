"""Calibration data: synthetic driving scenes versus unstructured generic data.

Scene vectors use the layout below (absent slots are zero-filled)::

    ego_speed, ego_heading,
    (distance, bearing, speed) x N_CAR car slots,
    (distance, bearing) x N_PED pedestrian slots,
    light_red, light_green, light_none, light_distance
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, PreconditionError
from .graph import ActivationTrace, ModelGraph, forward
from .tensor import _frozen

N_CAR = 4
N_PED = 2
SCENE_WIDTH = 2 + 3 * N_CAR + 2 * N_PED + 4
SAMPLE_COUNTS = (32, 64, 128, 256, 512)

# column offsets into a scene vector
CAR_OFFSET = 2
PED_OFFSET = CAR_OFFSET + 3 * N_CAR
LIGHT_OFFSET = PED_OFFSET + 2 * N_PED

LIGHT_STATES = ("red", "green", "none")
LIGHT_PROBS = (0.4, 0.3, 0.3)


class Regime(enum.IntEnum):
    SCENARIO = 0
    GENERIC = 1


# independent RNG streams per purpose so eval scenes never collide with calibration draws
_STREAM_SCENARIO = 1
_STREAM_GENERIC = 2
_STREAM_EVAL = 3


def _rng(seed, stream):
    if seed < 0:
        raise PreconditionError("seed must be non-negative")
    return np.random.default_rng([int(seed), stream])


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    samples: np.ndarray
    regime: Regime
    seed: int

    def __post_init__(self):
        samples = _frozen(self.samples, np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise PreconditionError("calibration samples must be a non-empty 2-D array")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "regime", Regime(self.regime))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    def __eq__(self, other):
        if not isinstance(other, CalibrationSet):
            return NotImplemented
        return (
            self.regime is other.regime
            and self.seed == other.seed
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class SceneTargets:
    car_count: np.ndarray
    ped_count: np.ndarray
    light_state: np.ndarray
    steering: np.ndarray

    def as_matrix(self):
        """Regression targets laid out like the model's output heads."""
        onehot = np.eye(len(LIGHT_STATES))[self.light_state]
        return np.column_stack([self.car_count, self.ped_count, onehot, self.steering])


def simulate_scenes(n, rng):
    """Draw ``n`` scene vectors and their ground-truth targets."""
    X = np.zeros((n, SCENE_WIDTH))

    light = rng.choice(len(LIGHT_STATES), size=n, p=LIGHT_PROBS)
    light_dist = np.where(light < 2, rng.uniform(5.0, 60.0, size=n), 0.0)
    cruise = rng.uniform(5.0, 15.0, size=n)
    # drivers slow down as they approach a red light
    slowdown = np.where(light == 0, np.clip(light_dist / 40.0, 0.1, 1.0), 1.0)
    speed = np.clip(cruise * slowdown + rng.normal(0.0, 0.5, size=n), 0.0, None)
    heading = rng.normal(0.0, 0.2, size=n)
    X[:, 0] = speed
    X[:, 1] = heading

    n_cars = rng.integers(0, N_CAR + 1, size=n)
    n_peds = rng.choice(N_PED + 1, size=n, p=(0.5, 0.3, 0.2))
    steer = -0.5 * heading

    car_dist = rng.uniform(2.0, 50.0, size=(n, N_CAR))
    car_bearing = rng.uniform(-np.pi, np.pi, size=(n, N_CAR))
    car_speed = rng.uniform(0.0, 15.0, size=(n, N_CAR))
    for k in range(N_CAR):
        present = n_cars > k
        col = CAR_OFFSET + 3 * k
        X[present, col] = car_dist[present, k]
        X[present, col + 1] = car_bearing[present, k]
        X[present, col + 2] = car_speed[present, k]
        ahead = present & (np.abs(car_bearing[:, k]) < np.pi / 2)
        steer -= np.where(ahead, 0.3 * np.sign(car_bearing[:, k]) * np.exp(-car_dist[:, k] / 10.0), 0.0)

    ped_dist = rng.uniform(1.0, 30.0, size=(n, N_PED))
    ped_bearing = rng.uniform(-np.pi / 2, np.pi / 2, size=(n, N_PED))
    for k in range(N_PED):
        present = n_peds > k
        col = PED_OFFSET + 2 * k
        X[present, col] = ped_dist[present, k]
        X[present, col + 1] = ped_bearing[present, k]
        steer -= np.where(present, 0.2 * np.sign(ped_bearing[:, k]) * np.exp(-ped_dist[:, k] / 5.0), 0.0)

    X[np.arange(n), LIGHT_OFFSET + light] = 1.0
    X[:, LIGHT_OFFSET + 3] = light_dist

    targets = SceneTargets(
        car_count=n_cars.astype(np.float64),
        ped_count=n_peds.astype(np.float64),
        light_state=light,
        steering=steer,
    )
    return X, targets


def generate_scenarios(n, seed=0) -> CalibrationSet:
    """``n`` synthetic driving scenes, deterministic in ``seed``."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    X, _ = simulate_scenes(n, _rng(seed, _STREAM_SCENARIO))
    return CalibrationSet(X, Regime.SCENARIO, seed)


def generate_generic(n, seed=0, width=SCENE_WIDTH) -> CalibrationSet:
    """``n`` i.i.d. standard-normal vectors, the stand-in for generic text data."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    X = _rng(seed, _STREAM_GENERIC).standard_normal((n, width))
    return CalibrationSet(X, Regime.GENERIC, seed)


def generate(regime, n, seed=0) -> CalibrationSet:
    regime = Regime[regime] if isinstance(regime, str) else Regime(regime)
    if regime is Regime.SCENARIO:
        return generate_scenarios(n, seed)
    return generate_generic(n, seed)


def evaluation_scenes(n, seed=0):
    """Held-out scenes with targets, drawn from a stream no calibration set uses."""
    return simulate_scenes(n, _rng(seed, _STREAM_EVAL))


def collect_norms(g: ModelGraph, c: CalibrationSet, batch_size=None) -> ActivationTrace:
    """Per-layer input norms of ``g`` over the calibration samples."""
    _, trace = forward(g, c.samples, batch_size=batch_size)
    return trace


# --- LODC blob: magic | u8 regime | u64 seed | u32 n | u32 width | f64 payload

CALIB_MAGIC = b"LODC"
_CALIB_HEADER = struct.Struct("<4sBQII")


def dumps_calibration(c: CalibrationSet) -> bytes:
    header = _CALIB_HEADER.pack(CALIB_MAGIC, int(c.regime), c.seed, c.n_samples, c.width)
    return header + c.samples.astype("<f8").tobytes()


def loads_calibration(data: bytes) -> CalibrationSet:
    if len(data) < _CALIB_HEADER.size:
        raise FormatError("truncated calibration header", offset=len(data))
    magic, regime, seed, n, width = _CALIB_HEADER.unpack_from(data)
    if magic != CALIB_MAGIC:
        raise FormatError("bad magic, not a LODC blob", offset=0)
    if regime not in Regime._value2member_map_:
        raise FormatError(f"unknown regime code {regime}", offset=4)
    expected = _CALIB_HEADER.size + 8 * n * width
    if len(data) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(data)}",
            offset=min(len(data), expected),
        )
    if n == 0 or width == 0:
        raise FormatError("empty calibration set", offset=13)
    samples = np.frombuffer(data, dtype="<f8", offset=_CALIB_HEADER.size).reshape(n, width)
    if not np.all(np.isfinite(samples)):
        raise FormatError("calibration payload contains non-finite values", offset=_CALIB_HEADER.size)
    return CalibrationSet(samples.astype(np.float64), Regime(regime), seed)


def save_calibration(c: CalibrationSet, path):
    with open(os.fspath(path), "wb") as fh:
        fh.write(dumps_calibration(c))


def load_calibration(path) -> CalibrationSet:
    with open(path, "rb") as fh:
        return loads_calibration(fh.read())

"""Built-in parameter presets for the two bundled benchmark studies, kept as
plain data so the repro command needs no external inputs.

Preset "one": angular positioning rig with a load-dependent damping term
that sweeps a polytope between two vertex models; data are collected per
vertex and one robust gain must cover the whole polytope.

Preset "two": flexible one-link arm whose joint flexibility enters as a
measured sector-bounded nonlinearity on the third state.
"""

from __future__ import annotations

import numpy as np

from .plants import LurePlant, PolytopicPlant, get_nonlinearity

PRESET_VERSION = 1

ANGULAR_A1 = np.array([[1.0, 0.1], [0.0, 0.99]])
ANGULAR_A2 = np.array([[1.0, 0.1], [0.0, 0.0]])
ANGULAR_B = np.array([[0.0], [0.787]])
ANGULAR_MIX = (0.85, 0.15)
ANGULAR_REFERENCE_GAIN = np.array([[-0.6489, -0.3809]])

ARM_A = np.array([
    [1.0, 0.02, 0.0, 0.0],
    [-0.972, 0.975, 0.972, 0.0],
    [0.0, 0.0, 1.0, 0.02],
    [0.39, 0.0, -0.334, 1.0],
])
ARM_B = np.array([[0.0], [0.432], [0.0], [0.0]])
ARM_E = np.array([[0.0], [0.0], [0.0], [-0.0666]])
ARM_H = np.array([[0.0, 0.0, 1.0, 0.0]])
ARM_BETA = np.array([[2.0]])
ARM_REFERENCE_GAIN = np.array([[-1.0342, -0.1949, -0.4329, -0.2236]])


def preset_one() -> dict:
    return {
        "version": PRESET_VERSION,
        "name": "one",
        "mode": "polytopic",
        "plant": PolytopicPlant([(ANGULAR_A1, ANGULAR_B), (ANGULAR_A2, ANGULAR_B)], ANGULAR_MIX),
        "T": 10,
        "seeds": (1, 2),
        "experiment_x0": np.zeros(2),
        "input_amplitude": 1.0,
        "Q": np.eye(2),
        "R": np.array([[0.01]]),
        "input_box": 1.0,
        "state_boxes": {},
        "x0": np.array([0.95, 0.0]),
        "sim_steps": 2000,
        "reference_gain": ANGULAR_REFERENCE_GAIN,
    }


def preset_two() -> dict:
    return {
        "version": PRESET_VERSION,
        "name": "two",
        "mode": "lure",
        "plant": LurePlant(ARM_A, ARM_B, ARM_E, ARM_H, get_nonlinearity("sin_plus_id"), ARM_BETA),
        "T": 50,
        "seeds": (1,),
        # excite from the operating initial state so the nonlinearity channel
        # carries real energy in the record
        "experiment_x0": np.array([1.1, 0.2, 0.0, 0.0]),
        "input_amplitude": 2.0,
        "Q": 0.1 * np.diag([1.0, 0.1, 1.0, 0.1]),
        "R": np.array([[0.1]]),
        "input_box": 2.0,
        "state_boxes": {0: (-np.pi / 2, np.pi / 2), 2: (-np.pi / 2, np.pi / 2)},
        "x0": np.array([1.1, 0.2, 0.0, 0.0]),
        "sim_steps": 1000,
        "reference_gain": ARM_REFERENCE_GAIN,
    }


def get_preset(name: str) -> dict:
    if name == "one":
        return preset_one()
    if name == "two":
        return preset_two()
    raise ValueError(f"unknown preset {name!r} (choose one|two)")

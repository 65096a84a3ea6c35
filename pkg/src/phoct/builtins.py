"""Mass-spring-damper example systems with their default transfer problem."""

import numpy as np

from .core import PHSystem

J_MSD = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
R_DIFF = np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
R_SUM = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
B_FORCE = np.array([[1.0], [0.0], [0.0]])

X0_DEFAULT = np.array([1.0, 1.0, 1.0])
XT_DEFAULT = np.array([-1.2, -0.7, -1.0])

# Input bounds wide enough that the default transfer is reachable on every
# horizon used by the examples (see the notes in the README).
BOX = {"msd-r1": 2.0, "msd-r2": 10.0, "msd-lossless": 2.0}
_R = {"msd-r1": R_DIFF, "msd-r2": R_SUM, "msd-lossless": np.zeros((3, 3))}

NAMES = tuple(BOX)


def builtin_system(name, box=None):
    """Return ``(system, defaults)`` for a builtin example.

    ``defaults`` holds the default ``x0`` and ``x_target``. ``box`` overrides
    the symmetric input bound.
    """
    if name not in BOX:
        raise KeyError(f"unknown builtin {name!r}; choose from {', '.join(NAMES)}")
    b = BOX[name] if box is None else float(box)
    sys = PHSystem(J_MSD, _R[name], np.eye(3), B_FORCE, [-b], [b])
    return sys, {"x0": X0_DEFAULT.copy(), "x_target": XT_DEFAULT.copy()}

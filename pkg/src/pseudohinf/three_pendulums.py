"""Three pendulums on a ring coupled by torsional springs.

States ``x = (theta1, theta1', theta2, theta2', theta3, theta3')``; each
pendulum is driven through ``sin(theta_i)`` and a control torque, and only
angular differences and one angular velocity are measured, so the common
rotation of all three pendulums is an unobservable zero mode.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

from .pendulum import NonlinearityBank, ScaledSine
from .synthesis import SynthesisParams
from .systems import Plant

__all__ = ["DEFAULTS", "FIG_X0", "three_pendulum_plant", "three_pendulum_bank", "reference_params",
           "model_document"]

DEFAULTS = {
    "alpha": ("1/10", "1/20", "2/25"),
    "k": ("1/50", "3/100", "1/20"),
    "beta": "1/5",
    "gamma": "1/2",
    "eps1": "1/10",
    "eps2": "1/10",
}

FIG_X0 = (-math.pi / 4, 4.0, -math.pi / 2, -3.0, math.pi / 3, -5.0)


def _matrices(alpha, k, beta, gamma, eps1, eps2, as_printed: bool):
    a1, a2, a3 = (Fraction(v) for v in alpha)
    k1, k2, k3 = (Fraction(v) for v in k)
    beta, gamma, eps1, eps2 = (Fraction(v) for v in (beta, gamma, eps1, eps2))
    # spring torque on pendulum 2 from pendulum 3 is -k2 (theta2 - theta3) up to the
    # sign convention of the other rows; +k2 breaks the common-rotation zero mode
    a45 = k2 if as_printed else -k2
    A = [
        [0, 1, 0, 0, 0, 0],
        [k1 + k3, -a1, -k1, 0, -k3, 0],
        [0, 0, 0, 1, 0, 0],
        [-k1, 0, k1 + k2, -a2, a45, 0],
        [0, 0, 0, 0, 0, 1],
        [-k3, 0, -k2, 0, k2 + k3, -a3],
    ]
    Bu = [[0, 0, 0], [1, 0, 0], [0, 0, 0], [0, 1, 0], [0, 0, 0], [0, 0, 1]]
    C1 = [[1, 0, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0], [0, 0, 0, 0, 1, 0]]
    C2 = [[1, 0, -1, 0, 0, 0], [0, 0, 1, 0, -1, 0], [0, 0, 0, 0, 0, -1]]
    eye = [[int(i == j) for j in range(3)] for i in range(3)]
    scale = lambda s, M: [[s * Fraction(v) for v in row] for row in M]
    return {
        "A": [[Fraction(v) for v in row] for row in A],
        "B1": scale(beta, Bu),
        "B2": scale(1, Bu),
        "C1": scale(1, C1),
        "C2": scale(gamma, C2),
        "D12": scale(eps1, eye),
        "D21": scale(eps2, eye),
    }


def three_pendulum_plant(alpha=DEFAULTS["alpha"], k=DEFAULTS["k"], beta=DEFAULTS["beta"],
                         gamma=DEFAULTS["gamma"], eps1=DEFAULTS["eps1"], eps2=DEFAULTS["eps2"],
                         as_printed: bool = False) -> Plant:
    """Plant with exact rational data.

    ``as_printed=True`` keeps ``+k2`` in row 4, column 5 of ``A``; that matrix
    has no zero eigenvalue shared with ``C2`` and fails the unobservable-mode
    assumption. The default uses ``-k2``, which makes the rows of ``A`` sum
    to zero over the angle columns as the spring coupling requires.
    """
    return Plant.from_rational(**_matrices(alpha, k, beta, gamma, eps1, eps2, as_printed))


def three_pendulum_bank() -> NonlinearityBank:
    return NonlinearityBank(tuple(ScaledSine(1.0, 2 * math.pi, 1.0) for _ in range(3)))


def reference_params() -> SynthesisParams:
    return SynthesisParams(lam=0.5, tau=(0.4, 0.6, 0.5), tau0=2 * math.pi, mu=(1.0, 1.0, 1.0))


def model_document() -> dict:
    """Model-file JSON document (exact rationals as ``"p/q"`` strings)."""
    mats = _matrices(**{k: DEFAULTS[k] for k in DEFAULTS}, as_printed=False)
    fmt = lambda v: str(v) if v.denominator != 1 else v.numerator
    doc = {"matrices": {k: [[fmt(v) for v in row] for row in M] for k, M in mats.items()}}
    doc["nonlinearities"] = three_pendulum_bank().to_dicts()
    doc["synthesis"] = {"theorem": 6, "lambda": 0.5, "tau": [0.4, 0.6, 0.5], "tau0": 2 * math.pi}
    doc["simulation"] = {"x0": list(FIG_X0), "t_final": 200.0, "dt": 1e-3}
    return doc


if __name__ == "__main__":  # pragma: no cover
    print(json.dumps(model_document(), indent=2))

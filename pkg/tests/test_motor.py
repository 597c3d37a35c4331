import math

import numpy as np
import pytest

from wirelesscbc.motor import PAPER_F, PAPER_P, MotorParams, build_motor


def test_paper_discretization_formula():
    R, w, Ld, Lq, Ts = 0.025, 6283.2, 1e-4, 1.2e-4, 1e-4
    ed, eq = math.exp(-R / Ld * Ts), math.exp(-R / Lq * Ts)
    A = [[Ld / R * ed, Lq * w / R * (1 - ed)], [-Ld * w / R * (1 - eq), Lq / R * eq]]
    B = [[(1 - ed) / R, Lq / R * (1 - ed)], [Ld / R * (1 - eq), (1 - eq) / R]]
    system = build_motor()
    np.testing.assert_allclose(system.A, A, rtol=1e-15)
    np.testing.assert_allclose(system.B, B, rtol=1e-15)
    np.testing.assert_allclose(system.sigma_w1, 0.005 ** 2 * np.eye(2))


def test_zoh_matches_taylor_series():
    p = MotorParams(Ts=1e-6)
    Ac = np.array([[-p.R / p.Ld, p.omega_el * p.Lq / p.Ld],
                   [-p.omega_el * p.Ld / p.Lq, -p.R / p.Lq]])
    Bc = np.diag([1 / p.Ld, 1 / p.Lq])
    A, G, term = np.eye(2), np.eye(2) * p.Ts, np.eye(2)
    for k in range(1, 25):
        term = term @ Ac * p.Ts / k
        A = A + term
        G = G + term * p.Ts / (k + 1)
    system = build_motor(p, discretization="zoh")
    np.testing.assert_allclose(system.A, A, rtol=1e-12)
    np.testing.assert_allclose(system.B, G @ Bc, rtol=1e-12)


def test_paper_constants():
    assert PAPER_P.shape == (8, 8)
    np.testing.assert_array_equal(PAPER_P, PAPER_P.T)
    np.testing.assert_array_equal(PAPER_F, [[-0.68, -0.70], [0.79, -0.60]])


@pytest.mark.parametrize("field", ["R", "omega_el", "Ld", "Lq", "Ts"])
def test_params_must_be_positive(field):
    with pytest.raises(ValueError):
        MotorParams(**{field: 0.0})


def test_bad_discretization():
    with pytest.raises(ValueError):
        build_motor(discretization="tustin")

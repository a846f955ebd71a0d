import math

import numpy as np

from reentrant_flow.oracle import rk_oracle
from reentrant_flow.plant import builtin_profile_paper, builtin_speed_hyperbolic, constant_profile

SP = builtin_speed_hyperbolic()


def test_equilibrium():
    r = rk_oracle(constant_profile(1.0), SP, [(0.0, 0.5)], 5.0, h=1e-2)
    assert np.max(np.abs(r.W - 1.0)) < 1e-10


def test_fourth_order_richardson():
    p = builtin_profile_paper(0)
    segs = [(0.0, 1 / (7 + 2 / math.pi))]
    run = lambda h: rk_oracle(p, SP, segs, 3.0, h=h, out_step=0.1).W
    w1, w2, w3 = run(0.1), run(0.05), run(0.025)
    ratio = np.max(np.abs(w1 - w2)) / np.max(np.abs(w2 - w3))
    assert 12 < ratio < 20


def test_switched_input_converges():
    p = builtin_profile_paper(0)
    segs = [(0.0, 0.130948), (2.3, 0.2), (5.01, 0.5), (9.7, 0.3)]
    run = lambda h: rk_oracle(p, SP, segs, 12.0, h=h, out_step=0.01).W
    d1 = np.max(np.abs(run(1e-2) - run(5e-3)))
    assert d1 < 1e-8

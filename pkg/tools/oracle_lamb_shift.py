"""Independent principal-value oracle for the Lamb-shift integral.

Computes  PV ∫_0^W G(w') / (omega - w') dw'  using scipy's Cauchy-weight
quadrature (which evaluates PV ∫ f(x)/(x - c) dx, hence the sign flip),
with the smooth tail handled by plain adaptive quadrature.  Values printed
here are frozen into tests/test_baths.py; the library itself uses pole
subtraction, a different algorithm.

Run:  python3 tools/oracle_lamb_shift.py
"""

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq


def pv_cauchy(f, a, b, pole):
    val, _ = quad(f, a, b, weight="cauchy", wvar=pole, limit=400)
    return -val  # our kernel is 1/(omega - w') = -1/(w' - omega)


def lamb_ohmic(omega, amp=1.0, cutoff=10.0, w_max=500.0):
    f = lambda w: amp * w * np.exp(-w / cutoff)
    if 0.0 < omega < w_max:
        # cauchy weight needs the pole strictly inside; pad panels around it
        lo, hi = 0.0, min(2.0 * omega, w_max)
        out = pv_cauchy(f, lo, hi, omega)
        out += -quad(lambda w: f(w) / (w - omega), hi, w_max, limit=400)[0]
    else:
        out = quad(lambda w: f(w) / (omega - w), 0.0, w_max, limit=400)[0]
    return out


def lamb_triangle(omega):
    # tabulated triangle: nodes (1,2,3) -> (0,1,0), linear in between
    def f(w):
        return np.interp(w, [1.0, 2.0, 3.0], [0.0, 1.0, 0.0], left=0.0, right=0.0)
    if 1.0 < omega < 2.0:
        return pv_cauchy(f, 1.0, 2.0, omega) - quad(lambda w: f(w) / (w - omega), 2.0, 3.0)[0]
    if 2.0 < omega < 3.0:
        return -quad(lambda w: f(w) / (w - omega), 1.0, 2.0)[0] + pv_cauchy(f, 2.0, 3.0, omega)
    return quad(lambda w: f(w) / (omega - w), 1.0, 2.0)[0] + quad(lambda w: f(w) / (omega - w), 2.0, 3.0)[0]


def main():
    for w in (2.0, 5.0, 15.0):
        print(f"lamb ohmic(1,10) at omega={w:<4}: {lamb_ohmic(w):.15g}")
    for w in (1.5, 2.0 + 1e-13, 2.5, 4.0):
        print(f"lamb triangle     at omega={w:<7}: {lamb_triangle(w):.15g}")

    # self-consistent filter resonance omega = omega_f + lamb(omega) for a
    # weak ohmic base (amplitude 0.02), omega_f = 5: solved with an
    # independent bracketing method; the shift is negative below the ohmic
    # peak so the root lies below omega_f
    res = brentq(lambda w: w - 5.0 - lamb_ohmic(w, amp=0.02), 3.0, 6.0, xtol=1e-13)
    print(f"filter resonance (ohmic 0.02 base, omega_f=5): {res:.15g}")
    print(f"  lamb at resonance: {lamb_ohmic(res, amp=0.02):.15g}")


if __name__ == "__main__":
    main()

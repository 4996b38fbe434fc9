#!/usr/bin/env python3
"""Reference values for the Bessel test suite, computed with mpmath at 40 digits.

Writes crates/core/tests/data/bessel_j.txt (nu, x, J_nu(x), J'_nu(x)) and
crates/core/tests/data/bessel_zeros.txt (m, n, j_{m,n}).
"""
import os
import mpmath as mp

mp.mp.dps = 40
here = os.path.dirname(os.path.abspath(__file__))
out = os.path.join(here, "..", "crates", "core", "tests", "data")

orders = [mp.mpf(0), mp.mpf(1) / 3, -mp.mpf(1) / 3, mp.mpf(2) / 3, mp.mpf(1), mp.mpf(4) / 3,
          mp.mpf(2), mp.mpf(8) / 3, mp.mpf(10) / 3, mp.mpf(5), mp.mpf(20) / 3, mp.mpf(25) / 2,
          mp.mpf(40), mp.mpf(100) / 3, mp.mpf(200) / 3, mp.mpf(98)]
args = ["0.001", "0.1", "0.5", "1.9", "2", "2.1", "5", "10", "17.3", "25", "50", "75", "100", "150"]

with open(os.path.join(out, "bessel_j.txt"), "w") as f:
    f.write("# nu x J_nu(x) J_nu'(x)  (mpmath, 40 digits)\n")
    for nu in orders:
        for xs in args:
            x = mp.mpf(xs)
            j = mp.besselj(nu, x)
            jp = mp.besselj(nu, x, derivative=1)
            f.write("%s %s %s %s\n" % (mp.nstr(nu, 25), xs, mp.nstr(j, 25), mp.nstr(jp, 25)))

with open(os.path.join(out, "bessel_zeros.txt"), "w") as f:
    f.write("# m n j_{m,n}  (mpmath besseljzero)\n")
    for m in list(range(0, 13)) + [20, 30, 44]:
        for n in range(1, 9):
            f.write("%d %d %s\n" % (m, n, mp.nstr(mp.besseljzero(m, n), 25)))

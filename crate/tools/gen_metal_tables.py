"""Regenerate the shipped metal optical-constant tables.

Evaluates the Lorentz-Drude parameter sets of Rakic, Djurisic, Elazar and
Majewski, Appl. Opt. 37, 5271 (1998) on a 10 nm grid from 290 to 2010 nm and
writes `wavelength_nm,n,k` CSV files (exp(-i w t) convention, k >= 0).
"""
import cmath
import os
import sys

HC_EV_NM = 1239.8419843320026

# (plasma energy eV, f0, gamma0, [(f_j, gamma_j, omega_j), ...])
PARAMS = {
    "au": (9.03, 0.760, 0.053, [(0.024, 0.241, 0.415), (0.010, 0.345, 0.830),
                                (0.071, 0.870, 2.969), (0.601, 2.494, 4.304),
                                (4.384, 2.214, 13.32)]),
    "ag": (9.01, 0.845, 0.048, [(0.065, 3.886, 0.816), (0.124, 0.452, 4.481),
                                (0.011, 0.065, 8.185), (0.840, 0.916, 9.083),
                                (5.646, 2.419, 20.29)]),
    "cu": (10.83, 0.575, 0.030, [(0.061, 0.378, 0.291), (0.104, 1.056, 2.957),
                                 (0.723, 3.213, 5.300), (0.638, 4.305, 11.18)]),
    "al": (14.98, 0.523, 0.047, [(0.227, 0.333, 0.162), (0.050, 0.312, 1.544),
                                 (0.166, 1.351, 1.808), (0.030, 3.382, 3.473)]),
}


def permittivity(name, wavelength_nm):
    wp, f0, g0, terms = PARAMS[name]
    w = HC_EV_NM / wavelength_nm
    eps = 1 - f0 * wp * wp / (w * (w + 1j * g0))
    for f, g, w0 in terms:
        eps += f * wp * wp / (w0 * w0 - w * w - 1j * w * g)
    return eps


def main(out_dir):
    for name in PARAMS:
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write("wavelength_nm,n,k\n")
            for wl in range(290, 2011, 10):
                n = cmath.sqrt(permittivity(name, wl))
                if n.imag < 0:
                    n = -n
                fh.write(f"{wl},{n.real:.6f},{n.imag:.6f}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/assets/materials")

"""Mutual impedance of two half-wave dipoles as one of them tilts.

Two dipoles a quarter wavelength apart start parallel (both along z). The
second one is tilted toward the line joining them, in steps of 15 degrees.
Coupling is strongest when they are parallel and vanishes at 90 degrees,
where the axes are orthogonal and the field of one has no component
along the other.
"""

import math

import numpy as np

from rcasim import ElementGeometry, WireParameters, assemble_impedance_matrix, self_impedance

wavelength = 299_792_458.0 / 7e9
wp = WireParameters.from_wavelength(wavelength)
z_s = self_impedance(wp)
print(f"wavelength {wavelength * 1e3:.3f} mm, self impedance {z_s.real:.3f} {z_s.imag:+.3f}j ohm\n")

geom = ElementGeometry.on_x_axis(np.array([wavelength / 4]), wp.length, wp.radius)
print("tilt (deg)   Re Z12 (ohm)   Im Z12 (ohm)   |Z12| / |z_s|")
for tilt in range(0, 91, 15):
    t = math.radians(tilt)
    U = np.array([[0.0, math.sin(t), math.cos(t)]])
    Z = assemble_impedance_matrix(U, geom, wp).entries
    z12 = Z[0, 1]
    print(f"{tilt:10d}   {z12.real:12.3f}   {z12.imag:12.3f}   {abs(z12) / abs(z_s):13.3f}")

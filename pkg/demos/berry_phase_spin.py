"""Spin in a rotating field: how the cyclic phase leaves the Berry value as the drive speeds up.

Run: python3 demos/berry_phase_spin.py
"""
import numpy as np

from geophase.spin import RotatingFieldParams, berry_phase, kinematic_gp_closed, kinematic_gp_numeric

theta = np.pi / 3
print(f"polar angle theta = pi/3, Berry value {berry_phase(theta) / np.pi:+.6f} pi\n")
print(" Omega/omega   numeric/pi    closed/pi   shift from Berry/pi")
for ratio in (1e-4, 1e-3, 1e-2, 5e-2, 0.2):
    p = RotatingFieldParams(Omega=ratio, theta=theta)
    num, closed = kinematic_gp_numeric(p), kinematic_gp_closed(p)
    shift = np.angle(np.exp(1j * (closed - berry_phase(theta))))
    print(f"{ratio:11.0e}  {num / np.pi:+11.6f}  {closed / np.pi:+11.6f}  {shift / np.pi:+12.2e}")

# The shift is linear in Omega/omega; its slope is -(3/2) sin^2(theta).
r = np.array([1e-4, 2e-4])
shifts = [np.angle(np.exp(1j * (kinematic_gp_closed(RotatingFieldParams(Omega=x, theta=theta))
                                 - berry_phase(theta)))) for x in r]
print(f"\nslope of the shift: {np.diff(shifts)[0] / np.diff(r)[0] / np.pi:+.4f} pi "
      f"(-(3/2) sin^2 theta = {-1.5 * np.sin(theta) ** 2:+.4f})")

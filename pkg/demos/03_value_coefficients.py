"""Solve the quadratic-value coefficient systems and the Lagrange multiplier.

The value ansatz is V = A (x + w B)^2 + w^2 C + D - (w - z)^2 with per-regime
coefficients solved backward from A(T)=B(T)=1, C(T)=D(T)=0: A in closed
matrix-exponential form, B by Runge-Kutta, C and D as chain-kernel
convolutions. The multiplier w follows from the time-zero coefficients.

Run:  python demos/03_value_coefficients.py
"""

import numpy as np

from regime_q import ActionInterval, lagrange_w, regime_matrix_exp, solve_p1, solve_p2

gen = np.array([[-1.0, 1.0], [1.0, -1.0]])
print("one-step regime transition matrix (dt = 1/25):")
print(regime_matrix_exp(gen, 1 / 25).round(5))

rho = np.array([0.95, -0.25 / 0.3])
sig = np.array([0.2, 0.3])
r = np.array([0.01, 0.05])
tab = solve_p1(rho, sig, r, gen, 0.5, 1.0, 25)
print("\norder-1 coefficients at t = 0 (bull, bear):")
for name in ("A", "B", "C", "D"):
    print(f"  {name}(0) = {getattr(tab, name)[0].round(5)}")
w = lagrange_w(tab.A[0], tab.B[0], tab.C[0], x0=1.0, z=1.4)
print(f"multiplier w = {w.round(4)}  (negative: the terminal target sits above x0)")

gen2 = np.array([[-1.8, 1.8], [2.0, -2.0]])
tab2 = solve_p2(np.array([0.733, -0.428]), np.array([0.15, 0.35]),
                np.array([0.02, 0.025]), gen2, 0.5, 1.0, 25,
                ActionInterval(-5.0, 5.0), w=float(w.mean()))
print("\norder-2 coefficients at t = 0:")
for name in ("A", "B", "C", "D"):
    print(f"  {name}(0) = {getattr(tab2, name)[0].round(5)}")

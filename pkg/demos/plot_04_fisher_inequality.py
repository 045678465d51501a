"""
The Fisher information inequality on a grid
===========================================

For a sum of independent variables, ``1/J_r ≥ 1/J_p1 + 1/J_p2``. The 2-D
variant lets the first coordinate depend on an extra variable that the
noise never touches. Bivariate Gaussians give equality with a closed form,
which makes them a sharp check of the numerics.
"""

from fishersync.dist import Gaussian, Logistic
from fishersync.fisherineq import BivariateGaussianSpec, check_fii_1d, check_fii_2d_dependent

res = check_fii_1d(Logistic(1.0), Gaussian(1.0))
print(f"logistic * gaussian: J_p1={res.j_p1:.8f} J_p2={res.j_p2:.8f} J_r={res.j_r:.8f} slack={res.slack:.5f}")

for rho in (0.0, 0.5, 0.9, -0.9):
    r = check_fii_2d_dependent(BivariateGaussianSpec(1.0, 1.0, rho), Gaussian(1.0))
    print(
        f"rho={rho:+.1f}: J_p1={r.j_p1:.10f} ({r.j_p1_closed:.10f})  "
        f"J_r={r.j_r:.10f} ({r.j_r_closed:.10f})  slack={r.slack:+.1e}"
    )

"""The pointwise plastic update against a brute-force search.

The update minimizes 1/2 Q.M Q + g.Q + s|Q| over deviatoric increments Q.
Below the threshold (|g| <= s) nothing moves; above it the answer
satisfies the flow inclusion to rounding.
"""
import numpy as np

from pdplast.checks import brute_force_prox, prox_objective
from pdplast.solver import inclusion_residual, prox_plastic_point

rng = np.random.default_rng(1)
A = rng.standard_normal((2, 2))
M = A @ A.T + np.eye(2)
g = np.array([0.8, -0.3])

for s in (1.0, 0.5, 0.1):
    Q = prox_plastic_point(M, g, s, np.zeros(2))
    best, _ = brute_force_prox(M, g, s)
    res = inclusion_residual(M[None], Q[None], g[None], s)[0]
    print(f"s={s:4.2f} |g|={np.linalg.norm(g):.3f}  Q={np.round(Q, 6)}  "
          f"objective {prox_objective(M, g, s, Q):+.10f} vs brute {best:+.10f}  "
          f"inclusion residual {res:.1e}")

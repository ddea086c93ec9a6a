"""Extending a convex sampled function: inside the hull, beyond it, and across a hole.

Run with ``python demos/02_convex_extensions.py``.
"""
import numpy as np

from convext.domains import BandDomain, FiniteSampledFunction, build_grid_domain, sample_function
from convext.extend import OuterExtender, band_extension, convex_roof

line = build_grid_domain(lambda X: np.ones(len(X), bool), ([-1.0], [1.0]), 200)
f = sample_function(line, lambda X: X[:, 0] ** 2)

ext = OuterExtender(f)
print("minimal convex extension of x^2 from [-1, 1]; the exact answer is 2|q| - 1")
for q in (1.5, 2.0, -3.0):
    r = ext.evaluate([q])
    print(f"  q = {q:5.1f}: {r.value:.5f}  (secant from y = {r.y[0]:.3f}, z = {r.z[0]:.3f})")

print("\nconvex roof inside the hull, two samples only")
pair = FiniteSampledFunction([[-1.0], [1.0]], [1.0, 1.0])
r = convex_roof(pair, [0.0])
print(f"  roof at 0 = {r.value:.4f}, support {r.certificate.support_indices}")

print("\nfilling the hole of a ring with |x|^2 given on the ring only")
outer = build_grid_domain(lambda X: np.hypot(X[:, 0], X[:, 1]) <= 1, ([-1.2, -1.2], [1.2, 1.2]), 80)
radius = np.hypot(*outer.all_centers().reshape(-1, 2).T).reshape(outer.shape)
band = BandDomain(outer, outer.with_indicator(radius < 0.3))
g = sample_function(band.band, lambda X: np.sum(X ** 2, 1))
res = band_extension(band, g, [[0.0, 0.0], [2.0, 0.0]])
print(f"  stages {res.stage}; value at centre {res.values[0]:.4f}, at (2, 0) {res.values[1]:.4f}")
print(f"  Lipschitz estimate {res.lipschitz_before.constant:.4f} -> "
      f"{res.lipschitz_after.constant:.4f}")

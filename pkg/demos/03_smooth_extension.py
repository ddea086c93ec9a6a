"""A certified smooth strictly convex extension of exp(x) + exp(y) off the unit square.

Run with ``python demos/03_smooth_extension.py``.
"""
import numpy as np

from convext.domains import build_grid_domain
from convext.smooth import outside_smooth_extension, pd_certify


def f(X):
    X = np.atleast_2d(X)
    return np.exp(X[:, 0]) + np.exp(X[:, 1])


square = build_grid_domain(lambda X: np.all((X >= 0) & (X <= 1), 1), ([0, 0], [1, 1]), 50)
ext = outside_smooth_extension(f, square, 0.3, 0.2, ([-3, -3], [3, 3]))

C = square.centers()
print(f"barrier balls: {len(ext.parts['balls'].radii)}, barrier weight c = {ext.constant_c:.4g}")
print(f"equal to f on the square: {np.array_equal(ext(C), f(C))}")
for name, cert in ext.certificates.items():
    print(f"certificate {name}: holds={cert.holds}, min eigenvalue {cert.worst_eigenvalue:.4g}")
check = pd_certify(ext, ext.valid_region)
print(f"independent Hessian check on {ext.valid_region.count} cells: holds={check.holds}")
for x in ([2.0, 2.0], [-2.5, 0.5], [0.5, -2.5]):
    print(f"  h{tuple(x)} = {ext(np.array([x]))[0]:.4f}")

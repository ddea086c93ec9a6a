"""Three sampled functions that separate the convexity notions.

Run with ``python demos/01_classify_counterexamples.py``.
"""
import numpy as np

from convext.classify import (convexity_verdict, line_convexity_verdict,
                              local_convexity_verdict)
from convext.domains import FiniteSampledFunction, named_domain, sample_function


def show(title, verdict):
    print(f"  {title:<34} holds={verdict.holds}")
    w = verdict.witness
    if w is not None:
        print(f"    witness at {np.round(w.target, 3)}: f = {w.lhs:.4f} vs combination {w.rhs:.4f}")


print("x^2 on two horizontal segments plus the origin")
f = sample_function(named_domain("two_segments_plus_origin"), lambda X: X[:, 0] ** 2)
show("convex", convexity_verdict(f))
# the origin is the midpoint of (0, 1) and (0, -1), where x^2 is flat
show("strictly convex", convexity_verdict(f, strict=True))

print("\n(r - 1)^2 on a three-armed star")
g = sample_function(named_domain("tripod"), lambda X: (np.hypot(X[:, 0], X[:, 1]) - 1) ** 2)
origin = int(np.argmin(np.hypot(*g.points.T)))
show("line convex", line_convexity_verdict(g))
show("locally convex at the centre", local_convexity_verdict(g, 1.5, centers=[origin]))

print("\nA step: constant on each side of a gap")
step = FiniteSampledFunction([[-2.0], [-1.0], [1.0], [2.0]], [-1.0, -1.0, 1.0, 1.0])
show("locally convex (radius 1)", local_convexity_verdict(step, 1.0))
show("convex", convexity_verdict(step))

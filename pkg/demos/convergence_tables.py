"""Convergence tables on randomly distorted quadrilateral grids.

Direct serendipity interpolation against the mapped (classical) serendipity
space, and the AC_1 mixed method in its full and reduced forms.
"""

from dsflow.convergence import convergence_study

sizes = (4, 8, 16, 32)
for r in (2, 3, 4):
    print(convergence_study("interpolation", {"r": r}, sizes).format(), "\n")
print(convergence_study("interpolation", {"r": 2, "family": "mapped"}, sizes).format(), "\n")
for variant in ("full", "reduced"):
    print(convergence_study("mixed", {"s": 1, "variant": variant}, sizes).format(), "\n")

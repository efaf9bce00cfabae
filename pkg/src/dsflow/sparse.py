"""Shared sparse-solver settings.

All global matrices here are structurally symmetric, so a minimum-degree
ordering on A^T + A gives far less fill than the column ordering default.
"""

ORDERING = "MMD_AT_PLUS_A"

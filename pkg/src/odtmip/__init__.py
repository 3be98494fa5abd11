"""Optimal decision trees by mixed-integer optimization."""

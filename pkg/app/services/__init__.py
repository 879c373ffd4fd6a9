"""Numerical services: nodes, local RBF systems, operator weights, global solve, benchmarks."""

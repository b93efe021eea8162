"""Desk-scale simulation and benchmarking harness."""

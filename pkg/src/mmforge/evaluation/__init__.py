"""Metrics, evaluation runs, ablation and comparison grids, and reports."""

"""Hypothesis tests, multiple comparisons and power analysis."""

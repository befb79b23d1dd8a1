"""Synthetic cohort generator."""

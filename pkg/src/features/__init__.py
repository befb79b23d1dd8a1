"""Lifestyle feature engineering and selection."""

"""Case-control cohort construction."""

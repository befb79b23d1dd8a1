"""End-to-end pipeline orchestration and report emission."""

"""riskmine: lifestyle risk-factor mining and risk prediction for case-control shopper cohorts."""

__version__ = "0.1.0"

"""Logistic regression and risk-factor discovery."""

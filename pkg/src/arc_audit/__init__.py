"""Adversarial Rademacher complexity: bounds, estimators and audits for small MLPs."""

__version__ = "0.1.0"

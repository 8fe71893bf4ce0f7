"""Explainable multi-class classification of survey waves."""

"""Calibration of multi-class forecasts by isotonic and ROC-monotone recursive partitioning."""

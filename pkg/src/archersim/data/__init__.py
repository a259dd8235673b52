"""Built-in experiment profiles and calibration outputs."""

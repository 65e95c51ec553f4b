"""ARIMA-based anomaly detection and repair for per-node sensor streams."""

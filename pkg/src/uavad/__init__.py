"""UAV video anomaly detection by frequency-decoupled future-frame prediction."""

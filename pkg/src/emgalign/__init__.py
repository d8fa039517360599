"""Cross-subject EMG hand-gesture classification with subspace alignment."""

__version__ = "0.1.0"

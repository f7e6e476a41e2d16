"""Long/short-distance DAG networks and similarity-weighted curriculum learning for
emotion recognition in conversation."""

__version__ = "0.1.0"

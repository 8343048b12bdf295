"""Reference predictive-model server speaking newline-delimited JSON on stdio."""

__version__ = "0.1.0"

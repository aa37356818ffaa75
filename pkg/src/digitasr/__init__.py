"""Small-vocabulary discrete-HMM speech recognizer for spoken Arabic digits."""

__version__ = "0.1.0"

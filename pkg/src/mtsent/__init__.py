"""Multi-task sentiment training with LLM-built auxiliary tasks."""

__version__ = "0.1.0"

"""Sandbox worker: runs corpus code under limits, speaking codeio_exec_v1 on stdio."""

__version__ = "0.1.0"

"""Trace-driven DRAM simulator with fine-grained in-DRAM relocation and caching."""

__version__ = "0.1.0"

"""
Simulator utilities package
Contains helpers for configuration, validation, file I/O, task execution and report formatting
"""

"""
Exception types shared by the library and the command line
"""


class FedSurgError(Exception):
    """Base class for all simulator errors"""


class ValidationError(FedSurgError, ValueError):
    """Invalid input, configuration or file content (exit code 1)"""


class NumericalError(FedSurgError, ArithmeticError):
    """Non-finite values or a degenerate numerical problem (exit code 2)"""

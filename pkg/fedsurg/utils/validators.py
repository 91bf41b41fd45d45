#!/usr/bin/env python3
"""
Validators - input and configuration checks
Each check returns (is_valid, error_message); require() turns a failed check into a ValidationError
"""

import logging
import math
import os
from typing import Iterable, Mapping, Optional, Tuple

from rapidfuzz import fuzz, process

from fedsurg.errors import ValidationError

logger = logging.getLogger(__name__)

SUGGESTION_CUTOFF = 70

CheckResult = Tuple[bool, Optional[str]]


def require(result: CheckResult) -> None:
    """Raise ValidationError when a check failed"""
    is_valid, message = result
    if not is_valid:
        raise ValidationError(message)


def suggest_key(key: str, allowed: Iterable[str]) -> Optional[str]:
    """Closest allowed name for a misspelled key, or None"""
    match = process.extractOne(str(key), list(allowed), scorer=fuzz.ratio, score_cutoff=SUGGESTION_CUTOFF)
    return match[0] if match else None


def check_keys(data: Mapping, allowed: Iterable[str], section: str) -> CheckResult:
    """
    Reject unknown keys in a config section

    Args:
        data: Parsed section
        allowed: Accepted key names
        section: Dotted section name for the message

    Returns:
        (is_valid, error_message)
    """
    if not isinstance(data, Mapping):
        return False, f"{section} must be an object, got {type(data).__name__}"
    allowed = list(allowed)
    for key in data:
        if key not in allowed:
            hint = suggest_key(key, allowed)
            message = f"unknown key '{key}' in {section}"
            if hint:
                message += f" (did you mean '{hint}'?)"
            return False, message
    return True, None


def check_choice(value, choices: Iterable[str], name: str) -> CheckResult:
    choices = list(choices)
    if value in choices:
        return True, None
    hint = suggest_key(value, choices)
    message = f"{name} must be one of {', '.join(choices)}, got '{value}'"
    if hint:
        message += f" (did you mean '{hint}'?)"
    return False, message


def check_positive_int(value, name: str, minimum: int = 1) -> CheckResult:
    if isinstance(value, bool) or not isinstance(value, int):
        return False, f"{name} must be an integer, got {value!r}"
    if value < minimum:
        return False, f"{name} must be >= {minimum}, got {value}"
    return True, None


def check_fraction(value, name: str, allow_zero: bool = True) -> CheckResult:
    try:
        value = float(value)
    except (TypeError, ValueError):
        return False, f"{name} must be a number, got {value!r}"
    if not math.isfinite(value) or value > 1.0 or value < 0.0 or (value == 0.0 and not allow_zero):
        bound = "[0, 1]" if allow_zero else "(0, 1]"
        return False, f"{name} must lie in {bound}, got {value}"
    return True, None


def check_readable_file(path: Optional[str], what: str = "file") -> CheckResult:
    if not path:
        return False, f"no {what} given"
    if not os.path.isfile(path):
        return False, f"{what} not found: {path}"
    return True, None


def check_writable_dir(path: Optional[str]) -> CheckResult:
    """The directory exists and is writable, or can be created"""
    if not path:
        return False, "no output directory given"
    target = os.path.abspath(path)
    while not os.path.exists(target):
        parent = os.path.dirname(target)
        if parent == target:
            break
        target = parent
    if not os.path.isdir(target):
        return False, f"output path is not a directory: {path}"
    if not os.access(target, os.W_OK):
        return False, f"output directory is not writable: {path}"
    return True, None

"""
Error handling utilities for the czleak toolkit and its CLI.
"""

import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional


class ToolkitError(Exception):
    """Base exception for toolkit errors."""
    exit_code = 1


class InputError(ToolkitError):
    """Exception raised for bad user input (exit code 2)."""
    exit_code = 2


class ValidationError(InputError):
    """Exception raised when a config or parameter violates an invariant."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class MissingFileError(InputError):
    """Exception raised when an input file is not found."""
    pass


class MalformedDataError(InputError):
    """Exception raised when an input CSV/JSON/YAML file cannot be parsed."""
    pass


class SingularMatrixError(InputError):
    """Exception raised when a crosstalk matrix cannot be inverted reliably."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class NoOffPointError(InputError):
    """Exception raised when g_BD has no sign change inside the search window."""

    def __init__(self, message: str, bracket: Optional[tuple] = None):
        super().__init__(message)
        self.bracket = bracket


class NumericalError(ToolkitError):
    """Exception raised when a numerical procedure fails (exit code 1)."""
    exit_code = 1


class SWDivergenceError(NumericalError):
    """Exception raised when a Schrieffer-Wolff denominator enters the guard band."""

    def __init__(self, message: str, denominator: str = "", value: float = 0.0):
        super().__init__(message)
        self.denominator = denominator
        self.value = value


class DegenerateFrameError(NumericalError):
    """Exception raised when the bright/dark rotation angle is undefined."""
    pass


class IntegrationError(NumericalError):
    """Exception raised when the propagator cannot meet its tolerance."""
    pass


class FitError(NumericalError):
    """Exception raised when a fit does not converge."""

    def __init__(self, message: str, best_so_far: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.best_so_far = best_so_far or {}


def validate_file_path(file_path: str) -> Path:
    """
    Validate file path and return Path object.

    Args:
        file_path: Path to validate

    Returns:
        Path object

    Raises:
        MissingFileError: If file doesn't exist
        ValidationError: If path is not a file
    """
    path = Path(file_path)

    if not path.exists():
        raise MissingFileError(f"File not found: {file_path}")

    if not path.is_file():
        raise ValidationError(f"Path is not a file: {file_path}")

    return path


def validate_output_dir(output_dir: str) -> Path:
    """
    Validate output directory and create it if needed.

    Args:
        output_dir: Directory to validate

    Returns:
        Path object

    Raises:
        InputError: If the directory cannot be created
    """
    path = Path(output_dir)

    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"Cannot create output directory {path}: {e}")

    return path


def validate_format(format_name: str) -> str:
    """
    Validate report format.

    Args:
        format_name: Format name to validate

    Returns:
        Validated format name

    Raises:
        ValidationError: If format is not supported
    """
    supported_formats = ['json', 'yaml']

    if format_name not in supported_formats:
        raise ValidationError(f"Unsupported format: {format_name}. Supported formats: {', '.join(supported_formats)}")

    return format_name


def handle_cli_error(error: Exception, exit_code: Optional[int] = None) -> None:
    """
    Handle CLI error and exit with appropriate code.

    Args:
        error: Exception to handle
        exit_code: Exit code to use; defaults to the error's own code, 1 otherwise
    """
    if exit_code is None:
        exit_code = getattr(error, "exit_code", 1)
    print(f"Error: {error}", file=sys.stderr)
    sys.exit(exit_code)


def print_warnings(warnings: Iterable[str]) -> None:
    """
    Print warnings if any.

    Args:
        warnings: Warning messages
    """
    warnings = list(warnings)
    if warnings:
        print(f"\nWarning: {len(warnings)} warnings occurred during processing:", file=sys.stderr)
        for warning in warnings:
            print(f"  - {warning}", file=sys.stderr)

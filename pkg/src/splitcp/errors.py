"""Exception types shared across the package."""

from __future__ import annotations


class InputError(ValueError):
    """Invalid data or argument values supplied by the caller."""


class ConfigurationError(ValueError):
    """Unknown identifier or unsupported option."""


class ParseError(InputError):
    """Malformed file content.

    Every instance carries a location: ``row``/``column`` (1-based) for
    text tables, or ``json_path`` for JSON documents.
    """

    def __init__(
        self,
        message: str,
        *,
        row: int | None = None,
        column: int | None = None,
        json_path: str | None = None,
    ) -> None:
        self.row = row
        self.column = column
        self.json_path = json_path
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if json_path is not None:
            where.append(json_path)
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class FormatVersionError(ParseError):
    """Document declares a format_version this library does not support."""

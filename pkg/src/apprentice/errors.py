"""Exception types shared across the package.

Two failure families matter to callers (and map to CLI exit codes): bad
inputs/configuration, and numerical procedures that did not converge. The
latter carries a diagnostics dict so the caller can dump it next to the run
outputs instead of losing the final residuals in a traceback.
"""

from __future__ import annotations

from typing import Any


class ConfigurationError(ValueError):
    """Invalid input, option, or structural precondition (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """An iterative routine failed to converge (CLI exit code 3).

    Attributes
    ----------
    diagnostics:
        Free-form picture of the failure state: final residuals, iteration
        counts, step sizes — whatever the failing routine had at hand.
    """

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics) if diagnostics else {}

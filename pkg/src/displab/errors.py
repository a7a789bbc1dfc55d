"""Error taxonomy shared across the harness.

Operation-level contract violations raise ValueError (dimension
mismatches, out-of-range fractions, degenerate inputs). InputError marks
bad manifests/configs/files and maps to CLI exit code 2; ProviderError
marks a failed embedding-provider exchange and maps to exit code 3.
"""


class InputError(ValueError):
    """Invalid manifest, config, or input file."""


class ProviderError(RuntimeError):
    """The external embedding provider failed to serve a request."""

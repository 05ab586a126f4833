"""Operational shell: bundle loading, sessions, HTTP API and CLI."""

from .platform import (
    BundleError,
    InvalidAnswerError,
    PlatformService,
    PlatformState,
    Session,
    UnknownKbError,
    UnknownSessionError,
    load_bundle,
    load_bundle_dir,
)

__all__ = [
    "BundleError",
    "InvalidAnswerError",
    "PlatformService",
    "PlatformState",
    "Session",
    "UnknownKbError",
    "UnknownSessionError",
    "load_bundle",
    "load_bundle_dir",
]

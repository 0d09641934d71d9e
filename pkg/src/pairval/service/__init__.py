"""CLI entry points and the HTTP labeling service."""

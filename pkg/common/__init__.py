"""Shared instrumentation."""

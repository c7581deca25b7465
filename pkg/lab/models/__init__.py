"""Pydantic schemas for experiment configs, reports and run manifests."""

"""Pydantic models: numerical configuration, requests and reports."""

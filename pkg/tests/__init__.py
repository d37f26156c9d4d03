"""Test package for WFForge."""

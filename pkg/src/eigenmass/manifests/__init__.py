"""Canned experiment manifests, one per acceptance criterion."""

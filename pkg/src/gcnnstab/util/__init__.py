"""Utility modules for random streams, parallel maps and result storage."""

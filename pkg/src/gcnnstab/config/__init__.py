"""Configuration module for gcnnstab."""

"""Experiment tools: datasets, training, accuracy studies, sweeps and the self-test."""

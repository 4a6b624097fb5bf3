"""Graph, filter, perturbation, GCNN and stability primitives."""

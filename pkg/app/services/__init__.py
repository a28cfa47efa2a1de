"""Service layer: the memory engine's operations, one module per concern."""

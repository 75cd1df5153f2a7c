# Shared utilities: logging, exceptions, seed derivation

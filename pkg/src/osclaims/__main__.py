"""Module entry point for ``python -m osclaims``."""

from .cli import main

main()

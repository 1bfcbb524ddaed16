"""python -m m3gm delegates to the CLI entry point."""

from .cli import main

main()

"""Module execution hook: `python -m odosim` behaves like the `odo` script."""

from .cli import main

main()

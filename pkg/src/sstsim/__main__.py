"""Main entry point for sstsim package."""

from .cli import main

if __name__ == "__main__":
    main()

"""CTOQW Spectral - Entry point for direct Python execution."""

from ctoqw_spectral.cli import main

if __name__ == "__main__":
    main()

"""Command-line interface and plotting."""

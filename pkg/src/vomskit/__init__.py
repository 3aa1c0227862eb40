"""VO membership, attribute issuance and site-side enforcement toolkit."""

__version__ = "0.1.0"

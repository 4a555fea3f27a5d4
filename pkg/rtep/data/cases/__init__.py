"""Bundled case documents (TOML)"""

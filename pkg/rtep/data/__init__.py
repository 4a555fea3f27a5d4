"""Bundled data for rtep"""

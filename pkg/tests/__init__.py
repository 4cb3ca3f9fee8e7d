"""
Tests package for the DPPMC library.
"""

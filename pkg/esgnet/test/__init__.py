"""
esgnet tests
"""

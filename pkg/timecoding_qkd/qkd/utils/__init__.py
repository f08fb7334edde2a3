"""
Utility modules for the qkd app.
"""

"""
Top level module. Nothing special here.
"""

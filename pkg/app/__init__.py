"""
App Package
Contains the command-line interface.
"""

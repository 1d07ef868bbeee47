"""
Evaluation Package
Contains the pytest suites and the acceptance runner.
"""

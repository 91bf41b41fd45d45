"""
Command package
One class per command-line subcommand
"""

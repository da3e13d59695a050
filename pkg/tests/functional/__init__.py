"""End-to-end tests of the dampwave command line.

These run complete commands on small Galerkin systems and inspect the printed
summaries, exit codes and output files.
"""

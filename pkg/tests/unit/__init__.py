# This file marks the unit test directory as a Python package.

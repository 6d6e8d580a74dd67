# This file marks the integration test directory as a Python package.

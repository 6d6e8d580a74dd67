# Tests directory

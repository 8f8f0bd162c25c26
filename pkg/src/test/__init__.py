# This file makes src/test a Python package.

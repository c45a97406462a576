# -*- coding: utf-8 -*-

"""
The UI for tumorseg is implemented in this package.
Currently, only a cli is provided.
"""

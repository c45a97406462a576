# -*- coding: utf-8 -*-

"""
Module containing the tests for tumorseg.seglib
"""
from . import context

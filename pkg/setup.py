# !/usr/bin/env python
# -*- coding: utf-8 -*-

"""
setuptools script for tumorseg
"""
import os
import sys

from setuptools import setup, find_packages

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import tumorseg

with open("README.md") as readme_file:
    readme = readme_file.read()

requirements = [
    "numpy>=1.22",
    "scipy>=1.8",
    "pandas>=1.4",
]

test_requirements = [
    "jsonschema>=4.0",
]

setup(
    name="tumorseg",
    version=tumorseg.__version__,
    description="A from-scratch 3D brain tumor segmentation network with attention gates and multiscale attention",
    long_description=readme,
    author=tumorseg.__author__,
    author_email=tumorseg.__email__,
    packages=find_packages(exclude=["tests"]),
    package_data={"tumorseg": ["schemas/*.schema.json"]},
    install_requires=requirements,
    tests_require=test_requirements,
    extras_require={"test": test_requirements},
    license="MIT license",
    zip_safe=False,
    keywords="segmentation",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.9"
    ],
    test_suite="tests",
    include_package_data=True,
)

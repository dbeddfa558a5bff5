#!/usr/bin/env python

import io
import os

from setuptools import setup

# Use README.md to set markdown long_description
directory = os.path.abspath(os.path.dirname(__file__))
readme_path = os.path.join(directory, "README.md")
with io.open(readme_path, encoding="utf-8") as read_file:
    long_description = read_file.read()

setup(
    name="cimguard",
    version="0.1.0",
    description="Security simulator for eNVM compute-in-memory accelerators",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["cimguard"],
    package_dir={"": "src"},
    license="MIT",
    python_requires=">=3.8",
    classifiers=[
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering",
    ],
    install_requires=["numpy>=1.17", "scipy>=1.4"],
    entry_points={"console_scripts": ["cimguard=cimguard.cli:main"]},
)

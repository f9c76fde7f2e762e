import os
import setuptools
from pathlib import Path
from time import time

setuptools.setup(
    name="elgof",
    version=os.environ.get("RELEASE_VERSION") if os.environ.get("RELEASE_VERSION") not in (None, "main") else f"0.1.0.dev{int(time())}",
    description="Empirical likelihood goodness-of-fit tests for multiresponse regression models.",
    long_description=Path("README.md").read_text(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    packages=setuptools.find_packages(include=['src', 'src.*']),
    python_requires=">=3.8",
    install_requires=Path("requirements.txt").read_text().split("\n")[:-1],
    entry_points={"console_scripts": ["elgof=src.elgof:main"]},
)

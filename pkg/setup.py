from setuptools import setup, find_packages

with open("requirements.txt") as f:
    install_requires = [line for line in f.read().strip().split("\n") if line and not line.startswith("#")]

# Get version from __version__ variable in medbounds/__init__.py
from medbounds import __version__ as version

setup(
    name="medbounds",
    version=version,
    description="Entropy-ball bounds on natural direct and indirect effects",
    author="medbounds developers",
    packages=find_packages(exclude=["tests", "tests.*"]),
    zip_safe=False,
    include_package_data=True,
    install_requires=install_requires,
    extras_require={"test": ["pytest>=7.0", "statsmodels>=0.14"]},
    entry_points={"console_scripts": ["medbounds = medbounds.cli:main"]},
    python_requires=">=3.9",
)

from setuptools import setup, find_packages

setup(
    name="mope",
    version="0.1",
    packages=find_packages(include=["mope", "mope.*", "database"]),
    install_requires=[
        "numpy>=1.22",
        "sqlalchemy>=1.4.0",
        "pandas>=1.3.0",
        "plotly>=5.3.0",
        "tqdm>=4.60",
    ],
    extras_require={"test": ["pytest>=7.0"]},
    entry_points={"console_scripts": ["mope = mope.cli:main"]},
)

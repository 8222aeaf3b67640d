from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="polarscaling",
    version="0.1.0",
    description="Scaling analysis of q-ary polar codes on erasure channels",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["sources"],
    py_modules=["cli"],
    include_package_data=True,
    install_requires=[
        "numpy>=1.24.4",
        "scipy>=1.9.3",
        "galois>=0.3.8",
        "pydantic>=2.10.6",
        "termcolor>=2.4.0",
        "python-dotenv>=1.0.0",
        "tqdm>4",
    ],
    extras_require={
        "test": [
            "hypothesis>=6.100",
        ],
    },
    entry_points={
        "console_scripts": [
            "polarscaling=cli:main",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
)

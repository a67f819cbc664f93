from setuptools import setup, find_packages


VERSION = "0.3.0"


def readme():
    with open("README.rst", encoding="utf-8") as f:
        return f.read()


setup(
    name="foresight-afford",
    version=VERSION,
    description="Learn dense pick-and-place affordances with foresight for deformable object manipulation.",
    long_description=readme(),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.8",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    keywords="robotics deformable-objects affordance rope cloth pick-and-place",
    author="The foresight-afford authors",
    license="MIT",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.8",
    install_requires=["numpy>=1.20", "Pillow>=8.0"],
    entry_points={"console_scripts": ["foresight-afford = foresight_afford.cli:run"]},
    test_suite="tests",
    include_package_data=True,
    zip_safe=False,
)

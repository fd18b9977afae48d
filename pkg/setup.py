from setuptools import find_packages, setup

setup(
    name="komatsu_spectral",
    packages=find_packages(where=".", include="komatsu_spectral*"),
    version="0.1.0",
    description="Eigenfunction-expansion diagnostics for Komatsu classes "
    "on compact manifolds.",
    long_description="Coefficient-space characterizations of "
    "ultradifferentiable classes, their duals and operator tensors on "
    "the circle, the flat 2-torus and the 2-sphere, with Ray-parallel "
    "tensor assembly.",
    install_requires=["numpy", "scipy", "ray", "fsspec"],
    entry_points={
        "console_scripts": ["komatsu=komatsu_spectral.cli:main"],
    })

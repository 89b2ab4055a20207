import setuptools
import os

pkg_name = 'nightNeRF'
here = os.path.abspath(os.path.dirname(__file__))
with open(os.path.join(here, pkg_name, "version.py"), "r") as f:
    for line in f.readlines():
        if line.startswith("__version__"):
            version = line.split("'")[1]
            break

with open('README_PyPI.md', 'r') as fh:
    long_description = fh.read()

setuptools.setup(
    name=pkg_name,
    version=version,
    author='The nightNeRF developers',
    description='Radiance fields from low-light, shaky and noisy photographs',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=setuptools.find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    classifiers=[
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Operating System :: OS Independent',
    ],
    keywords='nerf radiance-field low-light deblurring denoising',
    install_requires=[
        'traits>=6.2.0',
        'numpy>=1.21.1',
        'matplotlib>=3.4.2',
        'scipy>=1.7.0',
        'imageio>=2.9.0',
        'tqdm>=4.60.0',
    ],
    extras_require = {
        'test': [
            "pytest>=7.0.0"
        ]
    },
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'nightnerf = nightNeRF.__main__:main',
        ],
    },
)

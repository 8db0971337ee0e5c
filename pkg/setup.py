#!/usr/bin/env python

from setuptools import setup

setup(
    name="SDE Path Gen",
    version="1.0.0",
    description="Diffusion-model generation of SDE sample paths, with KL evaluation and mean-variance portfolio experiments",
    install_requires=['numpy', 'scipy'],
    extras_require={'tests': ['pytest', 'hypothesis']},
    tests_require=['pytest', 'hypothesis'],
    packages=['sde_core', 'tools', 'scripts'],
    include_package_data=True,
    entry_points={'console_scripts': [
        'sde_gen=sde_core.sde_gen:main',
        'sde_path_convert=tools.path_convert:main',
        'sde_report_stats=scripts.report_stats:main',
    ]},
)

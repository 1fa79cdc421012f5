"""
MitLindblad setup script
Installs the simulator package and its command-line entry point
"""

from setuptools import setup

setup(
    name='mitlindblad',
    version='1.0.0',
    description='Continuous-time quantum error mitigation with engineered ancilla dissipation',
    packages=['src'],
    py_modules=['main'],
    python_requires='>=3.9',
    install_requires=[
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'matplotlib>=3.7.0',
    ],
    extras_require={
        'test': ['pytest>=7.0.0', 'hypothesis>=6.80.0'],
    },
    entry_points={
        'console_scripts': ['mitlindblad=main:main'],
    },
)

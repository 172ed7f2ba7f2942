from setuptools import find_packages
from setuptools import setup
import re

with open('README.md') as f:
    readme = f.read()

with open('pylifestyles/__init__.py') as f:
    version = re.search(r"'pylifestyles': '([^']+)'", f.read()).group(1)

setup(
    name='pylifestyles',
    version=version,
    description='Shopping and mobility lifestyles from call and card records by collective matrix factorization',
    long_description_content_type='text/markdown',
    long_description=readme,
    author='pylifestyles developers',
    license='MIT',
    packages=find_packages(exclude=('tests', 'docs')),
    install_requires=[
        'numpy>=1.21',
        'scipy>=1.7',
        'pandas>=2.0',
        'scikit-learn>=1.0',
        'numba>=0.55',
        'joblib>=1.1',
        'requests>=2.25',
    ],
    extras_require={
        'fast-json': ['ujson'],
        'test'     : ['pytest'],
    },
    entry_points={
        'console_scripts': ['pylifestyles=pylifestyles.cli:main'],
    },
    setup_requires=['wheel'],
    python_requires='>=3.8',
)

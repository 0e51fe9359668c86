#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""The setup script."""
import os

from setuptools import setup, find_packages

readme_path = 'README.md'
if os.path.isfile('README.rst'):
    readme_path = 'README.rst'
with open(readme_path) as readme_file:
    readme = readme_file.read()

with open('requirements.txt') as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith('#')]

test_requirements = [
    'pytest',
]

setup(
    name='marketguard',
    version='0.1.0',
    description="Detect fraudulent marketplace sellers with rules, reputation data, expert inputs and an SVM",
    long_description=readme,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    entry_points={
        'console_scripts': [
            'marketguard=marketguard.marketguard:main'
        ]
    },
    include_package_data=True,
    install_requires=requirements,
    license="Apache Software License 2.0",
    python_requires='>=3.7',
    zip_safe=False,
    keywords='marketplace fraud svm smo',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Developers',
        'License :: OSI Approved :: Apache Software License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
    ],
    test_suite='tests',
    tests_require=test_requirements,
)

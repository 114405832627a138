import os

try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup


def get_long_description():
    path = os.path.join(os.path.dirname(__file__), 'README.md')
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


setup(
    name='mgt',
    version='0.1.0',
    license='Apache-2.0',
    description='Multiresolution graph transformer with wavelet positional encodings',
    packages=[
        'mgt',
    ],
    long_description=get_long_description(),
    long_description_content_type='text/markdown',
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.24',
    ],
    extras_require={
        'test': ['pytest>=7'],
    },
    entry_points={
        'console_scripts': [
            'mgt = mgt.cli:run',
        ]
    },
    classifiers=[  # source: https://pypi.org/classifiers/
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ]
)

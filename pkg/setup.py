from setuptools import setup


def read(file_to_read):
    with open(file_to_read, 'r') as f:
        return f.read()


version = '0.1.0'


setup(
    name='dlrgrid',
    version=version,
    zip_safe=False,
    packages=['dlrgrid'],
    package_data={
        'dlrgrid': [
            'data/six_bus/*.csv',
            'data/six_bus/*.json'
        ]
    },
    include_package_data=True,
    description='Probabilistic day-ahead dynamic line rating forecasts with a line-graph convolutional LSTM,'
                ' evaluated in two-stage day-ahead/real-time grid operation.',
    license='MIT',
    long_description=read('README.rst'),
    install_requires=['numpy>=1.21', 'scipy>=1.7', 'pandas>=1.3', 'networkx>=2.6'],
    entry_points={
        'console_scripts': ['dlrgrid=dlrgrid.cli:main'],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8'
)

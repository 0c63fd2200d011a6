from setuptools import find_packages, setup


setup(
    name='clubforest',
    author='Tischfield Lab',
    description='Clustering-based pruning of random forest ensembles (CLUB-DRF)',
    version='0.1.0',
    license='MIT License',
    install_requires=[
        'click',
        'click-option-group',
        'joblib',
        'numpy',
        'pandas>=1.5',
        'ruamel.yaml',
        'scikit-learn',
        'scipy',
        'tqdm',
    ],
    extras_require={
        'dev': [
            'pytest',
            'pytest-pep8',
            'pytest-cov',
        ]
    },
    python_requires='>=3.8',
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    include_package_data=True,
    entry_points={
        'console_scripts': [
            'clubforest = clubforest.cli:cli',
            'club-drf = clubforest.cli:cli'
        ],
    }
)

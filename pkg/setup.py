from setuptools import setup, find_packages

setup(
    name='boRank',
    version='0.1.0',
    license='GPL v3.0',
    description="Bayesian-optimisation document retrieval with LLM relevance feedback",
    long_description="boRank package/CLI to rank a corpus by a Gaussian-process relevance posterior that is "
                     "actively refined with batched graded-relevance judgments",
    packages=find_packages(exclude=['tests']),
    install_requires=['numpy', 'scipy', 'tqdm', 'matplotlib', 'natsort', 'psutil', 'requests', 'backoff'],
    extras_require={'tests': ['pytest', 'hypothesis']},
    entry_points={'console_scripts': ['borank=boRank.cli:main']},
    python_requires='>=3.8',
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Operating System :: OS Independent"]
)

import os
import re

from setuptools import setup

PACKAGE = 'learnlu'


def readme():
    with open('README.rst') as f:
        return f.read()


def get_version_str():
    "The `__version__` string of learnlu/version.py, without importing it."
    with open(os.path.join(PACKAGE, 'version.py')) as f:
        match = re.search(r"__version__\s*=\s*['\"]([^'\"]+)['\"]", f.read())
    if match is None:
        raise RuntimeError("no __version__ in %s/version.py" % PACKAGE)
    return match.group(1)


setup(name=PACKAGE,
      version=get_version_str(),
      description=(
          'Learned incomplete LU preconditioners for GMRES, with the '
          'sparse kernels, Krylov solver and spectral diagnostics they need'
      ),
      long_description=readme(),
      classifiers=[
          'Development Status :: 3 - Alpha',
          'License :: OSI Approved :: MIT License',
          'Programming Language :: Python :: 3.10',
          'Programming Language :: Python :: 3.11',
          'Topic :: Scientific/Engineering :: Mathematics',
      ],
      keywords='gmres preconditioner ilu sparse graph-neural-network',
      license='MIT',
      packages=[PACKAGE, PACKAGE + '.tests'],
      python_requires='>=3.8',
      install_requires=['numpy', 'scipy', 'matplotlib', 'pyyaml',
                        'wrapt>=1.10.8', 'fire'],
      tests_require=['pytest', 'hypothesis'],
      entry_points={
          'console_scripts': ['learnlu = learnlu.cli:main'],
      },
      include_package_data=True,
      zip_safe=False)

from setuptools import setup

package_name = 'block_jacobi_gmres'

setup(
    name=package_name,
    version='0.1.0',
    packages=[package_name],
    install_requires=['setuptools', 'numpy', 'scipy'],
    python_requires='>=3.8',
    zip_safe=True,
    description='Hybrid-precision block-Jacobi preconditioned restarted GMRES for large sparse linear systems.',
    license='Mozilla Public License 2.0',
    tests_require=['pytest'],
    entry_points={
        'console_scripts': [
            'block-jacobi-gmres = block_jacobi_gmres.cli:main',
        ],
    },
)

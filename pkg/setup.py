# Copyright 2026 senscen authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import re

from setuptools import find_packages, setup


def readme():
    with open("README.md", "r") as ip:
        return ip.read()


def version():
    with open("senscen/_version.py", "r") as ip:
        return re.search(r'__version__ = "([^"]+)"', ip.read()).group(1)


setup(
    name="senscen",
    version=version(),
    description="Representative scenario selection for clinical trial sensitivity analyses",
    long_description=readme(),
    long_description_content_type="text/markdown",
    author="senscen authors",
    license="Apache License, Version 2.0",
    classifiers=["Programming Language :: Python :: 3"],
    packages=find_packages(),
    python_requires=">=3.8",
    install_requires=["click", "tqdm", "pyyaml", "numpy", "scipy", "pandas"],
    extras_require={"test": ["pytest"], "docs": ["sphinx", "sphinx-click"]},
    entry_points={"console_scripts": ["senscen = senscen.cli:cli"]},
)

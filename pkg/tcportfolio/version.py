# Based on: https://github.com/Changaco/version.py

import os
import re
from subprocess import CalledProcessError, check_output

NAME = 'tcportfolio'
PREFIX = 'v'
FALLBACK = '0.1.0'

tag_re = re.compile(rf'\btag: {PREFIX}([0-9][^,]*)\b')


def get_version():
    """
    Package version, from an archive tag, from ``git describe`` or from installed metadata.
    """
    version = tag_re.search('$Format:%D$')
    if version:
        return version.group(1)

    package_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

    if os.path.isdir(os.path.join(package_dir, '.git')):
        version_cmd = 'git describe --tags --abbrev=0'
        release_cmd = 'git rev-list HEAD ^$(git describe --abbrev=0) | wc -l'
        try:
            version = check_output(version_cmd, shell=True, cwd=package_dir).decode().strip()
            release = check_output(release_cmd, shell=True, cwd=package_dir).decode().strip()
            return f'{version}.{release}'.strip(PREFIX)
        except CalledProcessError:
            return FALLBACK

    try:
        from importlib import metadata
    except ImportError:
        # Running on pre-3.8 Python; use importlib-metadata package
        import importlib_metadata as metadata

    try:
        return metadata.version(NAME)
    except metadata.PackageNotFoundError:
        return FALLBACK

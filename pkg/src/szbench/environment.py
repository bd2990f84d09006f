"""
Gathering information of the environment the
code is running. The result is embedded into run summaries and score
reports so that numbers can be traced back to a machine and a revision.
"""
import platform
import socket
import subprocess
import sys
import typing
from importlib import metadata
from pathlib import Path

__cached: typing.Optional[dict] = None

_TRACKED_PACKAGES = ("SzBench", "numpy", "scipy", "pandas", "joblib", "PyYAML")


def get_git_revision() -> typing.Optional[str]:
    """
    Return the git revision of the current working directory.
    """
    try:
        label = (
            subprocess.check_output(
                ["git", "rev-parse", "HEAD"], stderr=subprocess.DEVNULL
            )
            .strip()
            .decode("ascii")
        )
    except (subprocess.CalledProcessError, OSError):
        label = None
    return label


def get_package_versions() -> typing.Dict[str, typing.Optional[str]]:
    """
    Versions of the packages the numbers depend on. ``None`` if a package
    is not installed as a distribution (e.g. running from a source tree).
    """
    versions: typing.Dict[str, typing.Optional[str]] = {}
    for name in _TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def get_environment_info(cached=True) -> dict:
    """
    Returns information on the environment the code is running.
    The returned dictionary is JSON-serializable.
    """
    global __cached
    if cached and __cached:
        return __cached
    __cached = {
        "hostname": socket.gethostname(),
        "platform": platform.platform(),
        "python_version": sys.version,
        "python": sys.executable,
        "cwd": str(Path.cwd()),
        "git_revision": get_git_revision(),
        "packages": get_package_versions(),
    }
    return __cached

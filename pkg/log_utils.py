import logging
from importlib.metadata import version, PackageNotFoundError

LIBRARIES = ("numpy", "scipy", "marshmallow", "gevent")

def library_versions():
    versions = {}
    for name in LIBRARIES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "missing"
    return versions

def log_library_versions(logger):
    for name, ver in library_versions().items():
        logger.info('%s version: %s', name, ver)

def setup_logging(logger, level):
    # setup logging
    logger.setLevel(level)
    ch = logging.StreamHandler()
    ch.setLevel(level)
    ch.setFormatter(logging.Formatter('[%(name)s %(levelname)s] %(message)s'))
    logger.addHandler(ch)
    # clear loggers set by any imported modules
    logging.getLogger().handlers.clear()
    return ch

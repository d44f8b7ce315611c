import logging
import unittest
from unittest import mock
from importlib.metadata import PackageNotFoundError

import log_utils

class LogUtilsTest(unittest.TestCase):

    def test_library_versions(self):
        versions = log_utils.library_versions()
        self.assertEqual(sorted(versions), sorted(log_utils.LIBRARIES))
        self.assertNotEqual(versions["numpy"], "missing")

    def test_missing_library(self):
        with mock.patch("log_utils.version", side_effect=PackageNotFoundError):
            self.assertEqual(set(log_utils.library_versions().values()), {"missing"})

    def test_setup_logging(self):
        logger = logging.getLogger("log_utils_test")
        self.addCleanup(logger.handlers.clear)
        handler = log_utils.setup_logging(logger, logging.WARNING)
        self.assertIn(handler, logger.handlers)
        self.assertEqual(handler.level, logging.WARNING)
        self.assertEqual(logger.level, logging.WARNING)

if __name__ == '__main__':
    unittest.main()

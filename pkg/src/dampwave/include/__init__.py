import os

PACKAGE_PATH = os.path.dirname(__file__)
SAMPLE_CONFIG = os.path.join(PACKAGE_PATH, "sample_config.yml")

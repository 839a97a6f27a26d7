import os


PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_FILE = os.path.join(PROJECT_ROOT, "pipeline_config.json")
DEFAULT_OUTPUT_DIR = os.path.join(PROJECT_ROOT, "output")
THREADS_ENV = "SEGQ_THREADS"

import os
import glob
from dotenv import load_dotenv

load_dotenv()


class Config:
    def __init__(self):
        # Seeding and parallel chains
        self.CLDA_SEED = int(os.getenv("CLDA_SEED", "1983"))
        self.CLDA_CHAINS = int(os.getenv("CLDA_CHAINS", "1"))

        # Logging
        self.CLDA_LOG_LEVEL = os.getenv("CLDA_LOG_LEVEL", "INFO").upper()

        # MMALA step size used when neither the config file nor --epsilon set one
        self.CLDA_EPSILON = float(os.getenv("CLDA_EPSILON", "0.01"))

        # Held-out split
        self.CLDA_DOC_FRACTION = float(os.getenv("CLDA_DOC_FRACTION", "0.2"))
        self.CLDA_WORD_FRACTION = float(os.getenv("CLDA_WORD_FRACTION", "0.5"))

        # Evaluation / export
        self.CLDA_TOP_M = int(os.getenv("CLDA_TOP_M", "20"))
        self.CLDA_MAX_LAG = int(os.getenv("CLDA_MAX_LAG", "50"))
        self.CLDA_REGION_THRESHOLD = float(os.getenv("CLDA_REGION_THRESHOLD", "0.07"))

        # Named stopword lists
        self.CLDA_STOPWORDS_DIRECTORY = os.getenv(
            "CLDA_STOPWORDS_DIRECTORY", "stopwords"
        )

    def get_algorithms(self):
        algorithms = []
        package_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), "inference")
        for algorithm in sorted(glob.glob(os.path.join(package_dir, "*.py"))):
            if "__init__.py" not in algorithm:
                algorithms.append(os.path.splitext(os.path.basename(algorithm))[0])
        return algorithms

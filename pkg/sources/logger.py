import os
import logging

LOG_FOLDER = os.getenv("POLAR_LOG_DIR", ".logs")

class Logger:
    """
    File logger shared by the computation modules.
    Each module writes to its own file under the log folder, e.g. .logs/lyapunov.log
    """
    def __init__(self, log_filename: str, level: int = logging.DEBUG):
        self.folder = LOG_FOLDER
        self.enabled = self.create_folder(self.folder)
        self.log_path = os.path.join(self.folder, log_filename)
        self.logger = None
        self.last_log_msg = ""
        if self.enabled:
            self.create_logging(log_filename, level)

    def create_logging(self, log_filename: str, level: int) -> None:
        self.logger = logging.getLogger(f"polarscaling.{log_filename}")
        self.logger.setLevel(level)
        self.logger.handlers.clear()
        self.logger.propagate = False
        try:
            file_handler = logging.FileHandler(self.log_path)
        except OSError:
            self.enabled = False
            return
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        file_handler.setFormatter(formatter)
        self.logger.addHandler(file_handler)

    def create_folder(self, path: str) -> bool:
        """Create log dir"""
        try:
            if not os.path.exists(path):
                os.makedirs(path, exist_ok=True)
            return True
        except Exception:
            return False

    def log(self, message: str, level: int = logging.INFO) -> None:
        if self.last_log_msg == message:
            return
        if self.enabled:
            self.last_log_msg = message
            self.logger.log(level, message)

    def debug(self, message: str) -> None:
        self.log(message, level=logging.DEBUG)

    def info(self, message: str) -> None:
        self.log(message)

    def error(self, message: str) -> None:
        self.log(message, level=logging.ERROR)

    def warning(self, message: str) -> None:
        self.log(message, level=logging.WARNING)

# utils.py - Shared Utility Functions (logging, errors, retries, files)

import os
import re
import sys
import time
import logging
import functools
from pathlib import Path

# ─── LOGGING SETUP ──────────────────────────────────────────────────
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

def setup_logging(level="INFO", log_file=None):
    """Configure root logging once for the CLI and scripts"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        ensure_directory_exists(Path(log_file).parent)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return logging.getLogger()

# ─── ERROR HANDLING ─────────────────────────────────────────────────
class ToolkitError(Exception):
    """Base error; carries the CLI exit code and a machine-readable payload"""
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {
            'error': self.message,
            'type': type(self).__name__,
            'exit_code': self.exit_code,
            'details': self.details,
        }


class UsageError(ToolkitError):
    exit_code = 2


class DataError(ToolkitError):
    exit_code = 3


class ModelError(ToolkitError):
    exit_code = 4


class TransportError(ToolkitError):
    exit_code = 5


def log_step_error(step, error, context=""):
    """Log a failed pipeline step"""
    msg = f"{step}: {error}"
    if context:
        msg += f" (Context: {context})"
    logger.error(msg)


def log_step_success(step, detail, count=None):
    """Log a finished pipeline step for monitoring"""
    if count is None:
        logger.info(f"✓ {step} - {detail}")
    else:
        logger.info(f"✓ {step} - {detail}: {count}")

# ─── PERFORMANCE MONITORING ───────────────────────────────────────
def measure_performance(func):
    """Decorator to measure function performance"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        duration = time.perf_counter() - start_time
        logger.info(f"{func.__name__} completed in {duration:.2f} seconds")
        return result
    return wrapper

# ─── RETRY HELPERS ──────────────────────────────────────────────────
def retry_with_backoff(func, max_retries=3, base_delay=1.0, max_delay=60.0,
                       retry_on=(Exception,), sleep=time.sleep):
    """Retry function with exponential backoff.

    Only exceptions listed in ``retry_on`` trigger another attempt; the last
    failure is re-raised unchanged.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        for attempt in range(max_retries):
            try:
                return func(*args, **kwargs)
            except retry_on as e:
                if attempt == max_retries - 1:
                    raise
                delay = min(base_delay * (2 ** attempt), max_delay)
                logger.warning(f"Attempt {attempt + 1}/{max_retries} failed, retrying in {delay}s: {e}")
                sleep(delay)
        return None
    return wrapper

# ─── FILE HANDLING UTILITIES ───────────────────────────────────────
def ensure_directory_exists(directory_path):
    """Ensure directory exists, create if necessary"""
    path = Path(directory_path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_output_directory(output_dir):
    """Create and return the run output directory"""
    path = ensure_directory_exists(Path(output_dir).expanduser())
    logger.info(f"Output directory ready: {path}")
    return path


def safe_write_file(filepath, content, encoding='utf-8'):
    """Write a text file, creating parent folders"""
    filepath = Path(filepath)
    ensure_directory_exists(filepath.parent)
    with open(filepath, 'w', encoding=encoding, newline='') as f:
        f.write(content)
    return filepath


def sanitize_filename(filename, max_length=255):
    """Sanitize names for files and workbook sheets"""
    if not filename:
        return "untitled"

    sanitized = re.sub(r'[<>:"/\\|?*\[\]]', '_', str(filename))
    sanitized = sanitized.strip(' .')
    if len(sanitized) > max_length:
        sanitized = sanitized[:max_length]
    return sanitized or "untitled"


def get_file_size_mb(filepath):
    """Get file size in MB"""
    try:
        return os.path.getsize(filepath) / (1024 * 1024)
    except OSError:
        return 0

import sys
import platform
from fractions import Fraction
from typing import Iterable

from termcolor import colored
from tqdm import tqdm

def get_color_map():
    info = "black" if platform.system().lower() == "windows" else "cyan"
    return {"success": "green", "failure": "red", "status": "light_green", "warning": "yellow", "info": info}

def pretty_print(text, color="info", no_newline=False):
    """
    Print human-facing text with color formatting to stderr.
    Machine-readable output (JSON, CSV) must not go through this function.

    Args:
        text (str): The text to print
        color (str, optional): One of success, failure, status, warning, info.
    """
    color_map = get_color_map()
    if color not in color_map:
        color = "info"
    print(colored(text, color_map[color]), end='' if no_newline else "\n", file=sys.stderr)

def format_real(value: float, digits: int = 12) -> str:
    """Locale-free real formatting with a fixed number of significant digits."""
    return f"{float(value):.{digits}g}"

def format_rational(value) -> str:
    """Exact rationals as num/den in lowest terms; integers stay num/1."""
    frac = Fraction(value)
    return f"{frac.numerator}/{frac.denominator}"

def progress(iterable: Iterable, enabled: bool = False, desc: str = "", total: int | None = None):
    """Wrap an iterable in a tqdm bar on stderr when enabled."""
    if not enabled:
        return iterable
    return tqdm(iterable, desc=desc, total=total, file=sys.stderr, leave=False)

def timer_decorator(func):
    """
    Decorator to measure the execution time of a function.
    The duration goes to the timing log rather than the console.
    """
    from time import perf_counter
    from sources.logger import Logger
    timing_logger = Logger("timing.log")

    def wrapper(*args, **kwargs):
        start_time = perf_counter()
        result = func(*args, **kwargs)
        end_time = perf_counter()
        timing_logger.info(f"{func.__name__} took {end_time - start_time:.3f} seconds to execute")
        return result
    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper

"""文件格式读写"""

from .event_files import read_events, write_events
from .tensor_files import read_tensor, write_tensor
from .benchmark import read_benchmark, write_benchmark

__all__ = [
    "read_events",
    "write_events",
    "read_tensor",
    "write_tensor",
    "read_benchmark",
    "write_benchmark",
]

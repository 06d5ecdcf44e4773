from .async_utils import async_handler, get_event_loop, run_parallel
from .logging_utils import configure_logging

__all__ = ['async_handler', 'get_event_loop', 'run_parallel', 'configure_logging']

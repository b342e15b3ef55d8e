import functools

from solver import InfeasibleError


def soften_on_infeasible(logger=None, exceptions=(InfeasibleError,)):
    """
    Decorator for solves that accept a ``soft`` keyword.

    The wrapped function is first called with soft=False. If it raises one of
    ``exceptions`` the failure is logged and the call repeated once with
    soft=True. A failure of the softened call propagates.

    Args:
        logger (logging.Logger): Optional logger for the warning.
        exceptions (tuple): Exception types that trigger the softened retry.
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            kwargs.pop("soft", None)
            try:
                return func(*args, soft=False, **kwargs)
            except exceptions as e:
                msg = f"[{func.__name__}] Hard solve failed: {e}. Retrying with softened constraints..."
                if logger:
                    logger.warning(msg)
                else:
                    print(msg)
                return func(*args, soft=True, **kwargs)
        return wrapper
    return decorator

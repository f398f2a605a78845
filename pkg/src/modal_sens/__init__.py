"""modal_sens: sensitivities of modal characteristics for many parameters."""

__version__ = "0.1.0"
__all__ = ()

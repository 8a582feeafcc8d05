from .manifest import manifest_required

__all__ = ['manifest_required']

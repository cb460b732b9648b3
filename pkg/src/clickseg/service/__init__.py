from .app import AnnotationService, create_app

__all__ = ["AnnotationService", "create_app"]

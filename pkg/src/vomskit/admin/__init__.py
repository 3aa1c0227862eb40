from .client import AdminClient
from .mkgridmap import Directive, MkgridmapConfig, http_userlist_fetcher, mkgridmap_generate
from .service import AdminService

__all__ = ["AdminClient", "AdminService", "Directive", "MkgridmapConfig",
           "http_userlist_fetcher", "mkgridmap_generate"]

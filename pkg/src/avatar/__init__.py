"""The avatar.* namespace.

Only the namespace hook lives here; functionality belongs in subpackages.
"""

__path__ = __import__("pkgutil").extend_path(__path__, __name__)

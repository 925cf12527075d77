"""Exception hierarchy shared by the library and the command line."""


class LorentzOTError(Exception):
    pass


class ChartError(LorentzOTError):
    """An event or a trajectory left the valid coordinate box."""


class ConeError(LorentzOTError, ValueError):
    """A vector is on or outside the cone where a derivative exists."""


class BVPNonconvergence(LorentzOTError):
    """Shooting failed; distinct from a certified ``-inf`` distance."""


class NotChronological(LorentzOTError, ValueError):
    pass


class ConjugatePointError(LorentzOTError):
    """A Jacobi matrix became singular along a worldline."""


class InfeasibleTransport(LorentzOTError):
    pass


class ConstructionError(LorentzOTError):
    """A prescribed potential fails its local convexity requirement."""


class ConfigError(LorentzOTError, ValueError):
    """Invalid experiment configuration."""

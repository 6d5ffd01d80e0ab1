from .arm import ArmDomain, ArmParams

__all__ = ["ArmDomain", "ArmParams", "make_domain"]


def make_domain(name: str, **kwargs):
    if name == "arm":
        return ArmDomain(**kwargs)
    if name == "car":
        from .car import CarDomain

        return CarDomain(**kwargs)
    if name == "tether":
        from .tether import TetherDomain

        return TetherDomain(**kwargs)
    raise ValueError(f"unknown domain {name!r}")

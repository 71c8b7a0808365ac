"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for invalid input or a violated guard, 1 for anything internal.
"""

from __future__ import annotations


class CosseratError(Exception):
    exit_code = 2

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), **self.details}


# so3
class InvalidUnitVector(CosseratError):
    pass


class NotAxisRotation(CosseratError):
    pass


class NotTangent(CosseratError):
    pass


class InvalidConstants(CosseratError):
    pass


# grids and surfaces
class ResolutionTooCoarse(CosseratError):
    pass


class OutsideDomain(CosseratError):
    pass


class DegeneratePatch(CosseratError):
    pass


class FormatError(CosseratError):
    pass


# lifting and degrees
class AmbiguousLift(CosseratError):
    pass


class LiftObstruction(CosseratError):
    pass


class DegreeUnresolved(CosseratError):
    pass


class DegenerateTriangle(CosseratError):
    pass


class ValueNotRegular(CosseratError):
    pass


# constructions
class AntipodalInterpolation(CosseratError):
    pass


class AlphaTooLarge(CosseratError):
    pass


class SegmentTooClose(CosseratError):
    pass


class EpsilonTooLarge(CosseratError):
    pass


class SeparationViolated(CosseratError):
    pass


# minimization
class NumericalBlowup(CosseratError):
    exit_code = 1


class BoundaryMismatch(CosseratError):
    pass


class NoAdmissibleDisc(CosseratError):
    pass


# command line
class InvalidConfig(CosseratError):
    pass
